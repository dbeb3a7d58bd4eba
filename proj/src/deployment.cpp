#include "dyna/deployment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dyna/day_adapter.hpp"
#include "dyna/domain_synth.hpp"
#include "dyna/metrics.hpp"
#include "dyna/night_trainer.hpp"
#include "dyna/rng.hpp"
#include "json.hpp"

namespace dyna {

namespace {

double mean_of(const std::vector<SampleLog>& log, std::size_t begin, std::size_t end, double SampleLog::*field) {
  double total = 0.0;
  for (std::size_t k = begin; k < end; ++k) total += log[k].*field;
  return total / static_cast<double>(end - begin);
}

const char* night_name(NightStatus s) {
  switch (s) {
    case NightStatus::Trained:
      return "trained";
    case NightStatus::Skipped:
      return "skipped";
    case NightStatus::Disabled:
      return "disabled";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

DeploymentReport run_deployment(const RunConfig& cfg, const SegModelState& source,
                                const std::vector<LabeledSample>& stream, DeploymentState* final_state) {
  cfg.validate();
  if (stream.empty()) throw Error("deployment: empty target stream");

  DeploymentState state;
  state.model = source;
  state.bank = MemoryBank(cfg.bank_capacity);
  WarmupSchedule schedule(cfg.day.tau, state.counter);

  DeploymentReport report;
  report.config = cfg;
  const int days = cfg.day_count();
  const std::size_t per_day = cfg.day_size(stream.size());

  for (int d = 0; d < days; ++d) {
    const std::size_t begin = std::min(stream.size(), static_cast<std::size_t>(d) * per_day);
    const std::size_t end = std::min(stream.size(), begin + per_day);
    const std::size_t log_begin = state.log.size();

    std::vector<DayRecord> records;
    records.reserve(end - begin);
    for (std::size_t j = begin; j < end; ++j) {
      const LabeledSample& sample = stream[j];
      DayRecord rec = adapt_one(state.model, state.bank, schedule, sample.image, cfg.day);
      const double dyna_score = dice(rec.pseudo_label, sample.mask);
      const double source_score = dice(predict(source, sample.image), sample.mask);
      state.log.push_back({static_cast<std::uint32_t>(d), j, dyna_score, source_score});
      records.push_back(std::move(rec));
    }

    DayReport day;
    day.day = static_cast<std::uint32_t>(d);
    day.samples = records.size();
    if (!records.empty()) {
      day.mean_dice_dyna = mean_of(state.log, log_begin, state.log.size(), &SampleLog::dice_dyna);
      day.mean_dice_source_only = mean_of(state.log, log_begin, state.log.size(), &SampleLog::dice_source_only);
    }
    if (records.empty()) {
      day.night = NightStatus::Skipped;
    } else if (!cfg.night_enabled) {
      day.night = NightStatus::Disabled;
    } else {
      state.model = run_night(state.model, records, cfg.night, Rng::mix(cfg.seed, static_cast<std::uint64_t>(d)));
      day.night = NightStatus::Trained;
    }
    report.days.push_back(std::move(day));
    ++state.cycle;
  }
  state.counter = schedule.index();

  report.samples = state.log;
  report.mean_dice_dyna = mean_of(state.log, 0, state.log.size(), &SampleLog::dice_dyna);
  report.mean_dice_source_only = mean_of(state.log, 0, state.log.size(), &SampleLog::dice_source_only);
  report.offline_dice_final = mean_dice(state.model, stream);
  report.offline_dice_source = mean_dice(source, stream);
  if (final_state != nullptr) *final_state = std::move(state);
  return report;
}

DeploymentReport run_deployment(const RunConfig& cfg, DeploymentState* final_state) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("deployment: no checkpoint given");
  if (!std::filesystem::exists(cfg.checkpoint)) throw FormatError("deployment: checkpoint '" + cfg.checkpoint + "' not found");
  const SegModelState source = load_checkpoint(cfg.checkpoint);
  return run_deployment(cfg, source, target_stream(cfg.seed, cfg.target), final_state);
}

std::string report_csv(const DeploymentReport& report) {
  std::string out = "day,index,dice_dyna,dice_source_only\n";
  for (const SampleLog& s : report.samples) {
    out += std::to_string(s.day) + "," + std::to_string(s.index) + "," + format_double(s.dice_dyna) + "," +
           format_double(s.dice_source_only) + "\n";
  }
  return out;
}

std::string report_json(const DeploymentReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = report.config.seed;
  j["config"] = ordered_json::parse(config_to_json(report.config));
  ordered_json days = ordered_json::array();
  for (const DayReport& d : report.days) {
    ordered_json e;
    e["day"] = d.day;
    e["samples"] = d.samples;
    e["mean_dice_dyna"] = d.mean_dice_dyna ? ordered_json(*d.mean_dice_dyna) : ordered_json(nullptr);
    e["mean_dice_source_only"] = d.mean_dice_source_only ? ordered_json(*d.mean_dice_source_only) : ordered_json(nullptr);
    e["night"] = night_name(d.night);
    days.push_back(std::move(e));
  }
  j["days"] = std::move(days);
  ordered_json skipped = ordered_json::array();
  for (const DayReport& d : report.days) {
    if (d.night == NightStatus::Skipped) skipped.push_back(d.day);
  }
  j["skipped_nights"] = std::move(skipped);
  j["samples"] = report.samples.size();
  j["mean_dice_dyna"] = report.mean_dice_dyna;
  j["mean_dice_source_only"] = report.mean_dice_source_only;
  j["offline_dice_final"] = report.offline_dice_final;
  j["offline_dice_source"] = report.offline_dice_source;
  return j.dump(2) + "\n";
}

void write_report(const DeploymentReport& report, const std::string& directory) {
  std::filesystem::create_directories(directory);
  const auto write = [&](const char* name, const std::string& text) {
    const std::string path = (std::filesystem::path(directory) / name).string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw FormatError("failed to write '" + path + "'");
  };
  write("samples.csv", report_csv(report));
  write("summary.json", report_json(report));
}

}  // namespace dyna
