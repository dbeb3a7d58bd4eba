#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyna/config.hpp"
#include "dyna/prompt_bank.hpp"
#include "dyna/sample.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

struct SampleLog {
  std::uint32_t day = 0;
  std::uint64_t index = 0;  // position in the target stream
  double dice_dyna = 0.0;
  double dice_source_only = 0.0;

  bool operator==(const SampleLog&) const = default;
};

struct DeploymentState {
  std::uint64_t cycle = 0;
  SegModelState model;
  MemoryBank bank;
  std::uint64_t counter = 1;  // warm-up index of the next arrival
  std::vector<SampleLog> log;

  bool operator==(const DeploymentState&) const = default;
};

enum class NightStatus { Trained, Skipped, Disabled };

struct DayReport {
  std::uint32_t day = 0;
  std::size_t samples = 0;
  std::optional<double> mean_dice_dyna;
  std::optional<double> mean_dice_source_only;
  NightStatus night = NightStatus::Skipped;
};

struct DeploymentReport {
  RunConfig config;
  std::vector<SampleLog> samples;
  std::vector<DayReport> days;
  double mean_dice_dyna = 0.0;
  double mean_dice_source_only = 0.0;
  // Running-statistics inference of the final and the source model over the whole stream.
  double offline_dice_final = 0.0;
  double offline_dice_source = 0.0;
};

// Day-night loop over `stream`, starting from `source`. The Dice of each
// sample is taken from the prediction made on arrival.
DeploymentReport run_deployment(const RunConfig& cfg, const SegModelState& source,
                                const std::vector<LabeledSample>& stream, DeploymentState* final_state = nullptr);

// Loads cfg.checkpoint and deploys on the configured target stream.
DeploymentReport run_deployment(const RunConfig& cfg, DeploymentState* final_state = nullptr);

std::string report_csv(const DeploymentReport& report);
std::string report_json(const DeploymentReport& report);
// Writes samples.csv and summary.json into directory.
void write_report(const DeploymentReport& report, const std::string& directory);

// "DYNS", u32 version, u64 cycle, u64 counter, u64-length checkpoint blob,
// bank (capacity, next sequence, entries), metric log.
constexpr std::uint32_t kStateVersion = 1;
void save_state(const DeploymentState& state, const std::string& path);
DeploymentState load_state(const std::string& path);

}  // namespace dyna
