#include "dyna/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dyna {

using nlohmann::ordered_json;

int RunConfig::day_count() const {
  if (cycles > 0) return cycles;
  return static_cast<int>(std::ceil(1.0 / test_ratio - 1e-9));
}

std::size_t RunConfig::day_size(std::size_t stream_size) const {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(stream_size) * test_ratio - 1e-9));
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (test_ratio != 0.1 && test_ratio != 0.2 && test_ratio != 0.5) fail("test_ratio must be 0.1, 0.2 or 0.5");
  if (cycles < 0) fail("cycles must be non-negative");
  if (bank_capacity < 1) fail("bank_capacity must be at least 1");
  if (day.support_size < 1) fail("support_size must be at least 1");
  if (!(day.beta > 0.0 && day.beta < 1.0)) fail("beta must lie in (0, 1)");
  if (!(day.tau > 0.0)) fail("tau must be positive");
  if (!(day.prompt_lr > 0.0)) fail("prompt_lr must be positive");
  if (!(night.threshold > 0.0 && night.threshold < 1.0)) fail("threshold must lie in (0, 1)");
  if (!(night.alpha >= 0.0 && night.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (night.epochs < 0) fail("night_epochs must be non-negative");
  if (night.batch < 1) fail("night_batch must be at least 1");
  if (!(night.lr >= 0.0)) fail("night_lr must be non-negative");
  if (target != "A" && target != "B") fail("target must be A or B");
}

namespace {

template <typename T>
void take(const ordered_json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

const char* const kKeys[] = {"beta", "bank_capacity", "support_size", "tau", "prompt_lr", "encoder_only_loss",
                             "infer_with_warmup", "threshold", "alpha", "night_epochs", "night_batch", "night_lr",
                             "binarize_pseudo", "bn_momentum", "test_ratio", "cycles", "night_enabled", "target",
                             "checkpoint", "out_dir", "seed"};

}  // namespace

RunConfig config_from_json(const std::string& text, RunConfig cfg) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || item.key() == k;
    if (!known) throw ConfigError("config: unknown key '" + item.key() + "'");
  }
  take(j, "beta", cfg.day.beta);
  take(j, "bank_capacity", cfg.bank_capacity);
  take(j, "support_size", cfg.day.support_size);
  take(j, "tau", cfg.day.tau);
  take(j, "prompt_lr", cfg.day.prompt_lr);
  take(j, "encoder_only_loss", cfg.day.encoder_only_loss);
  take(j, "infer_with_warmup", cfg.day.infer_with_warmup);
  take(j, "threshold", cfg.night.threshold);
  take(j, "alpha", cfg.night.alpha);
  take(j, "night_epochs", cfg.night.epochs);
  take(j, "night_batch", cfg.night.batch);
  take(j, "night_lr", cfg.night.lr);
  take(j, "binarize_pseudo", cfg.night.binarize_pseudo);
  take(j, "bn_momentum", cfg.night.bn_momentum);
  take(j, "test_ratio", cfg.test_ratio);
  take(j, "cycles", cfg.cycles);
  take(j, "night_enabled", cfg.night_enabled);
  take(j, "target", cfg.target);
  take(j, "checkpoint", cfg.checkpoint);
  take(j, "out_dir", cfg.out_dir);
  take(j, "seed", cfg.seed);
  return cfg;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["beta"] = cfg.day.beta;
  j["bank_capacity"] = cfg.bank_capacity;
  j["support_size"] = cfg.day.support_size;
  j["tau"] = cfg.day.tau;
  j["prompt_lr"] = cfg.day.prompt_lr;
  j["encoder_only_loss"] = cfg.day.encoder_only_loss;
  j["infer_with_warmup"] = cfg.day.infer_with_warmup;
  j["threshold"] = cfg.night.threshold;
  j["alpha"] = cfg.night.alpha;
  j["night_epochs"] = cfg.night.epochs;
  j["night_batch"] = cfg.night.batch;
  j["night_lr"] = cfg.night.lr;
  j["binarize_pseudo"] = cfg.night.binarize_pseudo;
  j["bn_momentum"] = cfg.night.bn_momentum;
  j["test_ratio"] = cfg.test_ratio;
  j["cycles"] = cfg.cycles;
  j["night_enabled"] = cfg.night_enabled;
  j["target"] = cfg.target;
  j["checkpoint"] = cfg.checkpoint;
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

}  // namespace dyna
