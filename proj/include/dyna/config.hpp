#pragma once

#include <cstdint>
#include <string>

#include "dyna/day_adapter.hpp"
#include "dyna/night_trainer.hpp"

namespace dyna {

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  DayConfig day;
  NightConfig night;
  std::size_t bank_capacity = 40;  // K
  double test_ratio = 0.2;
  // Number of day-night cycles; 0 derives ceil(1 / test_ratio). Cycles past
  // the end of the stream are empty days whose night is skipped.
  int cycles = 0;
  bool night_enabled = true;
  std::string target = "B";
  std::string checkpoint;
  std::string out_dir;
  std::uint64_t seed = 0;

  int day_count() const;
  std::size_t day_size(std::size_t stream_size) const;
  void validate() const;
};

// Throws ConfigError on unknown keys or ill-typed values.
RunConfig config_from_json(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
std::string config_to_json(const RunConfig& cfg);

}  // namespace dyna
