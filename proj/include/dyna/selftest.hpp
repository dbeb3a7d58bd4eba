#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dyna {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast invariant suite over every module: spectral identities, gradients,
// schedules, masks, bank retrieval, model averaging and serialization.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 0);

}  // namespace dyna
