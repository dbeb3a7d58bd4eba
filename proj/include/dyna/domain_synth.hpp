#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyna/sample.hpp"

namespace dyna {

constexpr Index kSynthSize = 64;
// Side of the centered spectrum block scaled by DomainSpec::lowfreq_gain.
constexpr Index kShiftBlock = 5;

// Appearance shift applied on top of the source renderer, in the order
// contrast -> brightness -> gamma -> low-frequency gain -> noise -> clamp.
struct DomainSpec {
  double gamma = 1.0;
  double brightness = 0.0;
  double contrast = 1.0;      // gain around 0.5
  double lowfreq_gain = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;     // content and noise stream

  bool is_identity() const {
    return gamma == 1.0 && brightness == 0.0 && contrast == 1.0 && lowfreq_gain == 1.0 && noise_sigma == 0.0;
  }
};

// Source-domain sample `index` of the content stream `seed`: 1-3 soft-edged
// ellipses over a smooth textured background, foreground fraction in [0.05, 0.40].
LabeledSample render_source(std::uint64_t seed, std::uint64_t index, Index size = kSynthSize);

// Applies the shift chain of `spec` to a source image; `index` selects the noise stream.
RealGrid apply_domain_shift(const RealGrid& image, const DomainSpec& spec, std::uint64_t index);

// n samples, indices first_index .. first_index + n - 1.
std::vector<LabeledSample> gen_domain(std::size_t n, const DomainSpec& spec, std::uint64_t first_index = 0);

DomainSpec target_a_spec(std::uint64_t seed);
DomainSpec target_b_spec(std::uint64_t seed);

struct BenchmarkSuite {
  std::vector<LabeledSample> source_train;  // 200
  std::vector<LabeledSample> source_val;    // 50
  std::vector<LabeledSample> target_a;      // 100, seeded arrival order
  std::vector<LabeledSample> target_b;      // 100, seeded arrival order
};

BenchmarkSuite benchmark_suite(std::uint64_t seed);

// Target stream by name ("A" or "B").
std::vector<LabeledSample> target_stream(std::uint64_t seed, const std::string& name);

// Dataset dump: one file per sample with "DSMP", u32 H, u32 W, f64 image, u8 mask.
void write_sample(const LabeledSample& sample, const std::string& path);
LabeledSample read_sample(const std::string& path);
void dump_dataset(const std::vector<LabeledSample>& samples, const std::string& directory);
std::vector<LabeledSample> load_dataset(const std::string& directory);

}  // namespace dyna
