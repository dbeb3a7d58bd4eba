#include "dyna/domain_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dyna/binary_io.hpp"
#include "dyna/freq_prompt.hpp"
#include "dyna/rng.hpp"

namespace dyna {

namespace {

struct Ellipse {
  double cy, cx, ry, rx, angle, intensity;
};

// Normalized elliptical radius; 1 on the boundary.
double ellipse_radius(const Ellipse& e, double y, double x) {
  const double dy = y - e.cy;
  const double dx = x - e.cx;
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double u = (c * dx + s * dy) / e.rx;
  const double v = (-s * dx + c * dy) / e.ry;
  return std::sqrt(u * u + v * v);
}

constexpr std::uint64_t kContentTag = 0xC0;
constexpr std::uint64_t kNoiseTag = 0x4E;

}  // namespace

LabeledSample render_source(std::uint64_t seed, std::uint64_t index, Index size) {
  Rng rng(Rng::mix(Rng::mix(seed, kContentTag), index));
  const double sz = static_cast<double>(size);
  const Shape shape{1, 1, size, size};
  for (;;) {
    const int count = 1 + static_cast<int>(rng.below(3));
    std::vector<Ellipse> ellipses;
    for (int k = 0; k < count; ++k) {
      Ellipse e;
      e.ry = rng.uniform(0.08, 0.2) * sz;
      e.rx = rng.uniform(0.08, 0.2) * sz;
      e.cy = rng.uniform(0.2, 0.8) * sz;
      e.cx = rng.uniform(0.2, 0.8) * sz;
      e.angle = rng.uniform(0.0, std::numbers::pi);
      e.intensity = rng.uniform(0.6, 0.8);
      ellipses.push_back(e);
    }
    const double base = rng.uniform(0.15, 0.3);
    // Smooth background texture: a few low-frequency plane waves.
    struct Wave {
      double fy, fx, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 3; ++k) {
      waves.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 2.0 * std::numbers::pi),
                       rng.uniform(0.01, 0.04)});
    }
    const double edge = rng.uniform(0.04, 0.1);

    LabeledSample sample{RealGrid(shape), RealGrid(shape)};
    for (Index y = 0; y < size; ++y) {
      for (Index x = 0; x < size; ++x) {
        const double py = static_cast<double>(y) + 0.5;
        const double px = static_cast<double>(x) + 0.5;
        double bg = base;
        for (const Wave& w : waves) {
          bg += w.amp * std::sin(2.0 * std::numbers::pi * (w.fy * py + w.fx * px) / sz + w.phase);
        }
        double value = bg;
        bool inside = false;
        for (const Ellipse& e : ellipses) {
          const double r = ellipse_radius(e, py, px);
          const double weight = 1.0 / (1.0 + std::exp((r - 1.0) / edge));
          value = std::max(value, bg + (e.intensity - bg) * weight);
          inside = inside || r <= 1.0;
        }
        value += 0.02 * rng.normal();
        sample.image(0, y, x) = std::clamp(value, 0.0, 1.0);
        sample.mask(0, y, x) = inside ? 1.0 : 0.0;
      }
    }
    const double fraction = sample.mask.values().mean();
    if (fraction >= 0.05 && fraction <= 0.40) return sample;
  }
}

RealGrid apply_domain_shift(const RealGrid& image, const DomainSpec& spec, std::uint64_t index) {
  if (spec.is_identity()) return image;
  RealGrid out = image;
  auto& v = out.values();
  v = (v - 0.5) * spec.contrast + 0.5;
  v += spec.brightness;
  v = v.max(0.0).min(1.0).pow(spec.gamma);
  if (spec.lowfreq_gain != 1.0) {
    const Index bh = std::min(kShiftBlock, out.height());
    const Index bw = std::min(kShiftBlock, out.width());
    out = apply_spectral_gain(out, RealGrid(Shape{1, out.channels(), bh, bw}, spec.lowfreq_gain));
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(Rng::mix(Rng::mix(spec.seed, kNoiseTag), index));
    for (Index i = 0; i < out.size(); ++i) out.values()[i] += spec.noise_sigma * rng.normal();
  }
  out.values() = out.values().max(0.0).min(1.0);
  return out;
}

std::vector<LabeledSample> gen_domain(std::size_t n, const DomainSpec& spec, std::uint64_t first_index) {
  if (n < 1) throw Error("gen_domain: n must be at least 1");
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t index = first_index + k;
    LabeledSample s = render_source(spec.seed, index);
    s.image = apply_domain_shift(s.image, spec, index);
    out.push_back(std::move(s));
  }
  return out;
}

DomainSpec target_a_spec(std::uint64_t seed) {
  return DomainSpec{.gamma = 1.4, .brightness = 0.1, .contrast = 1.0, .lowfreq_gain = 1.5, .noise_sigma = 0.0, .seed = seed};
}

DomainSpec target_b_spec(std::uint64_t seed) {
  return DomainSpec{.gamma = 0.6, .brightness = 0.0, .contrast = 1.3, .lowfreq_gain = 2.0, .noise_sigma = 0.02, .seed = seed};
}

namespace {

std::vector<LabeledSample> permuted(std::vector<LabeledSample> samples, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(samples.begin(), samples.end());
  return samples;
}

std::uint64_t source_seed(std::uint64_t seed) { return Rng::mix(seed, 0xD0); }
std::uint64_t target_seed(std::uint64_t seed) { return Rng::mix(seed, 0xD1); }

}  // namespace

BenchmarkSuite benchmark_suite(std::uint64_t seed) {
  BenchmarkSuite suite;
  const DomainSpec source{.seed = source_seed(seed)};
  suite.source_train = gen_domain(200, source, 0);
  suite.source_val = gen_domain(50, source, 200);
  suite.target_a = target_stream(seed, "A");
  suite.target_b = target_stream(seed, "B");
  return suite;
}

std::vector<LabeledSample> target_stream(std::uint64_t seed, const std::string& name) {
  // Both targets share one content stream, disjoint from the source images.
  const std::uint64_t content = target_seed(seed);
  if (name == "A") return permuted(gen_domain(100, target_a_spec(content)), Rng::mix(seed, 0xA));
  if (name == "B") return permuted(gen_domain(100, target_b_spec(content)), Rng::mix(seed, 0xB));
  throw Error("unknown target stream '" + name + "' (expected A or B)");
}

void write_sample(const LabeledSample& sample, const std::string& path) {
  const RealGrid& img = sample.image;
  if (img.batch() != 1 || img.channels() != 1) throw ShapeError("write_sample: expects a 1xHxW image");
  require_same_shape(img.shape(), sample.mask.shape(), "write_sample");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  io::write_magic(out, "DSMP");
  io::write_u32(out, static_cast<std::uint32_t>(img.height()));
  io::write_u32(out, static_cast<std::uint32_t>(img.width()));
  io::write_f64s(out, img.data(), static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < sample.mask.size(); ++i) out.put(sample.mask.values()[i] > 0.5 ? 1 : 0);
  if (!out) throw FormatError("failed to write '" + path + "'");
}

LabeledSample read_sample(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  io::expect_magic(in, "DSMP", "sample header");
  const std::uint32_t h = io::read_u32(in, "sample height");
  const std::uint32_t w = io::read_u32(in, "sample width");
  if (h == 0 || w == 0 || h > 8192 || w > 8192) throw FormatError("implausible sample dimensions");
  const Shape shape{1, 1, h, w};
  LabeledSample s{RealGrid(shape), RealGrid(shape)};
  io::read_f64s(in, s.image.data(), static_cast<std::size_t>(s.image.size()), "sample image");
  std::vector<char> mask(static_cast<std::size_t>(shape.size()));
  io::read_exact(in, mask.data(), mask.size(), "sample mask");
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0 && mask[i] != 1) throw FormatError("sample mask must be binary");
    s.mask.values()[static_cast<Index>(i)] = mask[i];
  }
  return s;
}

void dump_dataset(const std::vector<LabeledSample>& samples, const std::string& directory) {
  std::filesystem::create_directories(directory);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05zu.dsmp", i);
    write_sample(samples[i], (std::filesystem::path(directory) / name).string());
  }
}

std::vector<LabeledSample> load_dataset(const std::string& directory) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dsmp") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledSample> out;
  for (const auto& f : files) out.push_back(read_sample(f.string()));
  return out;
}

}  // namespace dyna
