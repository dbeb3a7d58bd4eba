#include "dyna/selftest.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>

#include "dyna/day_adapter.hpp"
#include "dyna/deployment.hpp"
#include "dyna/fft.hpp"
#include "dyna/freq_prompt.hpp"
#include "dyna/gradcheck.hpp"
#include "dyna/night_trainer.hpp"
#include "dyna/prompt_bank.hpp"
#include "dyna/rng.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

namespace {

RealGrid random_grid(Rng& rng, const Shape& s, double lo = 0.0, double hi = 1.0) {
  RealGrid g(s);
  for (Index k = 0; k < g.size(); ++k) g.values()[k] = rng.uniform(lo, hi);
  return g;
}

double max_abs_diff(const RealGrid& a, const RealGrid& b) { return (a.values() - b.values()).abs().maxCoeff(); }

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Smooth scalar readout for gradient checks.
Var readout(Var y, const RealGrid& target) {
  return masked_bce(sigmoid(y), RealGrid::ones(target.shape()), target);
}

CheckResult bound(const std::string& name, double value, double tol) {
  return {name, value < tol, "error " + fmt(value) + " (tolerance " + fmt(tol) + ")"};
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x5E1F));
  std::vector<CheckResult> out;
  const auto run = [&](const std::string& name, const std::function<CheckResult()>& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };

  const RealGrid image = random_grid(rng, Shape{1, 1, 20, 24});

  run("fft roundtrip", [&] { return bound("fft roundtrip", max_abs_diff(ifft2_centered(fft2_centered(image)), image), 1e-9); });

  run("parseval", [&] {
    const double spatial = image.values().square().sum();
    const double spectral = fft2_centered(image).values().abs2().sum() / static_cast<double>(image.shape().plane());
    return bound("parseval", std::abs(spatial - spectral) / spatial, 1e-9);
  });

  run("identity prompt", [&] {
    const LowFreqPrompt id = LowFreqPrompt::identity(image.shape(), 0.2);
    return bound("identity prompt", max_abs_diff(apply_prompt(image, id), image), 1e-9);
  });

  run("dc prompt", [&] {
    const LowFreqPrompt dc(RealGrid(Shape{1, 1, 1, 1}, 2.0), 0.01);
    RealGrid expected = image;
    expected.values() += image.values().mean();
    return bound("dc prompt", max_abs_diff(apply_prompt(image, dc), expected), 1e-9);
  });

  run("warm-up schedule", [&] {
    bool decreasing = true;
    for (std::uint64_t i = 1; i < 10000; ++i) decreasing = decreasing && warmup_lambda(i + 1, 5.0) < warmup_lambda(i, 5.0);
    const double err = std::abs(warmup_lambda(1, 5.0) - 5.0 / 6.0);
    return CheckResult{"warm-up schedule", decreasing && err <= 1e-15, "lambda(1) error " + fmt(err)};
  });

  run("agreement truth table", [&] {
    bool ok = true;
    for (int bits = 0; bits < 8; ++bits) {
      const auto v = [&](int b) { return RealGrid(Shape{1, 1, 1, 1}, (bits >> b) & 1 ? 0.9 : 0.1); };
      const double expected = (bits == 0 || bits == 7) ? 1.0 : 0.0;
      ok = ok && agreement_mask(v(0), v(1), v(2), 0.5).values()[0] == expected;
    }
    return CheckResult{"agreement truth table", ok, ok ? "8/8 cases" : "mismatch"};
  });

  run("support weights", [&] {
    MemoryBank bank(6);
    for (int k = 0; k < 9; ++k) {
      bank.push(SpectralKey{random_grid(rng, Shape{1, 1, 3, 3}, 0.1, 1.0).values().matrix(), 0},
                LowFreqPrompt(random_grid(rng, Shape{1, 1, 3, 3}, 0.5, 1.5), 0.05));
    }
    const auto support = bank.retrieve_support(SpectralKey{Eigen::VectorXd::Ones(9), 0}, 4);
    const double err = std::abs(support_weights(support).sum() - 1.0);
    const bool fifo = bank.size() == 6 && bank.entries().front().sequence == 3;
    return CheckResult{"support weights", fifo && support.size() == 4 && err < 1e-12, "weight-sum error " + fmt(err)};
  });

  const auto grad = [&](const std::string& name, const ScalarFn& fn, const RealGrid& x, double tol) {
    run(name, [&] { return bound(name, check_gradient(fn, x).relative_error, tol); });
  };

  const RealGrid kernel = random_grid(rng, Shape{3, 2, 3, 3}, -1.0, 1.0);
  const RealGrid x = random_grid(rng, Shape{2, 2, 6, 6}, -1.0, 1.0);
  const RealGrid weights = random_grid(rng, Shape{2, 3, 6, 6});
  grad(
      "conv gradient",
      [&](Tape& t, Var k) {
        return readout(conv2d(t.constant(x), k, t.constant(RealGrid(Shape{1, 3, 1, 1}, 0.1)), 1), weights);
      },
      kernel, 1e-5);
  grad(
      "batch-norm gradient",
      [&](Tape& t, Var in) {
        const BatchNormOutput bn =
            batch_norm_batch(in, t.constant(RealGrid(Shape{1, 2, 1, 1}, 1.5)), t.constant(RealGrid(Shape{1, 2, 1, 1}, 0.2)));
        return readout(bn.y, RealGrid(in.value().shape(), 0.3));
      },
      x, 1e-5);
  grad(
      "prompt gradient",
      [&](Tape&, Var p) { return readout(apply_prompt(image, p), image); },
      random_grid(rng, Shape{1, 1, 5, 5}, 0.8, 1.2), 1e-5);

  run("model averaging", [&] {
    const SegModelState a = SegModelState::initialize(1, 1, seed);
    const SegModelState b = SegModelState::initialize(1, 1, seed + 1);
    const SegModelState mid = weights_axpy(0.5, a, 0.5, b);
    const double err = (mid.flatten() - 0.5 * (a.flatten() + b.flatten())).cwiseAbs().maxCoeff();
    return bound("model averaging", err, 1e-15);
  });

  run("checkpoint roundtrip", [&] {
    const SegModelState m = SegModelState::initialize(1, 1, seed);
    std::stringstream ss;
    save_checkpoint(m, ss);
    const bool ok = load_checkpoint(ss) == m;
    return CheckResult{"checkpoint roundtrip", ok, ok ? "bit-exact" : "mismatch"};
  });

  run("state roundtrip", [&] {
    DeploymentState s;
    s.cycle = 3;
    s.counter = 17;
    s.model = SegModelState::initialize(1, 1, seed);
    s.bank = MemoryBank(4);
    s.bank.push(SpectralKey{Eigen::VectorXd::LinSpaced(9, 1.0, 2.0), 0}, LowFreqPrompt::identity(Shape{1, 1, 64, 64}, 0.05));
    s.log.push_back({1, 4, 0.75, 0.5});
    const auto path = std::filesystem::temp_directory_path() / ("dyna_selftest_" + std::to_string(seed) + ".dyns");
    save_state(s, path.string());
    const bool ok = load_state(path.string()) == s;
    std::filesystem::remove(path);
    return CheckResult{"state roundtrip", ok, ok ? "bit-exact" : "mismatch"};
  });

  return out;
}

}  // namespace dyna
