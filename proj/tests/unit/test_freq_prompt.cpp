#include <gtest/gtest.h>

#include <cmath>

#include "dyna/fft.hpp"
#include "dyna/freq_prompt.hpp"
#include "test_util.hpp"

using namespace dyna;
using dyna::testing::grad_rel_error;
using dyna::testing::max_abs_diff;
using dyna::testing::random_grid;
using dyna::testing::readout;

TEST(PromptExtent, RoundsAndClamps) {
  EXPECT_EQ(prompt_extent(0.05, 64), 3);
  EXPECT_EQ(prompt_extent(0.01, 64), 1);
  EXPECT_EQ(prompt_extent(0.01, 512), 5);
  EXPECT_EQ(prompt_extent(1.0, 64), 64);
  EXPECT_THROW(prompt_extent(0.0, 64), DomainError);
  EXPECT_THROW(prompt_extent(1.2, 64), DomainError);
}

TEST(Spectral, DecomposeRecombine) {
  Rng rng(1);
  const RealGrid x = random_grid(rng, Shape{1, 1, 12, 10}, 0.0, 1.0);
  const SpectralDecomposition d = spectral_decompose(x);
  EXPECT_LT(max_abs_diff(spectral_recombine(d.amplitude, d.phase), x), 1e-9);
  EXPECT_TRUE((d.amplitude.values() >= 0.0).all());
}

TEST(Prompt, IdentityIsNoOp) {
  Rng rng(2);
  for (Index size : {16, 33, 64}) {
    const RealGrid x = random_grid(rng, Shape{1, 2, size, size}, 0.0, 1.0);
    EXPECT_LT(max_abs_diff(apply_prompt(x, LowFreqPrompt::identity(x.shape(), 0.05)), x), 1e-9);
  }
}

TEST(Prompt, DcGainAddsMean) {
  Rng rng(3);
  const RealGrid x = random_grid(rng, Shape{1, 1, 64, 64}, 0.0, 1.0);
  const LowFreqPrompt p(RealGrid(Shape{1, 1, 1, 1}, 2.0), 0.01);
  RealGrid expected = x;
  expected.values() += x.values().mean();
  EXPECT_LT(max_abs_diff(apply_prompt(x, p), expected), 1e-9);
}

TEST(Prompt, PositivePromptPreservesPhase) {
  Rng rng(4);
  const RealGrid x = random_grid(rng, Shape{1, 1, 32, 32}, 0.0, 1.0);
  const LowFreqPrompt p(random_grid(rng, Shape{1, 1, 5, 5}, 0.5, 1.5), 0.15);
  const SpectralDecomposition before = spectral_decompose(x);
  const SpectralDecomposition after = spectral_decompose(apply_prompt(x, p));
  for (Index k = 0; k < x.size(); ++k) {
    if (before.amplitude.values()[k] < 1e-8) continue;
    const double d = std::remainder(after.phase.values()[k] - before.phase.values()[k], 2.0 * M_PI);
    EXPECT_LT(std::abs(d), 1e-8);
  }
  // Outside the block the amplitude is untouched.
  EXPECT_NEAR(after.amplitude(0, 0, 0), before.amplitude(0, 0, 0), 1e-9);
}

TEST(Prompt, SymmetricPromptScalesAmplitudeExactly) {
  Rng rng(5);
  const RealGrid x = random_grid(rng, Shape{1, 1, 16, 16}, 0.0, 1.0);
  // 3x3 block symmetric about the center: multiplier is already Hermitian.
  RealGrid block(Shape{1, 1, 3, 3});
  const double v[9] = {0.9, 1.1, 0.8, 1.3, 1.7, 1.3, 0.8, 1.1, 0.9};
  for (int k = 0; k < 9; ++k) block.values()[k] = v[k];
  const SpectralDecomposition before = spectral_decompose(x);
  const SpectralDecomposition after = spectral_decompose(apply_prompt(x, LowFreqPrompt(block, 0.2)));
  for (Index dy = 0; dy < 3; ++dy)
    for (Index dx = 0; dx < 3; ++dx)
      EXPECT_NEAR(after.amplitude(0, 7 + dy, 7 + dx), block(0, dy, dx) * before.amplitude(0, 7 + dy, 7 + dx), 1e-9);
}

TEST(Prompt, PadOnePlacesBlockAtCenter) {
  RealGrid block(Shape{1, 1, 3, 3}, 2.0);
  const RealGrid m = pad_one(block, Shape{1, 1, 8, 8});
  EXPECT_EQ(m.values().sum(), 64.0 + 9.0);
  EXPECT_EQ(m(0, 3, 3), 2.0);
  EXPECT_EQ(m(0, 5, 5), 2.0);
  EXPECT_EQ(m(0, 2, 2), 1.0);
  EXPECT_THROW(pad_one(RealGrid(Shape{1, 2, 3, 3}), Shape{1, 1, 8, 8}), ShapeError);
}

TEST(Prompt, RejectsBatchesAndNonFinite) {
  EXPECT_THROW(apply_prompt(RealGrid(Shape{2, 1, 16, 16}), LowFreqPrompt::identity(Shape{1, 1, 16, 16}, 0.1)), ShapeError);
  RealGrid x(Shape{1, 1, 16, 16});
  x(0, 3, 3) = INFINITY;
  EXPECT_THROW(apply_prompt(x, LowFreqPrompt::identity(x.shape(), 0.1)), NumericError);
  RealGrid bad(Shape{1, 1, 1, 1}, NAN);
  EXPECT_THROW(LowFreqPrompt(bad, 0.1), NumericError);
}

TEST(Prompt, GradientAcrossSeeds) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Index h = 12 + seed % 5, w = 12 + (seed * 3) % 7;
    const RealGrid x = random_grid(rng, Shape{1, 1, h, w}, 0.0, 1.0);
    const RealGrid target = random_grid(rng, x.shape(), 0.0, 1.0);
    const RealGrid p0 = random_grid(rng, Shape{1, 1, 3, 3}, 0.7, 1.3);
    EXPECT_LT(grad_rel_error([&](Tape&, Var p) { return readout(apply_prompt(x, p), target); }, p0), 1e-5) << seed;
  }
}

TEST(LowFreqKey, CropOfAmplitude) {
  Rng rng(6);
  const RealGrid x = random_grid(rng, Shape{1, 1, 64, 64}, 0.0, 1.0);
  const SpectralDecomposition d = spectral_decompose(x);
  const SpectralKey key = low_freq_key(d.amplitude, 0.05, 9);
  ASSERT_EQ(key.values.size(), 9);
  EXPECT_EQ(key.source_id, 9u);
  EXPECT_EQ(key.values[4], d.amplitude(0, 32, 32));
  EXPECT_EQ(key.values[0], d.amplitude(0, 31, 31));
  EXPECT_THROW(low_freq_key(d.amplitude, 1.0, 0), DomainError);
}
