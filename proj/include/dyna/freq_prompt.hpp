#pragma once

#include <cstdint>

#include "dyna/tape.hpp"
#include "dyna/tensor.hpp"

namespace dyna {

// Centered amplitude |F(x)| and phase arg F(x) of every channel.
struct SpectralDecomposition {
  RealGrid amplitude;
  RealGrid phase;
};

SpectralDecomposition spectral_decompose(const RealGrid& x);

// Inverse of spectral_decompose: F^-1(amplitude * exp(i * phase)).
RealGrid spectral_recombine(const RealGrid& amplitude, const RealGrid& phase);

// Side length of the low-frequency block: max(1, round(beta * dim)).
Index prompt_extent(double beta, Index dim);

// First centered index of a block of `extent` bins around the zero frequency.
inline Index block_origin(Index dim, Index extent) { return dim / 2 - extent / 2; }

// Flattened (channel-major) low-frequency amplitude block of one image.
struct SpectralKey {
  Eigen::VectorXd values;
  std::uint64_t source_id = 0;
};

SpectralKey low_freq_key(const RealGrid& amplitude, double beta, std::uint64_t source_id = 0);

// Learnable multiplier on the centered low-frequency amplitude block. Values
// are (1, C, h_p, w_p) and unconstrained.
class LowFreqPrompt {
 public:
  LowFreqPrompt() = default;
  LowFreqPrompt(RealGrid values, double beta);

  // All-ones prompt sized for images of the given shape.
  static LowFreqPrompt identity(const Shape& image, double beta);

  const RealGrid& values() const { return values_; }
  RealGrid& values() { return values_; }
  const Shape& shape() const { return values_.shape(); }
  double beta() const { return beta_; }

  bool operator==(const LowFreqPrompt& o) const {
    return beta_ == o.beta_ && values_.shape() == o.values_.shape() && (values_.values() == o.values_.values()).all();
  }

 private:
  RealGrid values_;
  double beta_ = 0.0;
};

// Places the (1, C, h_p, w_p) block at the spectrum center of a (1, C, H, W)
// multiplier filled with ones.
RealGrid pad_one(const RealGrid& block, const Shape& spectrum);

// Adapted image F^-1([PadOne(P) * |F(x)|, arg F(x)]) for a single image x.
// The padded multiplier is projected onto its Hermitian-symmetric part
// (M(k) + M(-k)) / 2 so that the inverse transform of a real image stays real.
RealGrid apply_prompt(const RealGrid& x, const LowFreqPrompt& prompt);

// Taped form, differentiable w.r.t. the prompt values.
Var apply_prompt(const RealGrid& x, Var prompt);

// Same operation with a raw multiplier block.
RealGrid apply_spectral_gain(const RealGrid& x, const RealGrid& block);

}  // namespace dyna
