#include "dyna/freq_prompt.hpp"

#include <cmath>

#include "dyna/fft.hpp"

namespace dyna {

namespace {

using Complex = std::complex<double>;

void require_single_image(const RealGrid& x, const char* what) {
  if (x.batch() != 1) throw ShapeError(std::string(what) + ": expects a single image, got batch " + x.shape().str());
}

void require_block_fits(const Shape& block, const Shape& spectrum, const char* what) {
  if (block.n != 1 || block.c != spectrum.c || block.h > spectrum.h || block.w > spectrum.w || block.h < 1 ||
      block.w < 1) {
    throw ShapeError(std::string(what) + ": block " + block.str() + " does not fit spectrum " + spectrum.str());
  }
}

RealGrid hermitian_part(const RealGrid& m) {
  RealGrid out(m.shape());
  const Index h = m.height();
  const Index w = m.width();
  for (Index c = 0; c < m.channels(); ++c)
    for (Index u = 0; u < h; ++u)
      for (Index v = 0; v < w; ++v) out(c, u, v) = 0.5 * (m(c, u, v) + m(c, mirror_bin(u, h), mirror_bin(v, w)));
  return out;
}

RealGrid crop_center(const RealGrid& full, Index bh, Index bw) {
  RealGrid out(Shape{1, full.channels(), bh, bw});
  const Index oy = block_origin(full.height(), bh);
  const Index ox = block_origin(full.width(), bw);
  for (Index c = 0; c < full.channels(); ++c) out.plane(0, c) = full.plane(0, c).block(oy, ox, bh, bw);
  return out;
}

// Multiplies the spectrum bins of x by the symmetrized multiplier and inverts.
RealGrid modulate(const ComplexGrid& spectrum, const RealGrid& multiplier) {
  ComplexGrid z = spectrum;
  z.values() *= hermitian_part(multiplier).values().cast<Complex>();
  return ifft2_centered(z);
}

}  // namespace

SpectralDecomposition spectral_decompose(const RealGrid& x) {
  const ComplexGrid z = fft2_centered(x);
  SpectralDecomposition d{RealGrid(x.shape()), RealGrid(x.shape())};
  d.amplitude.values() = z.values().abs();
  d.phase.values() = z.values().arg();
  return d;
}

RealGrid spectral_recombine(const RealGrid& amplitude, const RealGrid& phase) {
  require_same_shape(amplitude.shape(), phase.shape(), "spectral_recombine");
  ComplexGrid z(amplitude.shape());
  for (Index i = 0; i < z.size(); ++i) z.values()[i] = std::polar(amplitude.values()[i], phase.values()[i]);
  return ifft2_centered(z);
}

Index prompt_extent(double beta, Index dim) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("prompt extent: beta must lie in (0, 1]");
  const auto e = static_cast<Index>(std::llround(beta * static_cast<double>(dim)));
  return std::max<Index>(1, std::min(e, dim));
}

SpectralKey low_freq_key(const RealGrid& amplitude, double beta, std::uint64_t source_id) {
  require_single_image(amplitude, "low_freq_key");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("low_freq_key: beta must lie in (0, 1)");
  const auto raw_h = static_cast<Index>(std::llround(beta * static_cast<double>(amplitude.height())));
  const auto raw_w = static_cast<Index>(std::llround(beta * static_cast<double>(amplitude.width())));
  if (raw_h > amplitude.height() || raw_w > amplitude.width()) throw ShapeError("low_freq_key: crop larger than grid");
  const RealGrid block =
      crop_center(amplitude, prompt_extent(beta, amplitude.height()), prompt_extent(beta, amplitude.width()));
  return SpectralKey{block.values().matrix(), source_id};
}

LowFreqPrompt::LowFreqPrompt(RealGrid values, double beta) : values_(std::move(values)), beta_(beta) {
  if (values_.batch() != 1) throw ShapeError("prompt values must be (1, C, h, w)");
  if (!values_.all_finite()) throw NumericError("prompt values must be finite");
}

LowFreqPrompt LowFreqPrompt::identity(const Shape& image, double beta) {
  return LowFreqPrompt(RealGrid::ones(Shape{1, image.c, prompt_extent(beta, image.h), prompt_extent(beta, image.w)}),
                       beta);
}

RealGrid pad_one(const RealGrid& block, const Shape& spectrum) {
  Shape s = spectrum;
  s.n = 1;
  require_block_fits(block.shape(), s, "pad_one");
  RealGrid out = RealGrid::ones(s);
  const Index oy = block_origin(s.h, block.height());
  const Index ox = block_origin(s.w, block.width());
  for (Index c = 0; c < s.c; ++c) out.plane(0, c).block(oy, ox, block.height(), block.width()) = block.plane(0, c);
  return out;
}

RealGrid apply_spectral_gain(const RealGrid& x, const RealGrid& block) {
  require_single_image(x, "apply_prompt");
  require_finite(x, "apply_prompt");
  if (!block.all_finite()) throw NumericError("apply_prompt: non-finite prompt");
  return modulate(fft2_centered(x), pad_one(block, x.shape()));
}

RealGrid apply_prompt(const RealGrid& x, const LowFreqPrompt& prompt) { return apply_spectral_gain(x, prompt.values()); }

Var apply_prompt(const RealGrid& x, Var prompt) {
  require_single_image(x, "apply_prompt");
  require_finite(x, "apply_prompt");
  const RealGrid& block = prompt.value();
  if (!block.all_finite()) throw NumericError("apply_prompt: non-finite prompt");
  ComplexGrid spectrum = fft2_centered(x);
  RealGrid out = modulate(spectrum, pad_one(block, x.shape()));
  const Index bh = block.height();
  const Index bw = block.width();
  return prompt.tape().record(std::move(out), {prompt},
                              [prompt, spectrum = std::move(spectrum), bh, bw](Tape& tape, const RealGrid&,
                                                                               const RealGrid& dy) {
                                // dL/dM(k) = Re(Z(k) * conj(G(k))) / (H W), G = F(dL/dX)
                                const ComplexGrid g = fft2_centered(dy);
                                RealGrid dm(dy.shape());
                                const double norm = static_cast<double>(dy.height() * dy.width());
                                dm.values() = (spectrum.values() * g.values().conjugate()).real() / norm;
                                tape.grad_buffer(prompt).values() += crop_center(dm, bh, bw).values();
                              });
}

}  // namespace dyna
