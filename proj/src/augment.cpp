#include "dyna/augment.hpp"

#include <cmath>
#include <vector>

namespace dyna {

AugmentSpec sample_augment(Rng& rng) {
  AugmentSpec spec;
  spec.geometric = static_cast<Geometric>(rng.below(6));
  Photometric& p = spec.photometric;
  if (rng.coin()) p.brightness = rng.uniform(-0.2, 0.2);
  if (rng.coin()) p.contrast = rng.uniform(0.8, 1.2);
  if (rng.coin()) p.gamma = rng.uniform(0.7, 1.5);
  if (rng.coin()) p.noise_sigma = rng.uniform(0.0, 0.05);
  if (rng.coin()) p.blur_sigma = rng.uniform(0.1, 1.0);
  return spec;
}

Geometric inverse(Geometric g) {
  switch (g) {
    case Geometric::Rot90: return Geometric::Rot270;
    case Geometric::Rot270: return Geometric::Rot90;
    default: return g;
  }
}

RealGrid apply_geometric(const RealGrid& x, Geometric g) {
  const Shape& s = x.shape();
  const bool swap = g == Geometric::Rot90 || g == Geometric::Rot270;
  Shape out_shape = s;
  if (swap) std::swap(out_shape.h, out_shape.w);
  RealGrid out(out_shape);
  const Index h = s.h;
  const Index w = s.w;
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < h; ++y) {
        for (Index xx = 0; xx < w; ++xx) {
          const double v = x(n, c, y, xx);
          switch (g) {
            case Geometric::Identity: out(n, c, y, xx) = v; break;
            case Geometric::HFlip: out(n, c, y, w - 1 - xx) = v; break;
            case Geometric::VFlip: out(n, c, h - 1 - y, xx) = v; break;
            // Counter-clockwise quarter turn: (y, x) -> (w-1-x, y).
            case Geometric::Rot90: out(n, c, w - 1 - xx, y) = v; break;
            case Geometric::Rot180: out(n, c, h - 1 - y, w - 1 - xx) = v; break;
            case Geometric::Rot270: out(n, c, xx, h - 1 - y) = v; break;
          }
        }
      }
    }
  }
  return out;
}

RealGrid gaussian_blur(const RealGrid& x, double sigma) {
  if (!(sigma > 0.0)) return x;
  const Index radius = std::max<Index>(1, static_cast<Index>(std::ceil(3.0 * sigma)));
  Eigen::ArrayXd k(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  k /= k.sum();
  const Shape& s = x.shape();
  const auto clampi = [](Index v, Index hi) { return std::min(std::max<Index>(v, 0), hi - 1); };
  RealGrid tmp(s);
  RealGrid out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < s.h; ++y)
        for (Index xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (Index i = -radius; i <= radius; ++i) acc += k[i + radius] * x(n, c, y, clampi(xx + i, s.w));
          tmp(n, c, y, xx) = acc;
        }
      for (Index y = 0; y < s.h; ++y)
        for (Index xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (Index i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(n, c, clampi(y + i, s.h), xx);
          out(n, c, y, xx) = acc;
        }
    }
  }
  return out;
}

RealGrid apply_photometric(const RealGrid& x, const Photometric& p, Rng& noise) {
  RealGrid out = x;
  auto& v = out.values();
  if (p.brightness) v += *p.brightness;
  if (p.contrast) {
    const double mean = v.mean();
    v = (v - mean) * *p.contrast + mean;
  }
  if (p.gamma) {
    // Sign-preserving power; prompted images may dip below zero.
    const double g = *p.gamma;
    v = v.sign() * v.abs().pow(g);
  }
  if (p.blur_sigma) out = gaussian_blur(out, *p.blur_sigma);
  if (p.noise_sigma) {
    for (Index i = 0; i < out.size(); ++i) out.values()[i] += *p.noise_sigma * noise.normal();
  }
  return out;
}

}  // namespace dyna
