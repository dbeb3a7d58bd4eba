#pragma once

#include <optional>

#include "dyna/rng.hpp"
#include "dyna/tensor.hpp"

namespace dyna {

// Weak augmentation: pixel-grid bijections.
enum class Geometric { Identity, HFlip, VFlip, Rot90, Rot180, Rot270 };

// Strong augmentation: each component is present or absent.
struct Photometric {
  std::optional<double> brightness;  // additive offset in [-0.2, 0.2]
  std::optional<double> contrast;    // gain around the image mean in [0.8, 1.2]
  std::optional<double> gamma;       // exponent in [0.7, 1.5]
  std::optional<double> noise_sigma; // in (0, 0.05]
  std::optional<double> blur_sigma;  // in (0, 1.0]
};

struct AugmentSpec {
  Geometric geometric = Geometric::Identity;
  Photometric photometric;
};

AugmentSpec sample_augment(Rng& rng);

RealGrid apply_geometric(const RealGrid& x, Geometric g);
Geometric inverse(Geometric g);

// `noise` drives the Gaussian noise component.
RealGrid apply_photometric(const RealGrid& x, const Photometric& p, Rng& noise);

RealGrid gaussian_blur(const RealGrid& x, double sigma);

}  // namespace dyna
