#pragma once

#include "dyna/tensor.hpp"

namespace dyna {

// Image (C, H, W) with a binary mask (1, H, W) stored as 0.0 / 1.0.
struct LabeledSample {
  RealGrid image;
  RealGrid mask;
};

}  // namespace dyna
