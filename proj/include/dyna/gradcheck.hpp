#pragma once

#include <functional>

#include "dyna/tape.hpp"

namespace dyna {

// Scalar-valued function of one tensor, recorded on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||numeric||, floor)
  double numeric_norm = 0.0;
};

// Compares the taped gradient of f at x with central differences of step h.
GradCheck check_gradient(const ScalarFn& f, const RealGrid& x, double h = 1e-5, double floor = 1e-10);

}  // namespace dyna
