#include "dyna/gradcheck.hpp"

#include <algorithm>

namespace dyna {

namespace {

double evaluate(const ScalarFn& f, const RealGrid& x) {
  Tape tape(false);
  return f(tape, tape.constant(x)).value().values()[0];
}

}  // namespace

GradCheck check_gradient(const ScalarFn& f, const RealGrid& x, double h, double floor) {
  Tape tape;
  Var leaf = tape.leaf(x);
  tape.backward(f(tape, leaf));
  const RealGrid analytic = leaf.grad();

  RealGrid numeric(x.shape());
  RealGrid probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    const double orig = probe.values()[k];
    probe.values()[k] = orig + h;
    const double up = evaluate(f, probe);
    probe.values()[k] = orig - h;
    const double down = evaluate(f, probe);
    probe.values()[k] = orig;
    numeric.values()[k] = (up - down) / (2.0 * h);
  }
  GradCheck r;
  r.numeric_norm = numeric.values().matrix().norm();
  r.relative_error = (analytic.values() - numeric.values()).matrix().norm() / std::max(r.numeric_norm, floor);
  return r;
}

}  // namespace dyna
