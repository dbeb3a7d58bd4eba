#pragma once

#include <Eigen/Core>

#include <variant>

#include "dyna/error.hpp"

namespace dyna {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Eigen::VectorXd m;  // first-moment buffer, sized on the first step
  Eigen::VectorXd v;  // second-moment buffer
};

struct SgdState {
  double lr = 1e-3;
};

using OptimState = std::variant<AdamState, SgdState>;

inline OptimState make_adam(double lr) {
  AdamState s;
  s.lr = lr;
  return s;
}
inline OptimState make_sgd(double lr) { return SgdState{.lr = lr}; }

// Bias-corrected Adam update, in place.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, OptimState& state);

// theta <- theta - lr * g, no momentum or weight decay.
void sgd_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, OptimState& state);

}  // namespace dyna
