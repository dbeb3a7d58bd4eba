#include "dyna/optim.hpp"

#include <cmath>

#include "dyna/error.hpp"

namespace dyna {

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, OptimState& state) {
  auto* adam = std::get_if<AdamState>(&state);
  if (!adam) throw Error("adam_step: optimizer state is not Adam");
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient sizes differ");
  if (adam->step == 0 && adam->m.size() == 0) {
    adam->m = Eigen::VectorXd::Zero(params.size());
    adam->v = Eigen::VectorXd::Zero(params.size());
  }
  if (adam->m.size() != params.size() || adam->v.size() != params.size()) {
    throw ShapeError("adam_step: moment buffers do not match parameter size");
  }
  ++adam->step;
  adam->m = adam->beta1 * adam->m + (1.0 - adam->beta1) * grads;
  adam->v = adam->beta2 * adam->v + (1.0 - adam->beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(adam->beta1, static_cast<double>(adam->step));
  const double c2 = 1.0 - std::pow(adam->beta2, static_cast<double>(adam->step));
  params.array() -= adam->lr * (adam->m.array() / c1) / ((adam->v.array() / c2).sqrt() + adam->eps);
}

void sgd_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, OptimState& state) {
  auto* sgd = std::get_if<SgdState>(&state);
  if (!sgd) throw Error("sgd_step: optimizer state is not SGD");
  if (params.size() != grads.size()) throw ShapeError("sgd_step: parameter and gradient sizes differ");
  params -= sgd->lr * grads;
}

}  // namespace dyna
