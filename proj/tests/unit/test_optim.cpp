#include <gtest/gtest.h>

#include <cmath>

#include "dyna/optim.hpp"

using namespace dyna;

TEST(Adam, FirstStepIsSignScaled) {
  Eigen::VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  Eigen::VectorXd g(3);
  g << 0.3, -4.0, 1e-3;
  OptimState s = make_adam(0.05);
  adam_step(p, g, s);
  // m_hat = g, v_hat = g^2 after bias correction: step = lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.05 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.05 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[2], 0.5 - 0.05 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(Adam, SecondStepMatchesHandRecurrence) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.0);
  OptimState s = make_adam(0.1);
  adam_step(p, Eigen::VectorXd::Constant(1, 1.0), s);
  adam_step(p, Eigen::VectorXd::Constant(1, -2.0), s);
  const double m = 0.9 * 0.1 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double p1 = -0.1 * 1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(p[0], p1 - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
  EXPECT_EQ(std::get<AdamState>(s).step, 2);
}

TEST(Sgd, PlainStep) {
  Eigen::VectorXd p(2);
  p << 1.0, 2.0;
  OptimState s = make_sgd(0.5);
  sgd_step(p, Eigen::Vector2d(2.0, -1.0), s);
  EXPECT_EQ(p, Eigen::Vector2d(0.0, 2.5));
}

TEST(Optim, RejectsMismatch) {
  Eigen::VectorXd p(2);
  OptimState adam = make_adam(0.1);
  OptimState sgd = make_sgd(0.1);
  EXPECT_THROW(adam_step(p, Eigen::VectorXd(3), adam), ShapeError);
  EXPECT_THROW(sgd_step(p, Eigen::VectorXd(2), adam), Error);
  EXPECT_THROW(adam_step(p, Eigen::VectorXd(2), sgd), Error);
}
