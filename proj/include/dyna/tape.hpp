#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dyna/tensor.hpp"

namespace dyna {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while
// the owning tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const RealGrid& value() const;
  // Gradient accumulated by the last backward sweep; zeros if none reached this node.
  RealGrid grad() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive forward operations. backward() replays the
// record in reverse, visiting each recorded op once.
//
// With recording disabled the tape only holds forward values; that is the
// inference path.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const RealGrid& out_value, const RealGrid& out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var leaf(RealGrid value);
  Var constant(RealGrid value);

  // Appends an op result. `fn` runs during backward when any input needs a gradient.
  Var record(RealGrid value, std::initializer_list<Var> inputs, Backward fn);

  const RealGrid& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  RealGrid grad(Var v) const;

  // Zero-initialized on first access.
  RealGrid& grad_buffer(Var v);
  void accumulate(Var v, const RealGrid& g);

  // Seeds d(root)/d(root) = 1 and runs the reverse sweep. root must hold a
  // single element. Returns the number of op records visited.
  std::size_t backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    RealGrid value;
    RealGrid grad;
    Backward backward;
    bool requires_grad = false;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

// Cross-correlation with zero padding k/2. kernel is (Cout, Cin, k, k), bias (1, Cout, 1, 1).
Var conv2d(Var x, Var kernel, Var bias, int stride);

// Per-channel statistics over batch and spatial positions, shape (1, C, 1, 1).
Var channel_mean(Var x);
// sqrt(biased variance + eps) around the supplied mean.
Var channel_std(Var x, Var mean, double eps);

// (x - mean) / std per channel; mean and std are (1, C, 1, 1).
Var normalize(Var x, Var mean, Var std);
// gamma * x + beta per channel.
Var scale_shift(Var x, Var gamma, Var beta);

Var relu(Var x);
Var sigmoid(Var x);
Var upsample2x(Var x);
Var add(Var a, Var b);
Var scale(Var a, double s);

// Scalar mean of |a - target| over all elements.
Var mean_abs_diff(Var a, const RealGrid& target);

// Scalar pixel-mean binary cross-entropy between clamp(mask * pred) and the
// gradient-constant soft target mask * target.
Var masked_bce(Var pred, const RealGrid& mask, const RealGrid& target, double clamp_eps = 1e-7);

constexpr double kBatchNormEps = 1e-5;

struct BatchNormOutput {
  Var y;
  Var mean;
  Var std;
};

// Batch-mode normalization: statistics are computed from x and differentiated through.
BatchNormOutput batch_norm_batch(Var x, Var gamma, Var beta, double eps = kBatchNormEps);

// Normalization with externally supplied statistics, constants w.r.t. the tape.
Var batch_norm_fixed(Var x, const Eigen::ArrayXd& mean, const Eigen::ArrayXd& std, Var gamma, Var beta);

// Value-only form of the affine normalization.
RealGrid batch_norm(const RealGrid& x, const Eigen::ArrayXd& mean, const Eigen::ArrayXd& std,
                    const Eigen::ArrayXd& gamma, const Eigen::ArrayXd& beta);

}  // namespace dyna
