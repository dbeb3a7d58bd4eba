#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "dyna/sample.hpp"
#include "dyna/tape.hpp"
#include "dyna/tensor.hpp"

namespace dyna {

struct NamedTensor {
  std::string name;
  RealGrid value;
};

struct ChannelStats {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd std;
};

// Weights and batch-norm running statistics of the tiny encoder-decoder:
//
//   enc1  conv3x3 (in -> 8)        BN  ReLU
//   enc2  conv3x3 (8 -> 16), s=2   BN  ReLU
//   enc3  conv3x3 (16 -> 32), s=2  BN  ReLU
//   dec1  up2x  conv3x3 (32 -> 16) BN  ReLU  + enc2
//   dec2  up2x  conv3x3 (16 -> 8)  BN  ReLU  + enc1
//   head  conv1x1 (8 -> out)       sigmoid
//
// Running statistics are stored as (mean, std) with std = sqrt(var + eps).
class SegModelState {
 public:
  static constexpr int kBatchNormLayers = 5;
  static constexpr int kEncoderBatchNormLayers = 3;

  SegModelState() = default;

  // He-initialized weights, unit gamma, zero beta, running stats (0, 1).
  static SegModelState initialize(Index in_channels, Index out_channels, std::uint64_t seed);

  // Zero-filled tensors with the layout of the given architecture tag.
  static SegModelState from_architecture(const std::string& tag);

  static std::string architecture_tag(Index in_channels, Index out_channels);

  const std::string& architecture() const { return arch_; }
  Index in_channels() const { return in_channels_; }
  Index out_channels() const { return out_channels_; }

  const std::vector<NamedTensor>& parameters() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }

  const RealGrid& tensor(const std::string& name) const;
  RealGrid& tensor(const std::string& name);

  Eigen::ArrayXd running_mean(int layer) const;
  Eigen::ArrayXd running_std(int layer) const;
  void set_running_stats(int layer, const ChannelStats& stats);

  Index parameter_count() const;
  Index flat_size() const;

  // Parameters only, in declaration order.
  Eigen::VectorXd parameter_vector() const;
  void assign_parameters(const Eigen::VectorXd& flat);

  // Parameters followed by running statistics.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);

  bool operator==(const SegModelState& other) const;

 private:
  std::string arch_;
  Index in_channels_ = 0;
  Index out_channels_ = 0;
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

// Normalization source for every BN layer.
struct RunningStats {};
struct BatchStats {};
struct InjectedStats {
  std::vector<ChannelStats> layers;  // exactly one entry per BN layer
};
using StatsMode = std::variant<RunningStats, BatchStats, InjectedStats>;

struct BatchNormTrace {
  Var batch_mean;  // (1, C, 1, 1), differentiable
  Var batch_std;
  Eigen::ArrayXd running_mean;
  Eigen::ArrayXd running_std;

  ChannelStats batch_stats() const { return {batch_mean.value().values(), batch_std.value().values()}; }
  ChannelStats running_stats() const { return {running_mean, running_std}; }
};

// One entry per BN layer; always carries the statistics of the presented batch.
using ForwardTrace = std::vector<BatchNormTrace>;

struct ForwardResult {
  Var probs;                // (N, out, H, W) sigmoid probabilities
  ForwardTrace trace;
  std::vector<Var> params;  // parameter leaves, empty unless bound
};

// Runs the network on `input` (N, in, H, W) recorded on input's tape. With
// bind_params the weights become differentiable leaves.
ForwardResult forward(const SegModelState& model, Var input, const StatsMode& mode, bool bind_params = false);

// Batch-mode training forward: like forward() with BatchStats, then folds the
// batch statistics into the running statistics with the given momentum.
ForwardResult forward_train(SegModelState& model, Var input, bool bind_params, double momentum = 0.1);

void update_running_stats(SegModelState& model, const ForwardTrace& trace, double momentum = 0.1);

// Gradients of the bound parameter leaves, flattened in parameter order.
Eigen::VectorXd gather_gradients(const ForwardResult& result);

// Tape-free inference.
RealGrid predict(const SegModelState& model, const RealGrid& batch, const StatsMode& mode = RunningStats{});

// W = a * W1 + b * W2 over every parameter and running statistic.
SegModelState weights_axpy(double a, const SegModelState& w1, double b, const SegModelState& w2);

struct SourceTrainConfig {
  int epochs = 30;
  double lr = 0.01;
  int batch_size = 8;
  std::uint64_t seed = 0;
};

struct SourceTrainResult {
  SegModelState model;
  std::vector<double> epoch_losses;  // mean BCE per epoch
};

// Pixelwise BCE, Batch-mode BN with running updates, Adam.
SourceTrainResult train_source(const std::vector<LabeledSample>& dataset, const SourceTrainConfig& cfg);

// Checkpoint: "DYNA", u32 version, u32-length architecture tag, then
// per-tensor records (u32 name length, name, u32 ndim, u32 dims, f64 LE payload).
constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const SegModelState& model, std::ostream& out);
SegModelState load_checkpoint(std::istream& in);
void save_checkpoint(const SegModelState& model, const std::string& path);
SegModelState load_checkpoint(const std::string& path);

}  // namespace dyna
