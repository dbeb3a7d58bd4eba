#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dyna/freq_prompt.hpp"
#include "dyna/prompt_bank.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

struct DayConfig {
  double prompt_lr = 0.05;
  double beta = 0.05;
  std::size_t support_size = 16;  // M
  double tau = 5.0;
  bool encoder_only_loss = false;  // restrict the alignment loss to encoder BN layers
  bool infer_with_warmup = false;  // normalize the final inference with warm-up statistics
  bool measure_descent = false;    // evaluate the alignment loss again after the update
};

// lambda = 1 / (sqrt(i) / tau + 1)
double warmup_lambda(std::uint64_t i, double tau);

// Global test-sample counter; starts at 1 and never resets within a deployment.
class WarmupSchedule {
 public:
  explicit WarmupSchedule(double tau = 5.0, std::uint64_t start = 1);

  double tau() const { return tau_; }
  std::uint64_t index() const { return index_; }
  double lambda() const { return warmup_lambda(index_, tau_); }
  void advance() { ++index_; }

 private:
  double tau_;
  std::uint64_t index_;
};

// Per layer: mu_w = lambda * mu_t + (1 - lambda) * mu_s, likewise for sigma.
// The result holds plain values, so it is constant w.r.t. any tape.
std::vector<ChannelStats> warmup_statistics(std::uint64_t i, double tau, const ForwardTrace& trace);

// BN layer indices that enter the alignment loss.
std::vector<int> alignment_layers(bool encoder_only);

// Mean over the selected layers of mean_c |mu_w - mu_t| + mean_c |sigma_w - sigma_t|,
// differentiable through the batch statistics of the trace.
Var prompt_alignment_loss(const ForwardTrace& trace, const std::vector<ChannelStats>& warm, bool encoder_only = false);

// Value-only form on explicit statistics.
double prompt_alignment_loss(const std::vector<ChannelStats>& test, const std::vector<ChannelStats>& warm,
                             const std::vector<int>& layers);

struct DayRecord {
  RealGrid image;          // raw test image
  LowFreqPrompt prompt;    // trained prompt, frozen
  RealGrid pseudo_label;   // adapted prediction, values in (0, 1)
  std::uint64_t sample_index = 0;  // warm-up index i at arrival
  double loss_before = std::numeric_limits<double>::quiet_NaN();
  double loss_after = std::numeric_limits<double>::quiet_NaN();
};

// Day-time adaptation of one test image against a frozen model:
// key -> support -> prompt init -> one Adam step on the alignment loss ->
// inference on the adapted image -> bank push -> counter increment.
DayRecord adapt_one(const SegModelState& model, MemoryBank& bank, WarmupSchedule& schedule, const RealGrid& image,
                    const DayConfig& cfg, std::uint64_t source_id = 0);

}  // namespace dyna
