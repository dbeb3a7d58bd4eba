#include "dyna/day_adapter.hpp"

#include <cmath>

#include "dyna/optim.hpp"

namespace dyna {

double warmup_lambda(std::uint64_t i, double tau) {
  if (i < 1) throw DomainError("warm-up index starts at 1");
  if (!(tau > 0.0)) throw DomainError("warm-up temperature must be positive");
  return 1.0 / (std::sqrt(static_cast<double>(i)) / tau + 1.0);
}

WarmupSchedule::WarmupSchedule(double tau, std::uint64_t start) : tau_(tau), index_(start) {
  if (!(tau > 0.0)) throw DomainError("warm-up temperature must be positive");
  if (start < 1) throw DomainError("warm-up index starts at 1");
}

std::vector<ChannelStats> warmup_statistics(std::uint64_t i, double tau, const ForwardTrace& trace) {
  const double lambda = warmup_lambda(i, tau);
  std::vector<ChannelStats> warm;
  warm.reserve(trace.size());
  for (const BatchNormTrace& tr : trace) {
    const ChannelStats t = tr.batch_stats();
    warm.push_back({lambda * t.mean + (1.0 - lambda) * tr.running_mean, lambda * t.std + (1.0 - lambda) * tr.running_std});
  }
  return warm;
}

std::vector<int> alignment_layers(bool encoder_only) {
  const int count = encoder_only ? SegModelState::kEncoderBatchNormLayers : SegModelState::kBatchNormLayers;
  std::vector<int> layers(static_cast<std::size_t>(count));
  for (int h = 0; h < count; ++h) layers[static_cast<std::size_t>(h)] = h;
  return layers;
}

Var prompt_alignment_loss(const ForwardTrace& trace, const std::vector<ChannelStats>& warm, bool encoder_only) {
  if (trace.size() != warm.size()) throw ShapeError("alignment loss: trace and warm-up statistics differ in layer count");
  if (trace.empty()) throw ShapeError("alignment loss: no BN layers");
  // A trace shorter than the full network (unit tests) uses all its layers.
  std::vector<int> layers = alignment_layers(encoder_only);
  if (trace.size() < static_cast<std::size_t>(SegModelState::kBatchNormLayers)) {
    layers.clear();
    for (int h = 0; h < static_cast<int>(trace.size()); ++h) layers.push_back(h);
  }
  Var total;
  for (int h : layers) {
    const BatchNormTrace& tr = trace[static_cast<std::size_t>(h)];
    const ChannelStats& w = warm[static_cast<std::size_t>(h)];
    const Shape s = tr.batch_mean.value().shape();
    if (w.mean.size() != s.size() || w.std.size() != s.size()) throw ShapeError("alignment loss: channel count mismatch");
    Var term = add(mean_abs_diff(tr.batch_mean, RealGrid(s, w.mean)), mean_abs_diff(tr.batch_std, RealGrid(s, w.std)));
    total = total.valid() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(layers.size()));
}

double prompt_alignment_loss(const std::vector<ChannelStats>& test, const std::vector<ChannelStats>& warm,
                             const std::vector<int>& layers) {
  if (test.size() != warm.size()) throw ShapeError("alignment loss: layer count mismatch");
  if (layers.empty()) throw ShapeError("alignment loss: no BN layers");
  double total = 0.0;
  for (int h : layers) {
    const auto& t = test.at(static_cast<std::size_t>(h));
    const auto& w = warm.at(static_cast<std::size_t>(h));
    if (t.mean.size() != w.mean.size() || t.std.size() != w.std.size()) {
      throw ShapeError("alignment loss: channel count mismatch");
    }
    total += (t.mean - w.mean).abs().mean() + (t.std - w.std).abs().mean();
  }
  return total / static_cast<double>(layers.size());
}

namespace {

std::vector<ChannelStats> batch_statistics(const ForwardTrace& trace) {
  std::vector<ChannelStats> s;
  for (const BatchNormTrace& tr : trace) s.push_back(tr.batch_stats());
  return s;
}

}  // namespace

DayRecord adapt_one(const SegModelState& model, MemoryBank& bank, WarmupSchedule& schedule, const RealGrid& image,
                    const DayConfig& cfg, std::uint64_t source_id) {
  if (image.batch() != 1) throw ShapeError("adapt_one: test batch size must be 1");
  const SpectralDecomposition spectrum = spectral_decompose(image);
  SpectralKey key = low_freq_key(spectrum.amplitude, cfg.beta, source_id);
  const LowFreqPrompt fallback = LowFreqPrompt::identity(image.shape(), cfg.beta);
  LowFreqPrompt prompt = init_prompt(bank.retrieve_support(key, cfg.support_size), fallback);

  // The batch statistics of the taped pass are those of a plain Batch-mode
  // pass on the same prompted image, so one pass yields both the warm-up
  // targets and the differentiable loss.
  Tape tape;
  Var p = tape.leaf(prompt.values());
  ForwardResult fwd = forward(model, apply_prompt(image, p), BatchStats{});
  const std::vector<ChannelStats> warm = warmup_statistics(schedule.index(), schedule.tau(), fwd.trace);
  Var loss = prompt_alignment_loss(fwd.trace, warm, cfg.encoder_only_loss);
  tape.backward(loss);

  DayRecord record;
  record.sample_index = schedule.index();
  record.loss_before = loss.value().values()[0];

  Eigen::VectorXd values = prompt.values().values().matrix();
  OptimState adam = make_adam(cfg.prompt_lr);
  adam_step(values, p.grad().values().matrix(), adam);
  prompt.values().values() = values.array();
  if (!prompt.values().all_finite()) throw NumericError("adapt_one: prompt update produced non-finite values");

  const RealGrid adapted = apply_prompt(image, prompt);
  if (cfg.measure_descent) {
    Tape probe(false);
    const ForwardResult after = forward(model, probe.constant(adapted), BatchStats{});
    record.loss_after = prompt_alignment_loss(batch_statistics(after.trace), warm, alignment_layers(cfg.encoder_only_loss));
  }
  record.pseudo_label = cfg.infer_with_warmup ? predict(model, adapted, InjectedStats{warm}) : predict(model, adapted);
  record.image = image;
  record.prompt = prompt;

  bank.push(std::move(key), std::move(prompt));
  schedule.advance();
  return record;
}

}  // namespace dyna
