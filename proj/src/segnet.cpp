#include "dyna/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

#include "dyna/optim.hpp"
#include "dyna/rng.hpp"

namespace dyna {

namespace {

struct ConvSpec {
  const char* name;
  int in;   // -1: model input channels
  int out;  // -1: model output channels
  int kernel;
  int stride;
};

constexpr ConvSpec kConvs[] = {
    {"enc1", -1, 8, 3, 1}, {"enc2", 8, 16, 3, 2}, {"enc3", 16, 32, 3, 2},
    {"dec1", 32, 16, 3, 1}, {"dec2", 16, 8, 3, 1}, {"head", 8, -1, 1, 1},
};
constexpr int kBnWidths[SegModelState::kBatchNormLayers] = {8, 16, 32, 16, 8};

Shape vec_shape(Index c) { return Shape{1, c, 1, 1}; }

std::string bn_prefix(int layer) { return std::string(kConvs[layer].name) + ".bn"; }

void require_layer(int layer) {
  if (layer < 0 || layer >= SegModelState::kBatchNormLayers) throw Error("batch-norm layer index out of range");
}

}  // namespace

std::string SegModelState::architecture_tag(Index in_channels, Index out_channels) {
  return "tiny-unet-v1/in" + std::to_string(in_channels) + "/out" + std::to_string(out_channels);
}

SegModelState SegModelState::from_architecture(const std::string& tag) {
  static const std::regex pattern(R"(tiny-unet-v1/in([0-9]+)/out([0-9]+))");
  std::smatch m;
  if (!std::regex_match(tag, m, pattern)) throw FormatError("unknown architecture tag '" + tag + "'");
  const Index in = std::stol(m[1].str());
  const Index out = std::stol(m[2].str());
  if (in < 1 || out < 1 || in > 64 || out > 64) throw FormatError("architecture tag channel counts out of range");

  SegModelState s;
  s.arch_ = tag;
  s.in_channels_ = in;
  s.out_channels_ = out;
  int bn = 0;
  for (const ConvSpec& c : kConvs) {
    const Index cin = c.in < 0 ? in : c.in;
    const Index cout = c.out < 0 ? out : c.out;
    const std::string base = c.name;
    s.params_.push_back({base + ".conv.weight", RealGrid(Shape{cout, cin, c.kernel, c.kernel})});
    s.params_.push_back({base + ".conv.bias", RealGrid(vec_shape(cout))});
    if (std::string_view(c.name) != "head") {
      s.params_.push_back({base + ".bn.gamma", RealGrid(vec_shape(kBnWidths[bn]))});
      s.params_.push_back({base + ".bn.beta", RealGrid(vec_shape(kBnWidths[bn]))});
      s.buffers_.push_back({base + ".bn.running_mean", RealGrid(vec_shape(kBnWidths[bn]))});
      s.buffers_.push_back({base + ".bn.running_std", RealGrid(vec_shape(kBnWidths[bn]), 1.0)});
      ++bn;
    }
  }
  return s;
}

SegModelState SegModelState::initialize(Index in_channels, Index out_channels, std::uint64_t seed) {
  SegModelState s = from_architecture(architecture_tag(in_channels, out_channels));
  Rng rng(Rng::mix(seed, 0x5E6'0001));
  for (NamedTensor& t : s.params_) {
    if (t.name.ends_with(".conv.weight")) {
      const Shape& k = t.value.shape();
      const double fan_in = static_cast<double>(k.c * k.h * k.w);
      const bool head = t.name.starts_with("head");
      const double sd = std::sqrt((head ? 1.0 : 2.0) / fan_in);
      for (Index i = 0; i < t.value.size(); ++i) t.value.values()[i] = sd * rng.normal();
    } else if (t.name.ends_with(".bn.gamma")) {
      t.value.values().setOnes();
    }
  }
  return s;
}

const RealGrid& SegModelState::tensor(const std::string& name) const {
  for (const auto* list : {&params_, &buffers_})
    for (const NamedTensor& t : *list)
      if (t.name == name) return t.value;
  throw Error("model has no tensor named '" + name + "'");
}

RealGrid& SegModelState::tensor(const std::string& name) {
  return const_cast<RealGrid&>(static_cast<const SegModelState&>(*this).tensor(name));
}

Eigen::ArrayXd SegModelState::running_mean(int layer) const {
  require_layer(layer);
  return tensor(bn_prefix(layer) + ".running_mean").values();
}

Eigen::ArrayXd SegModelState::running_std(int layer) const {
  require_layer(layer);
  return tensor(bn_prefix(layer) + ".running_std").values();
}

void SegModelState::set_running_stats(int layer, const ChannelStats& stats) {
  require_layer(layer);
  RealGrid& m = tensor(bn_prefix(layer) + ".running_mean");
  RealGrid& s = tensor(bn_prefix(layer) + ".running_std");
  if (stats.mean.size() != m.size() || stats.std.size() != s.size()) {
    throw ShapeError("running statistics length does not match layer width");
  }
  if ((stats.std <= 0.0).any()) throw DomainError("running std must be positive");
  m.values() = stats.mean;
  s.values() = stats.std;
}

Index SegModelState::parameter_count() const {
  Index n = 0;
  for (const NamedTensor& t : params_) n += t.value.size();
  return n;
}

Index SegModelState::flat_size() const {
  Index n = parameter_count();
  for (const NamedTensor& t : buffers_) n += t.value.size();
  return n;
}

Eigen::VectorXd SegModelState::parameter_vector() const {
  Eigen::VectorXd flat(parameter_count());
  Index pos = 0;
  for (const NamedTensor& t : params_) {
    flat.segment(pos, t.value.size()) = t.value.values().matrix();
    pos += t.value.size();
  }
  return flat;
}

void SegModelState::assign_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
  Index pos = 0;
  for (NamedTensor& t : params_) {
    t.value.values() = flat.segment(pos, t.value.size()).array();
    pos += t.value.size();
  }
}

Eigen::VectorXd SegModelState::flatten() const {
  Eigen::VectorXd flat(flat_size());
  Index pos = 0;
  for (const auto* list : {&params_, &buffers_}) {
    for (const NamedTensor& t : *list) {
      flat.segment(pos, t.value.size()) = t.value.values().matrix();
      pos += t.value.size();
    }
  }
  return flat;
}

void SegModelState::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != flat_size()) throw ShapeError("flat model vector has the wrong length");
  Index pos = 0;
  for (auto* list : {&params_, &buffers_}) {
    for (NamedTensor& t : *list) {
      t.value.values() = flat.segment(pos, t.value.size()).array();
      pos += t.value.size();
    }
  }
}

bool SegModelState::operator==(const SegModelState& other) const {
  if (arch_ != other.arch_) return false;
  const auto same = [](const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || !(a[i].value.shape() == b[i].value.shape())) return false;
      if (!(a[i].value.values() == b[i].value.values()).all()) return false;
    }
    return true;
  };
  return same(params_, other.params_) && same(buffers_, other.buffers_);
}

ForwardResult forward(const SegModelState& model, Var input, const StatsMode& mode, bool bind_params) {
  const Shape& s = input.value().shape();
  if (s.c != model.in_channels()) {
    throw ShapeError("forward: model expects " + std::to_string(model.in_channels()) + " input channels, got " +
                     std::to_string(s.c));
  }
  if (s.h < 16 || s.w < 16 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("forward: spatial size must be at least 16x16 and divisible by 4, got " + s.str());
  }
  const auto* injected = std::get_if<InjectedStats>(&mode);
  if (injected && static_cast<int>(injected->layers.size()) != SegModelState::kBatchNormLayers) {
    throw ShapeError("forward: injected statistics must supply one entry per BN layer");
  }

  Tape& tape = input.tape();
  ForwardResult result;
  std::vector<Var> vars;
  vars.reserve(model.parameters().size());
  for (const NamedTensor& t : model.parameters()) vars.push_back(bind_params ? tape.leaf(t.value) : tape.constant(t.value));
  if (bind_params) result.params = vars;

  std::size_t next = 0;
  int bn_layer = 0;
  const auto block = [&](Var x, int stride) {
    Var w = vars[next++];
    Var b = vars[next++];
    Var gamma = vars[next++];
    Var beta = vars[next++];
    Var z = conv2d(x, w, b, stride);
    BatchNormTrace tr;
    tr.running_mean = model.running_mean(bn_layer);
    tr.running_std = model.running_std(bn_layer);
    Var y;
    if (std::holds_alternative<BatchStats>(mode)) {
      BatchNormOutput bn = batch_norm_batch(z, gamma, beta);
      y = bn.y;
      tr.batch_mean = bn.mean;
      tr.batch_std = bn.std;
    } else {
      tr.batch_mean = channel_mean(z);
      tr.batch_std = channel_std(z, tr.batch_mean, kBatchNormEps);
      if (injected) {
        const ChannelStats& st = injected->layers[static_cast<std::size_t>(bn_layer)];
        y = batch_norm_fixed(z, st.mean, st.std, gamma, beta);
      } else {
        y = batch_norm_fixed(z, tr.running_mean, tr.running_std, gamma, beta);
      }
    }
    result.trace.push_back(std::move(tr));
    ++bn_layer;
    return relu(y);
  };

  Var e1 = block(input, 1);
  Var e2 = block(e1, 2);
  Var e3 = block(e2, 2);
  Var d1 = add(block(upsample2x(e3), 1), e2);
  Var d2 = add(block(upsample2x(d1), 1), e1);
  Var hw = vars[next++];
  Var hb = vars[next++];
  result.probs = sigmoid(conv2d(d2, hw, hb, 1));
  return result;
}

void update_running_stats(SegModelState& model, const ForwardTrace& trace, double momentum) {
  if (static_cast<int>(trace.size()) != SegModelState::kBatchNormLayers) {
    throw ShapeError("update_running_stats: trace does not match the architecture");
  }
  for (int h = 0; h < SegModelState::kBatchNormLayers; ++h) {
    const BatchNormTrace& tr = trace[static_cast<std::size_t>(h)];
    const ChannelStats batch = tr.batch_stats();
    model.set_running_stats(h, {(1.0 - momentum) * model.running_mean(h) + momentum * batch.mean,
                                (1.0 - momentum) * model.running_std(h) + momentum * batch.std});
  }
}

ForwardResult forward_train(SegModelState& model, Var input, bool bind_params, double momentum) {
  ForwardResult r = forward(model, input, BatchStats{}, bind_params);
  update_running_stats(model, r.trace, momentum);
  return r;
}

Eigen::VectorXd gather_gradients(const ForwardResult& result) {
  Index total = 0;
  for (const Var& v : result.params) total += v.value().size();
  Eigen::VectorXd g(total);
  Index pos = 0;
  for (const Var& v : result.params) {
    g.segment(pos, v.value().size()) = v.grad().values().matrix();
    pos += v.value().size();
  }
  return g;
}

RealGrid predict(const SegModelState& model, const RealGrid& batch, const StatsMode& mode) {
  Tape tape(false);
  return forward(model, tape.constant(batch), mode).probs.value();
}

SegModelState weights_axpy(double a, const SegModelState& w1, double b, const SegModelState& w2) {
  if (w1.architecture() != w2.architecture()) {
    throw ShapeError("weights_axpy: architecture mismatch '" + w1.architecture() + "' vs '" + w2.architecture() + "'");
  }
  SegModelState out = w1;
  out.assign_flat(a * w1.flatten() + b * w2.flatten());
  return out;
}

SourceTrainResult train_source(const std::vector<LabeledSample>& dataset, const SourceTrainConfig& cfg) {
  if (dataset.empty()) throw Error("train_source: empty dataset");
  if (cfg.batch_size < 1) throw Error("train_source: batch size must be positive");
  const Index in_channels = dataset.front().image.channels();
  const Index out_channels = dataset.front().mask.channels();
  SourceTrainResult result{SegModelState::initialize(in_channels, out_channels, cfg.seed), {}};
  SegModelState& model = result.model;
  OptimState opt = make_adam(cfg.lr);
  Rng rng(Rng::mix(cfg.seed, 0x5E6'0002));

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<RealGrid> images;
      std::vector<RealGrid> masks;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(dataset[order[i]].image);
        masks.push_back(dataset[order[i]].mask);
      }
      Tape tape;
      const RealGrid target = stack_grids(masks);
      ForwardResult r = forward_train(model, tape.constant(stack_grids(images)), true);
      Var loss = masked_bce(r.probs, RealGrid::ones(target.shape()), target);
      tape.backward(loss);
      Eigen::VectorXd params = model.parameter_vector();
      adam_step(params, gather_gradients(r), opt);
      model.assign_parameters(params);
      loss_sum += loss.value().values()[0];
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  return result;
}

}  // namespace dyna
