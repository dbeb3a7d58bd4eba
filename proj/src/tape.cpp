#include "dyna/tape.hpp"

#include <cmath>

namespace dyna {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

const RealGrid& Var::value() const { return tape_->value(*this); }
RealGrid Var::grad() const { return tape_->grad(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::leaf(RealGrid value) {
  nodes_.push_back(Node{std::move(value), {}, {}, recording_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(RealGrid value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(RealGrid value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw Error("tape: input recorded on another tape");
      needs = needs || nodes_[v.id()].requires_grad;
    }
  }
  Node node{std::move(value), {}, {}, needs};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

RealGrid Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.size() == node.value.size() && node.value.size() > 0) return node.grad;
  return RealGrid(node.value.shape());
}

RealGrid& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id()];
  if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
    node.grad = RealGrid(node.value.shape());
  }
  return node.grad;
}

void Tape::accumulate(Var v, const RealGrid& g) {
  if (!nodes_[v.id()].requires_grad) return;
  RealGrid& buf = grad_buffer(v);
  require_same_shape(buf.shape(), g.shape(), "tape gradient");
  buf.values() += g.values();
}

std::size_t Tape::backward(Var root) {
  if (&root.tape() != this) throw Error("tape: root recorded on another tape");
  if (value(root).size() != 1) throw ShapeError("tape: backward root must be a scalar");
  for (Node& n : nodes_) n.grad = RealGrid();
  if (!nodes_[root.id()].requires_grad) return 0;
  grad_buffer(root).values().setConstant(1.0);
  std::size_t visited = 0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.size() == 0) continue;
    // The closure may append to other nodes' gradients but never to its own.
    const RealGrid out_grad = node.grad;
    node.backward(*this, node.value, out_grad);
    ++visited;
  }
  return visited;
}

namespace {

struct ConvGeometry {
  Index cin, cout, k, stride, pad, h, w, ho, wo;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& kernel, int stride) {
  if (kernel.c != x.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.c) + " input channels, got " +
                     std::to_string(x.c));
  }
  if (kernel.h != kernel.w || kernel.h % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd size");
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  ConvGeometry g{x.c, kernel.n, kernel.h, stride, kernel.h / 2, x.h, x.w, 0, 0};
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

// Column matrix (cin*k*k) x (ho*wo) for one batch item.
void im2col(const double* x, const ConvGeometry& g, RowMatrix& col) {
  col.resize(g.cin * g.k * g.k, g.ho * g.wo);
  for (Index c = 0; c < g.cin; ++c) {
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        double* row = col.data() + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * g.stride + ky - g.pad;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + iy) * g.w;
          for (Index ox = 0; ox < g.wo; ++ox) {
            const Index ix = ox * g.stride + kx - g.pad;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const RowMatrix& col, const ConvGeometry& g, double* dx) {
  for (Index c = 0; c < g.cin; ++c) {
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const double* row = col.data() + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = dx + (c * g.h + iy) * g.w;
          const double* src = row + oy * g.wo;
          for (Index ox = 0; ox < g.wo; ++ox) {
            const Index ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_channel_vector(const Shape& v, Index channels, const char* what) {
  if (v.size() != channels || v.c != channels) {
    throw ShapeError(std::string(what) + ": expected (1," + std::to_string(channels) + ",1,1), got " + v.str());
  }
}

// Sums over batch and spatial positions per channel.
Eigen::ArrayXd channel_sums(const RealGrid& t) {
  Eigen::ArrayXd s = Eigen::ArrayXd::Zero(t.channels());
  for (Index n = 0; n < t.batch(); ++n)
    for (Index c = 0; c < t.channels(); ++c) s[c] += t.plane(n, c).sum();
  return s;
}

Shape channel_shape(Index c) { return Shape{1, c, 1, 1}; }

}  // namespace

Var conv2d(Var x, Var kernel, Var bias, int stride) {
  const RealGrid& xv = x.value();
  const RealGrid& kv = kernel.value();
  const ConvGeometry g = conv_geometry(xv.shape(), kv.shape(), stride);
  require_channel_vector(bias.value().shape(), g.cout, "conv2d bias");

  RealGrid out(Shape{xv.batch(), g.cout, g.ho, g.wo});
  const ConstRowMap wmat(kv.data(), g.cout, g.cin * g.k * g.k);
  const Eigen::Map<const Eigen::VectorXd> b(bias.value().data(), g.cout);
  RowMatrix col;
  for (Index n = 0; n < xv.batch(); ++n) {
    im2col(xv.data() + xv.offset(n, 0, 0, 0), g, col);
    RowMap o(out.data() + out.offset(n, 0, 0, 0), g.cout, g.ho * g.wo);
    o.noalias() = wmat * col;
    o.colwise() += b;
  }

  return x.tape().record(std::move(out), {x, kernel, bias}, [x, kernel, bias, g](Tape& tape, const RealGrid&, const RealGrid& dy) {
    const RealGrid& xv = x.value();
    const RealGrid& kv = kernel.value();
    const ConstRowMap wmat(kv.data(), g.cout, g.cin * g.k * g.k);
    const bool need_x = tape.requires_grad(x);
    const bool need_w = tape.requires_grad(kernel);
    const bool need_b = tape.requires_grad(bias);
    RowMatrix dw = RowMatrix::Zero(g.cout, g.cin * g.k * g.k);
    Eigen::VectorXd db = Eigen::VectorXd::Zero(g.cout);
    RowMatrix col;
    RowMatrix dcol;
    double* dx = need_x ? tape.grad_buffer(x).data() : nullptr;
    for (Index n = 0; n < xv.batch(); ++n) {
      const ConstRowMap d(dy.data() + dy.offset(n, 0, 0, 0), g.cout, g.ho * g.wo);
      if (need_w) {
        im2col(xv.data() + xv.offset(n, 0, 0, 0), g, col);
        dw.noalias() += d * col.transpose();
      }
      if (need_b) db += d.rowwise().sum();
      if (need_x) {
        dcol.noalias() = wmat.transpose() * d;
        col2im_add(dcol, g, dx + xv.offset(n, 0, 0, 0));
      }
    }
    if (need_w) RowMap(tape.grad_buffer(kernel).data(), dw.rows(), dw.cols()) += dw;
    if (need_b) Eigen::Map<Eigen::VectorXd>(tape.grad_buffer(bias).data(), g.cout) += db;
  });
}

Var channel_mean(Var x) {
  const RealGrid& xv = x.value();
  const double count = static_cast<double>(xv.batch() * xv.shape().plane());
  RealGrid out(channel_shape(xv.channels()), channel_sums(xv) / count);
  return x.tape().record(std::move(out), {x}, [x, count](Tape& tape, const RealGrid&, const RealGrid& dm) {
    RealGrid& dx = tape.grad_buffer(x);
    for (Index n = 0; n < dx.batch(); ++n)
      for (Index c = 0; c < dx.channels(); ++c) dx.plane(n, c).array() += dm.values()[c] / count;
  });
}

Var channel_std(Var x, Var mean, double eps) {
  const RealGrid& xv = x.value();
  require_channel_vector(mean.value().shape(), xv.channels(), "channel_std mean");
  if (eps < 0.0) throw DomainError("channel_std: eps must be nonnegative");
  const double count = static_cast<double>(xv.batch() * xv.shape().plane());
  Eigen::ArrayXd var = Eigen::ArrayXd::Zero(xv.channels());
  for (Index n = 0; n < xv.batch(); ++n)
    for (Index c = 0; c < xv.channels(); ++c)
      var[c] += (xv.plane(n, c).array() - mean.value().values()[c]).square().sum();
  RealGrid out(channel_shape(xv.channels()), (var / count + eps).sqrt());
  if ((out.values() <= 0.0).any()) throw DomainError("channel_std: zero deviation with eps = 0");
  return x.tape().record(std::move(out), {x, mean},
                         [x, mean, count](Tape& tape, const RealGrid& s, const RealGrid& ds) {
                           const RealGrid& xv = x.value();
                           const Eigen::ArrayXd& m = mean.value().values();
                           // ds/dx_i = (x_i - m) / (count * s), ds/dm = -mean(x - m) / s
                           const Eigen::ArrayXd coef = ds.values() / (count * s.values());
                           const bool need_x = tape.requires_grad(x);
                           Eigen::ArrayXd centered_sum = Eigen::ArrayXd::Zero(xv.channels());
                           RealGrid* dx = need_x ? &tape.grad_buffer(x) : nullptr;
                           for (Index n = 0; n < xv.batch(); ++n) {
                             for (Index c = 0; c < xv.channels(); ++c) {
                               const auto centered = xv.plane(n, c).array() - m[c];
                               centered_sum[c] += centered.sum();
                               if (dx) dx->plane(n, c).array() += coef[c] * centered;
                             }
                           }
                           if (tape.requires_grad(mean)) {
                             tape.grad_buffer(mean).values() -= coef * centered_sum;
                           }
                         });
}

Var normalize(Var x, Var mean, Var std) {
  const RealGrid& xv = x.value();
  require_channel_vector(mean.value().shape(), xv.channels(), "normalize mean");
  require_channel_vector(std.value().shape(), xv.channels(), "normalize std");
  const Eigen::ArrayXd& m = mean.value().values();
  const Eigen::ArrayXd& s = std.value().values();
  if ((s <= 0.0).any()) throw DomainError("batch_norm: sigma must be positive");
  RealGrid out(xv.shape());
  for (Index n = 0; n < xv.batch(); ++n)
    for (Index c = 0; c < xv.channels(); ++c) out.plane(n, c).array() = (xv.plane(n, c).array() - m[c]) / s[c];
  return x.tape().record(std::move(out), {x, mean, std},
                         [x, mean, std](Tape& tape, const RealGrid& y, const RealGrid& dy) {
                           const Eigen::ArrayXd& s = std.value().values();
                           const Index channels = s.size();
                           Eigen::ArrayXd dy_sum = Eigen::ArrayXd::Zero(channels);
                           Eigen::ArrayXd dy_y_sum = Eigen::ArrayXd::Zero(channels);
                           const bool need_x = tape.requires_grad(x);
                           RealGrid* dx = need_x ? &tape.grad_buffer(x) : nullptr;
                           for (Index n = 0; n < dy.batch(); ++n) {
                             for (Index c = 0; c < channels; ++c) {
                               const auto d = dy.plane(n, c).array();
                               dy_sum[c] += d.sum();
                               dy_y_sum[c] += (d * y.plane(n, c).array()).sum();
                               if (dx) dx->plane(n, c).array() += d / s[c];
                             }
                           }
                           if (tape.requires_grad(mean)) tape.grad_buffer(mean).values() -= dy_sum / s;
                           // dy/ds = -(x - m)/s^2 = -y/s
                           if (tape.requires_grad(std)) tape.grad_buffer(std).values() -= dy_y_sum / s;
                         });
}

Var scale_shift(Var x, Var gamma, Var beta) {
  const RealGrid& xv = x.value();
  require_channel_vector(gamma.value().shape(), xv.channels(), "scale_shift gamma");
  require_channel_vector(beta.value().shape(), xv.channels(), "scale_shift beta");
  const Eigen::ArrayXd& g = gamma.value().values();
  const Eigen::ArrayXd& b = beta.value().values();
  RealGrid out(xv.shape());
  for (Index n = 0; n < xv.batch(); ++n)
    for (Index c = 0; c < xv.channels(); ++c) out.plane(n, c).array() = g[c] * xv.plane(n, c).array() + b[c];
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [x, gamma, beta](Tape& tape, const RealGrid&, const RealGrid& dy) {
                           const RealGrid& xv = x.value();
                           const Eigen::ArrayXd& g = gamma.value().values();
                           const Index channels = g.size();
                           Eigen::ArrayXd dg = Eigen::ArrayXd::Zero(channels);
                           const bool need_x = tape.requires_grad(x);
                           RealGrid* dx = need_x ? &tape.grad_buffer(x) : nullptr;
                           for (Index n = 0; n < dy.batch(); ++n) {
                             for (Index c = 0; c < channels; ++c) {
                               const auto d = dy.plane(n, c).array();
                               dg[c] += (d * xv.plane(n, c).array()).sum();
                               if (dx) dx->plane(n, c).array() += g[c] * d;
                             }
                           }
                           if (tape.requires_grad(gamma)) tape.grad_buffer(gamma).values() += dg;
                           if (tape.requires_grad(beta)) tape.grad_buffer(beta).values() += channel_sums(dy);
                         });
}

Var relu(Var x) {
  RealGrid out(x.value().shape(), x.value().values().max(0.0));
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const RealGrid&, const RealGrid& dy) {
    tape.grad_buffer(x).values() += (x.value().values() > 0.0).select(dy.values(), 0.0);
  });
}

Var sigmoid(Var x) {
  const Eigen::ArrayXd& v = x.value().values();
  // exp of a nonpositive argument only, for both signs.
  const Eigen::ArrayXd e = (-v.abs()).exp();
  RealGrid out(x.value().shape(), (v >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e)));
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const RealGrid& y, const RealGrid& dy) {
    tape.grad_buffer(x).values() += dy.values() * y.values() * (1.0 - y.values());
  });
}

Var upsample2x(Var x) {
  const RealGrid& xv = x.value();
  Shape s = xv.shape();
  s.h *= 2;
  s.w *= 2;
  RealGrid out(s);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < s.h; ++y)
        for (Index xx = 0; xx < s.w; ++xx) out(n, c, y, xx) = xv(n, c, y / 2, xx / 2);
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const RealGrid&, const RealGrid& dy) {
    RealGrid& dx = tape.grad_buffer(x);
    const Shape& s = dy.shape();
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c)
        for (Index y = 0; y < s.h; ++y)
          for (Index xx = 0; xx < s.w; ++xx) dx(n, c, y / 2, xx / 2) += dy(n, c, y, xx);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value().shape(), b.value().shape(), "add");
  RealGrid out(a.value().shape(), a.value().values() + b.value().values());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const RealGrid&, const RealGrid& dy) {
    tape.accumulate(a, dy);
    tape.accumulate(b, dy);
  });
}

Var scale(Var a, double s) {
  RealGrid out(a.value().shape(), a.value().values() * s);
  return a.tape().record(std::move(out), {a}, [a, s](Tape& tape, const RealGrid&, const RealGrid& dy) {
    tape.grad_buffer(a).values() += s * dy.values();
  });
}

Var mean_abs_diff(Var a, const RealGrid& target) {
  require_same_shape(a.value().shape(), target.shape(), "mean_abs_diff");
  const double count = static_cast<double>(target.size());
  RealGrid out(Shape{}, Eigen::ArrayXd::Constant(1, (a.value().values() - target.values()).abs().sum() / count));
  return a.tape().record(std::move(out), {a}, [a, target, count](Tape& tape, const RealGrid&, const RealGrid& dy) {
    const Eigen::ArrayXd diff = a.value().values() - target.values();
    tape.grad_buffer(a).values() += dy.values()[0] / count * diff.sign();
  });
}

Var masked_bce(Var pred, const RealGrid& mask, const RealGrid& target, double clamp_eps) {
  const RealGrid& p = pred.value();
  require_same_shape(p.shape(), mask.shape(), "masked_bce mask");
  require_same_shape(p.shape(), target.shape(), "masked_bce target");
  const auto in_unit = [](const Eigen::ArrayXd& v) { return (v >= 0.0).all() && (v <= 1.0).all(); };
  if (!in_unit(p.values()) || !in_unit(target.values()) || !in_unit(mask.values())) {
    throw DomainError("masked_bce: probabilities must lie in [0, 1]");
  }
  const double count = static_cast<double>(p.size());
  const Eigen::ArrayXd q = mask.values() * target.values();
  const Eigen::ArrayXd raw = mask.values() * p.values();
  const Eigen::ArrayXd pc = raw.max(clamp_eps).min(1.0 - clamp_eps);
  const double loss = -(q * pc.log() + (1.0 - q) * (1.0 - pc).log()).sum() / count;
  RealGrid out(Shape{}, Eigen::ArrayXd::Constant(1, loss));
  return pred.tape().record(
      std::move(out), {pred}, [pred, mask, q, raw, pc, count, clamp_eps](Tape& tape, const RealGrid&, const RealGrid& dy) {
        const Eigen::ArrayXd inside = ((raw >= clamp_eps) && (raw <= 1.0 - clamp_eps)).cast<double>();
        const Eigen::ArrayXd dpc = (-q / pc + (1.0 - q) / (1.0 - pc)) / count;
        tape.grad_buffer(pred).values() += dy.values()[0] * inside * mask.values() * dpc;
      });
}

BatchNormOutput batch_norm_batch(Var x, Var gamma, Var beta, double eps) {
  Var mean = channel_mean(x);
  Var std = channel_std(x, mean, eps);
  Var y = scale_shift(normalize(x, mean, std), gamma, beta);
  return {y, mean, std};
}

Var batch_norm_fixed(Var x, const Eigen::ArrayXd& mean, const Eigen::ArrayXd& std, Var gamma, Var beta) {
  Tape& tape = x.tape();
  const Shape s = channel_shape(x.value().channels());
  Var m = tape.constant(RealGrid(s, mean));
  Var sd = tape.constant(RealGrid(s, std));
  return scale_shift(normalize(x, m, sd), gamma, beta);
}

RealGrid batch_norm(const RealGrid& x, const Eigen::ArrayXd& mean, const Eigen::ArrayXd& std,
                    const Eigen::ArrayXd& gamma, const Eigen::ArrayXd& beta) {
  const Index c = x.channels();
  if (mean.size() != c || std.size() != c || gamma.size() != c || beta.size() != c) {
    throw ShapeError("batch_norm: statistics length must equal channel count");
  }
  Tape tape(false);
  const Shape s = channel_shape(c);
  return batch_norm_fixed(tape.constant(x), mean, std, tape.constant(RealGrid(s, gamma)),
                          tape.constant(RealGrid(s, beta)))
      .value();
}

}  // namespace dyna
