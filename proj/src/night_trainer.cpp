#include "dyna/night_trainer.hpp"

#include <numeric>

#include "dyna/optim.hpp"

namespace dyna {

TrioModels TrioModels::from_source(const SegModelState& source, double alpha) {
  return TrioModels{source, source, source, 1, alpha};
}

RealGrid agreement_mask(const RealGrid& pseudo, const RealGrid& global_pred, const RealGrid& teacher_pred,
                        double threshold) {
  require_same_shape(pseudo.shape(), global_pred.shape(), "agreement_mask");
  require_same_shape(pseudo.shape(), teacher_pred.shape(), "agreement_mask");
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("agreement_mask: threshold must lie in (0, 1)");
  const auto& y = pseudo.values();
  const auto& g = global_pred.values();
  const auto& t = teacher_pred.values();
  const auto all_above = (y > threshold) && (g > threshold) && (t > threshold);
  const auto all_below = (y <= threshold) && (g <= threshold) && (t <= threshold);
  return RealGrid(pseudo.shape(), (all_above || all_below).cast<double>());
}

Var student_loss(Var student_pred, const RealGrid& global_pred, const RealGrid& teacher_pred, const RealGrid& pseudo,
                 const RealGrid& mask) {
  if (((mask.values() != 0.0) && (mask.values() != 1.0)).any()) throw DomainError("student_loss: mask must be binary");
  Var loss = masked_bce(student_pred, mask, global_pred);
  loss = add(loss, masked_bce(student_pred, mask, teacher_pred));
  return add(loss, masked_bce(student_pred, mask, pseudo));
}

NightIterationStats night_iteration(TrioModels& trio, const std::vector<const DayRecord*>& batch,
                                    const NightConfig& cfg, Rng& rng) {
  if (batch.empty()) throw Error("night_iteration: empty batch");
  std::vector<RealGrid> strong;
  std::vector<RealGrid> weak;
  std::vector<RealGrid> pseudo;
  for (const DayRecord* rec : batch) {
    const RealGrid adapted = apply_prompt(rec->image, rec->prompt);
    const AugmentSpec aug = sample_augment(rng);
    RealGrid w = apply_geometric(adapted, aug.geometric);
    strong.push_back(apply_photometric(w, aug.photometric, rng));
    weak.push_back(std::move(w));
    RealGrid y = apply_geometric(rec->pseudo_label, aug.geometric);
    if (cfg.binarize_pseudo) y.values() = (y.values() > cfg.threshold).cast<double>();
    pseudo.push_back(std::move(y));
  }
  const RealGrid weak_batch = stack_grids(weak);
  const RealGrid pseudo_batch = stack_grids(pseudo);
  const RealGrid global_pred = predict(trio.global, weak_batch);
  const RealGrid teacher_pred = predict(trio.teacher, weak_batch);
  const RealGrid mask = agreement_mask(pseudo_batch, global_pred, teacher_pred, cfg.threshold);

  Tape tape;
  ForwardResult fwd = forward(trio.student, tape.constant(stack_grids(strong)), BatchStats{}, true);
  Var loss = student_loss(fwd.probs, global_pred, teacher_pred, pseudo_batch, mask);
  tape.backward(loss);
  Eigen::VectorXd params = trio.student.parameter_vector();
  OptimState sgd = make_sgd(cfg.lr);
  sgd_step(params, gather_gradients(fwd), sgd);
  trio.student.assign_parameters(params);
  update_running_stats(trio.student, fwd.trace, cfg.bn_momentum);

  const double r = static_cast<double>(trio.r);
  trio.global = weights_axpy(r / (r + 1.0), trio.global, 1.0 / (r + 1.0), trio.student);
  trio.teacher = weights_axpy(trio.alpha, trio.teacher, 1.0 - trio.alpha, trio.global);
  ++trio.r;
  return {loss.value().values()[0], mask.values().mean()};
}

SegModelState run_night(const SegModelState& source, const std::vector<DayRecord>& records, const NightConfig& cfg,
                        std::uint64_t seed) {
  if (records.empty()) throw Error("run_night: no day records");
  if (cfg.batch < 1) throw Error("run_night: batch size must be positive");
  TrioModels trio = TrioModels::from_source(source, cfg.alpha);
  Rng rng(seed);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const DayRecord*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&records[order[i]]);
      night_iteration(trio, batch, cfg, rng);
    }
  }
  return trio.teacher;
}

}  // namespace dyna
