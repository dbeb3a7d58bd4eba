#pragma once

#include <cstdint>
#include <vector>

#include "dyna/augment.hpp"
#include "dyna/day_adapter.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

struct NightConfig {
  int epochs = 10;
  int batch = 4;
  double lr = 0.001;
  double alpha = 0.995;
  double threshold = 0.5;  // T
  bool binarize_pseudo = false;
  double bn_momentum = 0.1;
};

// Student, global student and teacher of one night. r is the iteration index
// of the global average, starting at 1.
struct TrioModels {
  SegModelState student;
  SegModelState global;
  SegModelState teacher;
  std::uint64_t r = 1;
  double alpha = 0.995;

  static TrioModels from_source(const SegModelState& source, double alpha);
};

// 1 where the pseudo-label and both predictions are all > T or all <= T.
RealGrid agreement_mask(const RealGrid& pseudo, const RealGrid& global_pred, const RealGrid& teacher_pred, double threshold);

// BCE(I*Ps, I*Pg) + BCE(I*Ps, I*Pt) + BCE(I*Ps, I*Y); the three targets are constants.
Var student_loss(Var student_pred, const RealGrid& global_pred, const RealGrid& teacher_pred, const RealGrid& pseudo,
                 const RealGrid& mask);

struct NightIterationStats {
  double loss = 0.0;
  double mask_fraction = 0.0;
};

// One optimization iteration over a batch of day records: augment, predict,
// mask, SGD step on the student (with running-stat update), then
// f_glo <- (r f_glo + f_stu) / (r + 1) and f_tea <- alpha f_tea + (1 - alpha) f_glo.
NightIterationStats night_iteration(TrioModels& trio, const std::vector<const DayRecord*>& batch,
                                    const NightConfig& cfg, Rng& rng);

// Self-training over the day's records; returns the teacher as the next-day model.
SegModelState run_night(const SegModelState& source, const std::vector<DayRecord>& records, const NightConfig& cfg,
                        std::uint64_t seed);

}  // namespace dyna
