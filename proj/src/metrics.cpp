#include "dyna/metrics.hpp"

namespace dyna {

double dice(const RealGrid& pred, const RealGrid& gt, double threshold) {
  require_same_shape(pred.shape(), gt.shape(), "dice");
  const auto a = (pred.values() > threshold).cast<double>();
  const auto b = (gt.values() > 0.5).cast<double>();
  const double sa = a.sum();
  const double sb = b.sum();
  if (sa + sb == 0.0) return 1.0;
  return 2.0 * (a * b).sum() / (sa + sb);
}

double mean_dice(const SegModelState& model, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw Error("mean_dice: empty sample set");
  double total = 0.0;
  for (const LabeledSample& s : samples) total += dice(predict(model, s.image), s.mask);
  return total / static_cast<double>(samples.size());
}

}  // namespace dyna
