#pragma once

#include <vector>

#include "dyna/sample.hpp"
#include "dyna/segnet.hpp"

namespace dyna {

// 2|A n B| / (|A| + |B|) after binarizing pred at threshold (strictly greater
// counts as foreground). Two empty masks score 1.
double dice(const RealGrid& pred, const RealGrid& gt, double threshold = 0.5);

// Mean Dice of running-statistics inference over a labeled set.
double mean_dice(const SegModelState& model, const std::vector<LabeledSample>& samples);

}  // namespace dyna
