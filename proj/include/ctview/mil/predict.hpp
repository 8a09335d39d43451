#pragma once

#include <optional>
#include <vector>

#include "ctview/mil/network.hpp"

namespace ctview::mil {

struct PredictionResult {
  double p_negative = 0.5;
  double p_positive = 0.5;
  std::vector<double> attention;
  // Per-slice Grad-CAM maps, same layout as the bag, values in [0, 1].
  std::optional<SliceStack> heatmap;
};

// Grad-CAM for every slice: channel weights are the spatial mean of
// d(positive logit)/dA over the last conv activation A, with the gradient
// taken through attention pooling; map = ReLU(sum_c alpha_c A_c), upsampled
// bilinearly to the bag side and divided by the maximum over the whole bag.
SliceStack grad_cam(const MilModel& model, const SliceStack& bag);

// Throws InvalidArgument for an uninitialised or non-finite model.
PredictionResult predict(const MilModel& model, const SliceStack& bag, bool with_heatmap);

}  // namespace ctview::mil
