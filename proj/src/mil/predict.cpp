#include "ctview/mil/predict.hpp"

#include <algorithm>

#include "ctview/resample.hpp"

namespace ctview::mil {

namespace {

void check_model(const MilModel& model) {
  if (!model.initialized()) throw InvalidArgument("classifier model has not been trained or loaded");
  if (!model.finite()) throw InvalidArgument("classifier model has non-finite parameters");
}

SliceStack cam_from_forward(const MilModel& model, const BagForward& f, int side) {
  const int grid = model.config().extractor.last_side();
  Vector dlogits = Vector::Zero(2);
  dlogits(1) = 1.0;
  std::vector<Matrix> dA;
  backpropagate(model, f, dlogits, Vector(), {}, &dA);

  SliceStack maps;
  maps.depth = static_cast<int>(f.traces.size());
  maps.side = side;
  maps.values.assign(static_cast<std::size_t>(maps.depth) * maps.slice_size(), 0.0f);
  std::vector<double> small(static_cast<std::size_t>(grid) * grid);
  std::vector<double> big(maps.slice_size());
  double peak = 0.0;
  std::vector<std::vector<double>> upsampled(maps.depth);
  for (int k = 0; k < maps.depth; ++k) {
    const Matrix& a = f.traces[k].conv.back();
    const Vector alpha = dA[k].rowwise().mean();
    const Vector cam = (a.transpose() * alpha).cwiseMax(0.0);
    std::copy(cam.data(), cam.data() + cam.size(), small.begin());
    resize_bilinear(small.data(), grid, grid, big.data(), side, side);
    peak = std::max(peak, *std::max_element(big.begin(), big.end()));
    upsampled[k] = big;
  }
  for (int k = 0; k < maps.depth; ++k) {
    float* dst = maps.slice(k);
    for (std::size_t i = 0; i < big.size(); ++i) {
      dst[i] = peak > 0.0 ? static_cast<float>(std::clamp(upsampled[k][i] / peak, 0.0, 1.0)) : 0.0f;
    }
  }
  return maps;
}

}  // namespace

SliceStack grad_cam(const MilModel& model, const SliceStack& bag) {
  check_model(model);
  const BagForward f = forward_bag(model, bag, true);
  return cam_from_forward(model, f, bag.side);
}

PredictionResult predict(const MilModel& model, const SliceStack& bag, bool with_heatmap) {
  check_model(model);
  const BagForward f = forward_bag(model, bag, with_heatmap);
  PredictionResult r;
  r.p_negative = f.probs(0);
  r.p_positive = f.probs(1);
  r.attention.assign(f.attention.a.data(), f.attention.a.data() + f.attention.a.size());
  if (with_heatmap) r.heatmap = cam_from_forward(model, f, bag.side);
  return r;
}

}  // namespace ctview::mil
