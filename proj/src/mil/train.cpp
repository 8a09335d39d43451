#include "ctview/mil/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ctview::mil {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidArgument("adam: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Augmentation draw_augmentation(std::mt19937_64& rng) {
  Augmentation a;
  a.angle_deg = -10.0 + 20.0 * unit_uniform(rng);
  a.flip_horizontal = unit_uniform(rng) < 0.5;
  a.flip_vertical = unit_uniform(rng) < 0.5;
  return a;
}

SliceStack apply_augmentation(const SliceStack& bag, const Augmentation& aug) {
  SliceStack out = bag;
  const int n = bag.side;
  if (aug.angle_deg != 0.0) {
    const double theta = aug.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double centre = (n - 1) / 2.0;
    // All slices share the rotation, so the bilinear taps are built once.
    // Out-of-bounds taps point at index 0 with weight 0.
    struct Taps {
      std::array<int, 4> idx{};
      std::array<float, 4> w{};
    };
    std::vector<Taps> taps(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        // Inverse rotation of the output pixel into the source.
        const double dx = x - centre, dy = y - centre;
        const double sx = c * dx + s * dy + centre;
        const double sy = -s * dx + c * dy + centre;
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        Taps& t = taps[static_cast<std::size_t>(y) * n + x];
        for (int j = 0; j < 4; ++j) {
          const bool inside = xs[j] >= 0 && ys[j] >= 0 && xs[j] < n && ys[j] < n;
          t.idx[j] = inside ? ys[j] * n + xs[j] : 0;
          t.w[j] = inside ? static_cast<float>(ws[j]) : 0.0f;
        }
      }
    }
    for (int k = 0; k < bag.depth; ++k) {
      const float* src = bag.slice(k);
      float* dst = out.slice(k);
      for (std::size_t i = 0; i < taps.size(); ++i) {
        const Taps& t = taps[i];
        dst[i] = t.w[0] * src[t.idx[0]] + t.w[1] * src[t.idx[1]] + t.w[2] * src[t.idx[2]] +
                 t.w[3] * src[t.idx[3]];
      }
    }
  }
  if (aug.flip_horizontal || aug.flip_vertical) {
    for (int k = 0; k < out.depth; ++k) {
      float* p = out.slice(k);
      if (aug.flip_horizontal) {
        for (int y = 0; y < n; ++y) std::reverse(p + y * n, p + (y + 1) * n);
      }
      if (aug.flip_vertical) {
        for (int y = 0; y < n / 2; ++y) {
          std::swap_ranges(p + y * n, p + (y + 1) * n, p + (n - 1 - y) * n);
        }
      }
    }
  }
  return out;
}

SliceStack augment_bag(const SliceStack& bag, std::mt19937_64& rng) {
  return apply_augmentation(bag, draw_augmentation(rng));
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
}

TrainConfig TrainConfig::toy() { return {}; }

TrainConfig TrainConfig::pretrained() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.epochs = 100;
  return c;
}

TrainConfig TrainConfig::preset(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "pretrained") return pretrained();
  throw InvalidArgument("unknown training preset '" + name + "'");
}

TrainResult train(std::span<const LabeledBag> data, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  bool has[2] = {false, false};
  for (const auto& b : data) {
    if (b.label != 0 && b.label != 1) throw InvalidArgument("bag labels must be 0 or 1");
    has[b.label] = true;
  }
  if (!has[0] || !has[1]) {
    throw InvalidArgument("training data must contain both classes");
  }

  TrainResult result{MilModel(model_config), {}};
  MilModel& model = result.model;
  model.initialize(config.seed);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  AdamState adam(model.num_params());
  std::vector<double> grad(model.num_params());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss sum;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<SliceStack> bags;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledBag& b = data[order[i]];
        bags.push_back(config.augment ? augment_bag(b.bag, rng) : b.bag);
        labels.push_back(b.label);
      }
      const LossValues l =
          batch_gradient(model, bags, labels, config.lambda, grad, config.aggregation);
      adam_step(model.params(), grad, adam, config.learning_rate, config.beta1, config.beta2,
                config.epsilon);
      sum.ce += l.ce;
      sum.aw += l.aw;
      sum.total += l.total;
      ++batches;
    }
    EpochLoss mean{sum.ce / batches, sum.aw / batches, sum.total / batches};
    result.curve.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

double mean_attention_roughness(const MilModel& model, std::span<const LabeledBag> data) {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& b : data) {
    const BagForward f = forward_bag(model, b.bag, false);
    acc += adjacent_weight_penalty(f.attention.a);
  }
  return acc / static_cast<double>(data.size());
}

}  // namespace ctview::mil
