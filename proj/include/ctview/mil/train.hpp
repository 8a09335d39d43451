#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctview/mil/network.hpp"

namespace ctview::mil {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One Adam update with bias correction.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct Augmentation {
  double angle_deg = 0.0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
};

// Uniform angle in [-10, 10] degrees, each flip with probability 0.5.
Augmentation draw_augmentation(std::mt19937_64& rng);

// Rotates every slice about its centre (bilinear, zero fill), then flips.
SliceStack apply_augmentation(const SliceStack& bag, const Augmentation& aug);

// One draw per bag, applied identically to all slices.
SliceStack augment_bag(const SliceStack& bag, std::mt19937_64& rng);

struct TrainConfig {
  double lambda = 1.0;
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 4;
  std::uint64_t seed = 0;
  bool augment = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  AwAggregation aggregation = AwAggregation::MeanOfBagSums;

  void validate() const;

  // Desk-scale defaults for a backbone trained from scratch.
  static TrainConfig toy();
  // lr 1e-5 for 100 epochs, the recipe for a pretrained backbone.
  static TrainConfig pretrained();
  static TrainConfig preset(const std::string& name);
};

struct LabeledBag {
  std::string case_id;
  SliceStack bag;
  int label = 0;
};

struct EpochLoss {
  double ce = 0.0;
  double aw = 0.0;
  double total = 0.0;
};

struct TrainResult {
  MilModel model;
  std::vector<EpochLoss> curve;
};

using EpochCallback = std::function<void(int epoch, const EpochLoss&)>;

// Deterministic for a fixed seed. Throws InvalidArgument when only one class
// is present.
TrainResult train(std::span<const LabeledBag> data, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Mean within-bag sum of squared adjacent attention differences.
double mean_attention_roughness(const MilModel& model, std::span<const LabeledBag> data);

}  // namespace ctview::mil
