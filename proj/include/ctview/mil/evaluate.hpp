#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctview/mil/metrics.hpp"
#include "ctview/mil/train.hpp"

namespace ctview::mil {

// Stratified assignment of case indices to folds: each class is shuffled
// with `seed` and dealt round-robin, so per-class fold sizes differ by at
// most one. Throws InvalidArgument if a class has fewer cases than folds.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int folds,
                                                       std::uint64_t seed);

struct FoldReport {
  int fold = 0;
  std::vector<std::size_t> test_indices;
  std::vector<double> scores;  // p(positive) per test case
  BinaryMetrics metrics;
  double auc = 0.0;
  bool auc_defined = false;
};

struct CrossValidationReport {
  std::vector<FoldReport> folds;
  std::vector<double> pooled_scores;  // indexed like the dataset
  std::vector<int> labels;
  BinaryMetrics pooled;
  double pooled_auc = 0.0;
  std::map<std::string, Interval> ci;  // pooled bootstrap intervals

  nlohmann::json to_json() const;
};

struct CrossValidationOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  int bootstrap_resamples = 2000;
  double ci_level = 0.95;
};

using FoldCallback = std::function<void(const FoldReport&)>;

CrossValidationReport cross_validate(std::span<const LabeledBag> data,
                                     const ModelConfig& model_config,
                                     const TrainConfig& train_config,
                                     const CrossValidationOptions& options = {},
                                     const FoldCallback& on_fold = {});

}  // namespace ctview::mil
