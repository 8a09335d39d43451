#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>

namespace ctview::mil {

// Area under the ROC curve by the trapezoid rule over distinct score
// thresholds. Ties between a positive and a negative count one half.
// Throws InvalidArgument unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct BinaryMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  int true_positive = 0;
  int true_negative = 0;
  int false_positive = 0;
  int false_negative = 0;
};

// Positive when score >= threshold.
BinaryMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                double threshold = 0.5);

using MetricFn = std::function<double(std::span<const double>, std::span<const int>)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap: `resamples` draws of n cases with replacement,
// redrawing any resample that holds a single class. Requires n >= 10.
Interval bootstrap_ci(const MetricFn& metric, std::span<const double> scores,
                      std::span<const int> labels, double level = 0.95, int resamples = 2000,
                      std::uint64_t seed = 0);

}  // namespace ctview::mil
