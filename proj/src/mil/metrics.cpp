#include "ctview/mil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ctview/error.hpp"

namespace ctview::mil {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
  }
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("AUC needs both classes");

  // Walk thresholds from high to low; each group of tied scores moves the
  // ROC point diagonally.
  double area = 0.0, tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    double dtp = 0.0, dfp = 0.0;
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? dtp : dfp) += 1.0;
      ++i;
    }
    area += dfp * (tp + dtp / 2.0);
    tp += dtp;
    fp += dfp;
  }
  return area / (pos * neg);
}

BinaryMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                double threshold) {
  check_inputs(scores, labels);
  BinaryMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? m.true_positive : m.false_negative) += 1;
    } else {
      (predicted ? m.false_positive : m.true_negative) += 1;
    }
  }
  const double n = static_cast<double>(scores.size());
  const int pos = m.true_positive + m.false_negative;
  const int neg = m.true_negative + m.false_positive;
  m.accuracy = n > 0 ? (m.true_positive + m.true_negative) / n : 0.0;
  m.sensitivity = pos > 0 ? static_cast<double>(m.true_positive) / pos : 0.0;
  m.specificity = neg > 0 ? static_cast<double>(m.true_negative) / neg : 0.0;
  return m;
}

Interval bootstrap_ci(const MetricFn& metric, std::span<const double> scores,
                      std::span<const int> labels, double level, int resamples,
                      std::uint64_t seed) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  if (n < 10) throw InvalidArgument("bootstrap needs at least 10 cases");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must be in (0, 1)");
  if (resamples < 1) throw InvalidArgument("bootstrap needs at least one resample");
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                    std::count(labels.begin(), labels.end(), 0) > 0;

  std::mt19937_64 rng(seed);
  std::vector<double> values;
  values.reserve(resamples);
  std::vector<double> s(n);
  std::vector<int> l(n);
  while (static_cast<int>(values.size()) < resamples) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng() % n;
      s[i] = scores[j];
      l[i] = labels[j];
      (l[i] == 1 ? pos : neg) = true;
    }
    if (both && !(pos && neg)) continue;
    values.push_back(metric(s, l));
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double f = pos - lo;
    return values[lo] + f * (values[hi] - values[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

}  // namespace ctview::mil
