#include "ctview/mil/evaluate.hpp"

#include <algorithm>
#include <random>

#include "ctview/mil/predict.hpp"

namespace ctview::mil {

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int folds,
                                                       std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  std::vector<std::vector<std::size_t>> out(folds);
  std::mt19937_64 rng(seed);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (static_cast<int>(members.size()) < folds) {
      throw InvalidArgument("class " + std::to_string(cls) + " has " +
                            std::to_string(members.size()) + " cases, fewer than " +
                            std::to_string(folds) + " folds");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) out[j % folds].push_back(members[j]);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

namespace {

nlohmann::json metrics_json(const BinaryMetrics& m, double auc, bool auc_defined) {
  nlohmann::json j{{"accuracy", m.accuracy},
                   {"sensitivity", m.sensitivity},
                   {"specificity", m.specificity},
                   {"confusion",
                    {{"tp", m.true_positive},
                     {"tn", m.true_negative},
                     {"fp", m.false_positive},
                     {"fn", m.false_negative}}}};
  j["auc"] = auc_defined ? nlohmann::json(auc) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

nlohmann::json CrossValidationReport::to_json() const {
  nlohmann::json out;
  out["folds"] = nlohmann::json::array();
  for (const auto& f : folds) {
    auto j = metrics_json(f.metrics, f.auc, f.auc_defined);
    j["fold"] = f.fold;
    j["n"] = f.test_indices.size();
    out["folds"].push_back(j);
  }
  auto pooled_json = metrics_json(pooled, pooled_auc, true);
  pooled_json["n"] = labels.size();
  nlohmann::json ci_json = nlohmann::json::object();
  for (const auto& [name, iv] : ci) ci_json[name] = {iv.lo, iv.hi};
  pooled_json["ci"] = ci_json;
  out["pooled"] = pooled_json;
  return out;
}

CrossValidationReport cross_validate(std::span<const LabeledBag> data,
                                     const ModelConfig& model_config,
                                     const TrainConfig& train_config,
                                     const CrossValidationOptions& options,
                                     const FoldCallback& on_fold) {
  CrossValidationReport report;
  for (const auto& b : data) report.labels.push_back(b.label);
  const auto folds = stratified_folds(report.labels, options.folds, options.seed);
  report.pooled_scores.assign(data.size(), 0.0);

  for (int f = 0; f < options.folds; ++f) {
    const auto& test = folds[f];
    std::vector<LabeledBag> train_set;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::binary_search(test.begin(), test.end(), i)) train_set.push_back(data[i]);
    }
    TrainConfig tc = train_config;
    tc.seed = train_config.seed + 1000003ULL * static_cast<std::uint64_t>(f);
    const TrainResult trained = train(train_set, model_config, tc);

    FoldReport fr;
    fr.fold = f;
    fr.test_indices = test;
    std::vector<int> fold_labels;
    for (std::size_t i : test) {
      const PredictionResult p = predict(trained.model, data[i].bag, false);
      fr.scores.push_back(p.p_positive);
      fold_labels.push_back(data[i].label);
      report.pooled_scores[i] = p.p_positive;
    }
    fr.metrics = threshold_metrics(fr.scores, fold_labels, options.threshold);
    const bool both = std::count(fold_labels.begin(), fold_labels.end(), 1) > 0 &&
                      std::count(fold_labels.begin(), fold_labels.end(), 0) > 0;
    if (both) {
      fr.auc = roc_auc(fr.scores, fold_labels);
      fr.auc_defined = true;
    }
    if (on_fold) on_fold(fr);
    report.folds.push_back(std::move(fr));
  }

  report.pooled = threshold_metrics(report.pooled_scores, report.labels, options.threshold);
  report.pooled_auc = roc_auc(report.pooled_scores, report.labels);
  if (data.size() >= 10) {
    const double thr = options.threshold;
    const std::map<std::string, MetricFn> fns{
        {"auc", [](auto s, auto l) { return roc_auc(s, l); }},
        {"accuracy", [thr](auto s, auto l) { return threshold_metrics(s, l, thr).accuracy; }},
        {"sensitivity", [thr](auto s, auto l) { return threshold_metrics(s, l, thr).sensitivity; }},
        {"specificity", [thr](auto s, auto l) { return threshold_metrics(s, l, thr).specificity; }},
    };
    for (const auto& [name, fn] : fns) {
      report.ci[name] = bootstrap_ci(fn, report.pooled_scores, report.labels, options.ci_level,
                                     options.bootstrap_resamples, options.seed);
    }
  }
  return report;
}

}  // namespace ctview::mil
