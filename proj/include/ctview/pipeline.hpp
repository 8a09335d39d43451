#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctview/cache.hpp"
#include "ctview/case.hpp"
#include "ctview/measure.hpp"
#include "ctview/mil/model.hpp"
#include "ctview/segment.hpp"

namespace ctview {

struct Classification {
  double p_negative = 0.5;
  double p_positive = 0.5;
  std::vector<double> attention;
  std::string model_version;
};

struct StageFailure {
  std::string stage;
  std::string detail;
};

// Everything derived for one case. Later stages are absent when an earlier
// one failed; the scalar volume is always there.
struct CaseAnalysis {
  LoadedCase input;
  std::optional<LabelVolume> labels;  // 0 context, 1 lung, 2 lesion
  std::optional<Classification> classification;
  std::optional<ScalarVolume> heatmap;  // on the scalar grid, [0, 1]
  std::optional<measure::LesionStats> volumes;
  std::vector<StageFailure> failures;
  std::vector<std::string> warnings;
  bool classification_cached = false;

  const std::string& id() const { return input.manifest.id; }
  const StageFailure* failure(const std::string& stage) const;
  nlohmann::json summary() const;
};

struct PipelineOptions {
  seg::SegmenterConfig segmenter;
  measure::Denominator denominator = measure::Denominator::LungAndLesion;
  bool heatmap = true;
};

// load -> masks (ingested, else fallback) -> classification -> measurements.
// Only a load failure throws (StageError "ingest"); later failures are
// recorded on the result so the 2D views stay usable.
class CasePipeline {
 public:
  CasePipeline(std::shared_ptr<const mil::MilModel> model, std::shared_ptr<DerivedCache> cache,
               PipelineOptions options = {});

  CaseAnalysis run(const CaseManifest& manifest) const;

  const mil::MilModel* model() const { return model_.get(); }
  // Number of classifier evaluations actually executed (cache misses).
  long classifier_runs() const { return classifier_runs_.load(); }

 private:
  void classify(CaseAnalysis& c) const;

  std::shared_ptr<const mil::MilModel> model_;
  std::shared_ptr<DerivedCache> cache_;
  PipelineOptions options_;
  mutable std::atomic<long> classifier_runs_{0};
};

}  // namespace ctview
