#include "ctview/pipeline.hpp"

#include <cstring>

#include "ctview/mil/predict.hpp"
#include "ctview/nifti.hpp"
#include "ctview/preprocess.hpp"

namespace ctview {

const StageFailure* CaseAnalysis::failure(const std::string& stage) const {
  for (const auto& f : failures) {
    if (f.stage == stage) return &f;
  }
  return nullptr;
}

nlohmann::json CaseAnalysis::summary() const {
  const Geometry& g = input.scalar.geometry();
  nlohmann::json j{{"id", id()},
                   {"dims", {g.dims.nx, g.dims.ny, g.dims.nz}},
                   {"spacing", {g.spacing.x, g.spacing.y, g.spacing.z}},
                   {"origin", {g.origin.x, g.origin.y, g.origin.z}},
                   {"masks",
                    {{"lung", input.lung_fallback ? "fallback" : "ingested"},
                     {"lesion", input.lesion_fallback ? "fallback" : "ingested"}}}};
  if (classification) {
    j["classification"] = {{"p_neg", classification->p_negative},
                           {"p_pos", classification->p_positive}};
  } else {
    j["classification"] = nullptr;
  }
  j["volumes"] = volumes ? measure::to_json(*volumes) : nlohmann::json(nullptr);
  j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) j["failures"].push_back({{"stage", f.stage}, {"detail", f.detail}});
  j["warnings"] = warnings;
  return j;
}

CasePipeline::CasePipeline(std::shared_ptr<const mil::MilModel> model,
                           std::shared_ptr<DerivedCache> cache, PipelineOptions options)
    : model_(std::move(model)), cache_(std::move(cache)), options_(options) {
  options_.segmenter.validate();
}

namespace {

std::string segmenter_digest(const seg::SegmenterConfig& c) {
  const double fields[] = {c.air_threshold_hu, c.lesion_band_lo_hu, c.lesion_band_hi_hu,
                           static_cast<double>(c.min_component_voxels),
                           static_cast<double>(c.closing_radius)};
  const auto* p = reinterpret_cast<const std::uint8_t*>(fields);
  return to_hex(fnv1a64({p, sizeof(fields)}));
}

std::vector<std::uint8_t> float_bytes(std::span<const float> v) {
  std::vector<std::uint8_t> out(v.size() * sizeof(float));
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

}  // namespace

CaseAnalysis CasePipeline::run(const CaseManifest& manifest) const {
  CaseAnalysis c;
  c.input = load_case_volumes(manifest);
  c.warnings = c.input.warnings;

  try {
    LabelVolume lung = c.input.lung_mask ? *c.input.lung_mask
                                         : seg::segment_lungs(c.input.scalar, options_.segmenter);
    c.input.lung_fallback = !c.input.lung_mask.has_value();
    if (c.input.lesion_mask) {
      c.labels = merge_masks(lung, c.input.lesion_mask);
    } else {
      c.input.lesion_fallback = true;
      c.labels = seg::localize_lesions(c.input.scalar, lung, options_.segmenter);
    }
    if (c.input.lung_fallback || c.input.lesion_fallback) {
      c.warnings.push_back(std::string("masks: ") + seg::kFallbackNotice);
    }
  } catch (const std::exception& e) {
    c.failures.push_back({"segment", e.what()});
  }

  if (c.labels) {
    classify(c);
    try {
      c.volumes = measure::lesion_stats(*c.labels, options_.denominator);
    } catch (const std::exception& e) {
      c.failures.push_back({"measure", e.what()});
    }
  } else {
    c.failures.push_back({"classify", "no lung mask: segmentation failed"});
    c.failures.push_back({"measure", "no lung mask: segmentation failed"});
  }
  return c;
}

void CasePipeline::classify(CaseAnalysis& c) const {
  if (!model_) {
    c.failures.push_back({"classify", "no classifier model loaded"});
    return;
  }
  const std::string version = model_->version() + "-" + segmenter_digest(options_.segmenter);
  const CacheKey key{c.id(), c.input.input_hash, version, "classification"};
  const CacheKey heat_key{c.id(), c.input.input_hash, version, "heatmap"};

  if (cache_) {
    auto hit = cache_->load(key, &c.warnings);
    std::optional<std::vector<std::uint8_t>> heat_hit;
    if (hit && options_.heatmap) heat_hit = cache_->load(heat_key, &c.warnings);
    const std::size_t voxels = c.input.scalar.geometry().dims.count();
    if (hit && (!options_.heatmap || (heat_hit && heat_hit->size() == voxels * sizeof(float)))) {
      try {
        const auto j = nlohmann::json::parse(hit->begin(), hit->end());
        Classification cl;
        cl.p_negative = j.at("p_neg").get<double>();
        cl.p_positive = j.at("p_pos").get<double>();
        cl.attention = j.at("attention").get<std::vector<double>>();
        cl.model_version = version;
        c.classification = std::move(cl);
        if (heat_hit) {
          std::vector<float> v(voxels);
          std::memcpy(v.data(), heat_hit->data(), heat_hit->size());
          c.heatmap = ScalarVolume(c.input.scalar.geometry(), std::move(v));
        }
        c.classification_cached = true;
        return;
      } catch (const std::exception& e) {
        c.warnings.push_back(std::string("cache: unreadable classification entry: ") + e.what());
      }
    }
  }

  try {
    const int side = model_->config().extractor.input_side;
    const ClassifierInput in = prepare_classifier_input(c.input.scalar, *c.labels, side);
    ++classifier_runs_;
    mil::PredictionResult p = mil::predict(*model_, in.bag, options_.heatmap);
    Classification cl{p.p_negative, p.p_positive, p.attention, version};
    if (p.heatmap) c.heatmap = bag_to_volume(*p.heatmap, in.geometry);
    if (cache_) {
      const nlohmann::json j{{"p_neg", cl.p_negative},
                             {"p_pos", cl.p_positive},
                             {"attention", cl.attention}};
      const std::string s = j.dump();
      try {
        cache_->store(key, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
        if (c.heatmap) cache_->store(heat_key, float_bytes(c.heatmap->data()));
      } catch (const std::exception& e) {
        c.warnings.push_back(std::string("cache: ") + e.what());
      }
    }
    c.classification = std::move(cl);
  } catch (const std::exception& e) {
    c.failures.push_back({"classify", e.what()});
  }
}

}  // namespace ctview
