#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "ctview/case.hpp"
#include "ctview/mil/network.hpp"
#include "ctview/mil/synthetic.hpp"
#include "ctview/nifti.hpp"

namespace testing {

namespace fs = std::filesystem;
using namespace ctview;

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const fs::path p = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()));
    if (fs::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path write_phantom_case(const fs::path& dir, const std::string& id, std::uint64_t seed,
                            bool positive, bool with_masks) {
  fs::create_directories(dir);
  const auto c = mil::generate_phantom(seed, positive, id);
  nifti::write_file(dir / (id + "-scalar.nii.gz"), c.scalar);
  CaseManifest m;
  m.id = id;
  m.scalar = id + "-scalar.nii.gz";
  if (with_masks) {
    nifti::write_file(dir / (id + "-lung.nii.gz"), c.lung_mask);
    nifti::write_file(dir / (id + "-lesion.nii.gz"), c.lesion_mask);
    m.lung_mask = fs::path(id + "-lung.nii.gz");
    m.lesion_mask = fs::path(id + "-lesion.nii.gz");
  }
  const fs::path manifest = dir / (id + ".json");
  std::ofstream(manifest) << to_json(m).dump(2);
  return manifest;
}

fs::path write_solid_case(const fs::path& dir, const std::string& id) {
  fs::create_directories(dir);
  Geometry g;
  g.dims = {24, 24, 6};
  g.spacing = {4, 4, 2};
  std::vector<float> v(g.dims.count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 40.0f + static_cast<float>(i % 7);
  nifti::write_file(dir / (id + ".nii"), ScalarVolume(g, v));
  CaseManifest m;
  m.id = id;
  m.scalar = id + ".nii";
  const fs::path manifest = dir / (id + ".json");
  std::ofstream(manifest) << to_json(m).dump(2);
  return manifest;
}

double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

mil::ModelConfig small_input_config() {
  mil::ModelConfig c;
  c.extractor.input_side = 16;
  c.extractor.input_pool = 2;
  return c;
}

GradientCheck check_gradient(const mil::ModelConfig& config, std::uint64_t seed, double lambda,
                             std::size_t stride, std::size_t offset, double h) {
  mil::MilModel model(config);
  model.initialize(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const int side = config.extractor.input_side;
  std::vector<SliceStack> bags;
  const std::vector<int> labels{0, 1};
  for (int b = 0; b < 2; ++b) {
    SliceStack s;
    s.depth = 3 + b;
    s.side = side;
    s.values.resize(s.depth * s.slice_size());
    for (auto& v : s.values) v = u(rng);
    bags.push_back(std::move(s));
  }
  std::vector<double> grad(model.num_params(), 0.0);
  mil::batch_gradient(model, bags, labels, lambda, grad);

  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
  };
  GradientCheck out;
  auto params = model.params();
  for (std::size_t k = offset; k < params.size(); k += stride) {
    const double orig = params[k];
    params[k] = orig + h;
    const double lp = mil::batch_loss(model, bags, labels, lambda).total;
    params[k] = orig - h;
    const double lm = mil::batch_loss(model, bags, labels, lambda).total;
    params[k] = orig;
    ++out.checked;
    const double central = rel(grad[k], (lp - lm) / (2 * h));
    if (central <= 1e-4) {
      out.worst_smooth = std::max(out.worst_smooth, central);
      continue;
    }
    // A ReLU or max-pool switch inside [-h, h]: the loss has a kink there and
    // the analytic gradient is one of the one-sided slopes.
    const double l0 = mil::batch_loss(model, bags, labels, lambda).total;
    const double one_sided = std::min(rel(grad[k], (lp - l0) / h), rel(grad[k], (l0 - lm) / h));
    if (one_sided < central / 10) {
      ++out.kinks;
      out.worst_kink = std::max(out.worst_kink, one_sided);
    } else {
      out.worst_smooth = std::max(out.worst_smooth, central);
    }
  }
  return out;
}

ScalarVolume constant_volume(Dims dims, float value, Vec3 spacing) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  return ScalarVolume(g, std::vector<float>(dims.count(), value));
}

LabelVolume constant_labels(Dims dims, std::uint8_t value, Vec3 spacing) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  return LabelVolume(g, std::vector<std::uint8_t>(dims.count(), value));
}

}  // namespace testing
