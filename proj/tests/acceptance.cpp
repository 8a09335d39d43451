// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctview/measure.hpp"
#include "ctview/mil/evaluate.hpp"
#include "ctview/mil/metrics.hpp"
#include "ctview/mil/network.hpp"
#include "ctview/mil/synthetic.hpp"
#include "ctview/mil/train.hpp"
#include "ctview/nifti.hpp"
#include "ctview/preprocess.hpp"
#include "ctview/render/png.hpp"
#include "ctview/render/raycast.hpp"
#include "ctview/render/slice_tools.hpp"
#include "ctview/resample.hpp"
#include "ctview/service.hpp"
#include "support.hpp"

using namespace ctview;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kKinkTol = 1e-3;
constexpr double kGradBudgetS = 120;
constexpr double kSumTol = 1e-9;
constexpr double kRegularizerBudgetS = 600;
constexpr double kCvBudgetS = 1800;
constexpr double kMinAuc = 0.95;
constexpr double kMinAccuracy = 0.90;
constexpr double kAucOracleTol = 1e-12;
constexpr double kColourTol = 1.0;  // in 8-bit units
constexpr double kSphereTol = 0.015;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

int failures = 0;

void criterion(const char* name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << "[exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s  %-24s %8.2fs  %s\n", out.pass ? "PASS" : "FAIL", name, secs, out.detail.str().c_str());
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<mil::LabeledBag> synthetic_bags(int n, std::uint64_t seed) {
  std::vector<mil::LabeledBag> out;
  for (const auto& c : mil::generate_synthetic_dataset(n, seed)) {
    out.push_back({c.id, prepare_classifier_input(c.scalar, c.labels()).bag, c.label});
  }
  return out;
}

void gradient(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto config = testing::small_input_config();
  constexpr std::size_t stride = 7;
  std::size_t checked = 0, kinks = 0;
  double smooth = 0, kink = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Rotating offsets cover every parameter index across the seeds.
    const auto r = testing::check_gradient(config, seed, 1.0, stride, seed % stride);
    checked += r.checked;
    kinks += r.kinks;
    smooth = std::max(smooth, r.worst_smooth);
    kink = std::max(kink, r.worst_kink);
  }
  const double secs = elapsed_since(t0);
  o.detail << "entries=" << checked << " kinks=" << kinks << " worst=" << smooth << " worst_kink=" << kink;
  o.require(smooth <= kGradTol, "relative error");
  o.require(kink <= kKinkTol, "kink error");
  o.require(secs < kGradBudgetS, "runtime");
}

void attention(Outcome& o) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01;
  double worst_sum = 0, worst_uniform = 0, worst_shift = 0, worst_perm = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    mil::MilModel m;
    m.initialize(trial);
    const int k = 2 + static_cast<int>(trial % 15);
    mil::Matrix h(k, m.feature_dim());
    for (int i = 0; i < h.size(); ++i) h.data()[i] = 3 * n01(rng);
    const auto out = mil::attention_pool(h, std::as_const(m).attention_v(), std::as_const(m).attention_w());
    worst_sum = std::max(worst_sum, std::abs(out.a.sum() - 1.0));

    mil::Matrix same(k, m.feature_dim());
    for (int i = 0; i < k; ++i) same.row(i) = h.row(0);
    const auto u = mil::attention_pool(same, std::as_const(m).attention_v(), std::as_const(m).attention_w());
    worst_uniform = std::max(worst_uniform, (u.a.array() - 1.0 / k).abs().maxCoeff());

    const mil::Vector shifted = out.scores.array() + 50.0 * n01(rng);
    worst_shift = std::max(worst_shift, (mil::softmax(shifted) - out.a).cwiseAbs().maxCoeff());

    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    mil::Matrix hp(k, m.feature_dim());
    for (int i = 0; i < k; ++i) hp.row(i) = h.row(perm[i]);
    const auto p = mil::attention_pool(hp, std::as_const(m).attention_v(), std::as_const(m).attention_w());
    for (int i = 0; i < k; ++i) worst_perm = std::max(worst_perm, std::abs(p.a(i) - out.a(perm[i])));
    worst_perm = std::max(worst_perm, (p.z - out.z).cwiseAbs().maxCoeff());
  }
  o.detail << "sum=" << worst_sum << " uniform=" << worst_uniform << " shift=" << worst_shift
           << " perm=" << worst_perm;
  o.require(worst_sum <= kSumTol, "sum");
  o.require(worst_uniform <= kSumTol, "uniform");
  o.require(worst_shift <= kSumTol, "shift");
  o.require(worst_perm <= kSumTol, "permutation");
}

void regularizer(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = synthetic_bags(40, 2024);
  auto cfg = mil::TrainConfig::toy();
  cfg.seed = 5;
  cfg.lambda = 0.0;
  const auto plain = mil::train(data, {}, cfg);
  cfg.lambda = 1.0;
  const auto smooth = mil::train(data, {}, cfg);
  const double r0 = mil::mean_attention_roughness(plain.model, data);
  const double r1 = mil::mean_attention_roughness(smooth.model, data);
  const double secs = elapsed_since(t0);
  o.detail << "roughness lambda0=" << r0 << " lambda1=" << r1;
  o.require(r1 < r0, "lambda=1 not smoother");
  o.require(secs < kRegularizerBudgetS, "runtime");
}

void cross_validation(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = synthetic_bags(200, 1);
  auto cfg = mil::TrainConfig::toy();
  cfg.seed = 1;
  mil::CrossValidationOptions opts;
  opts.seed = 1;
  const auto report = mil::cross_validate(data, {}, cfg, opts);
  const double secs = elapsed_since(t0);
  o.detail << "auc=" << report.pooled_auc << " accuracy=" << report.pooled.accuracy
           << " sens=" << report.pooled.sensitivity << " spec=" << report.pooled.specificity;
  o.require(report.pooled_auc >= kMinAuc, "auc");
  o.require(report.pooled.accuracy >= kMinAccuracy, "accuracy");
  o.require(secs < kCvBudgetS, "runtime");
}

void auc_oracle(Outcome& o) {
  std::mt19937_64 rng(99);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 10 + static_cast<int>(rng() % 90);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 20.0;  // coarse grid forces ties
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    worst = std::max(worst, std::abs(mil::roc_auc(s, l) - testing::pairwise_auc(s, l)));
  }
  o.detail << "worst=" << worst;
  o.require(worst <= kAucOracleTol, "auc mismatch");
}

std::pair<ScalarVolume, LabelVolume> random_scene(Dims d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Geometry g;
  g.dims = d;
  g.spacing = {1.0, 1.2, 1.5};
  std::vector<float> v(d.count());
  std::vector<std::uint8_t> l(d.count());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::uniform_real_distribution<float>(-1000, 300)(rng);
    l[i] = static_cast<std::uint8_t>(rng() % 3);
  }
  return {ScalarVolume(g, v), LabelVolume(g, l)};
}

void rendering(Outcome& o) {
  using namespace render;
  // MIP against an element-wise maximum.
  {
    const auto [vol, mask] = random_scene({14, 12, 10}, 3);
    int mismatches = 0;
    for (Axis axis : {Axis::Axial, Axis::Coronal, Axis::Sagittal}) {
      const int n = vol.dims()[normal_dimension(axis)];
      const int centre = n / 2, hw = 3;
      const auto got = mip_project(vol, mask, axis, centre, hw);
      std::vector<float> expect;
      for (int k = centre - hw; k <= centre + hw; ++k) {
        const auto s = extract_slice(vol, axis, k);
        const auto m = extract_slice(mask, axis, k);
        if (expect.empty()) expect.assign(s.values.size(), -INFINITY);
        for (std::size_t i = 0; i < s.values.size(); ++i)
          if (m.values[i] != 0) expect[i] = std::max(expect[i], s.values[i]);
      }
      for (auto& e : expect)
        if (e == -INFINITY) e = vol.min_value();
      mismatches += static_cast<int>(got.values != expect);
    }
    o.detail << "mip_mismatch_axes=" << mismatches << " ";
    o.require(mismatches == 0, "mip");
  }
  const auto [vol, lab] = random_scene({10, 9, 8}, 4);
  Camera cam = Camera::framing(vol.geometry());
  cam.azimuth_deg = 30;
  cam.elevation_deg = 20;
  RenderSettings s = RenderSettings::defaults();
  s.width = s.height = 32;
  // Hidden or zero-opacity labels contribute nothing.
  {
    bool same = true;
    for (int label = 0; label < 3; ++label) {
      RenderSettings hidden = s, zero = s;
      hidden.labels[label].visible = false;
      zero.labels[label].tf.opacity_scale = 0.0;
      same &= raycast(vol, lab, cam, {}, hidden).rgba == raycast(vol, lab, cam, {}, zero).rgba;
    }
    RenderSettings none = s;
    for (auto& l : none.labels) l.tf.opacity_scale = 0.0;
    none.background = {0.25, 0.5, 0.75, 1.0};
    const auto img = raycast(vol, lab, cam, {}, none);
    bool background = true;
    for (std::size_t i = 0; i < img.rgba.size(); i += 4)
      background &= img.rgba[i] == 0.25f && img.rgba[i + 1] == 0.5f && img.rgba[i + 2] == 0.75f &&
                    img.rgba[i + 3] == 1.0f;
    o.require(same, "hidden != zero opacity");
    o.require(background, "zero opacity != background");
  }
  o.require(raycast(vol, lab, cam, ClipBox{{0, 0, 0}, {1, 1, 1}}, s).rgba == raycast(vol, lab, cam, {}, s).rgba,
            "full clip");
  // Single opaque voxel.
  {
    Geometry g;
    g.dims = {5, 5, 5};
    g.spacing = {0.8, 0.8, 0.8};
    std::vector<std::uint8_t> l(g.dims.count(), 0);
    l[g.index(2, 2, 2)] = kLesion;
    RenderSettings one;
    for (auto& st : one.labels) st.tf = {"flat", {{0.0, 0, 0, 0, 0}}, 0.0, 1.0};
    one.labels[kLesion].tf = {"flat", {{0.0, 0.9, 0.3, 0.1, 1.0}}, 0.0, 1.0};
    one.width = one.height = 1;
    double worst = 0;
    for (double az : {0.0, 90.0, 180.0, 270.0}) {
      Camera c;
      c.center = voxel_to_world(g, {2, 2, 2});
      c.azimuth_deg = az;
      c.ortho_height = 0.5;
      const auto px = to_slice_image(
          raycast(ScalarVolume(g, std::vector<float>(g.dims.count(), 50.0f)), LabelVolume(g, l), c, {}, one));
      worst = std::max({worst, std::abs(px.pixels[0] - 0.9 * 255), std::abs(px.pixels[1] - 0.3 * 255),
                        std::abs(px.pixels[2] - 0.1 * 255)});
    }
    o.detail << "voxel_colour_err=" << worst << " ";
    o.require(worst <= kColourTol, "voxel colour");
  }
  // Byte-exact frames.
  {
    Camera p = cam;
    p.projection = Projection::Perspective;
    RenderSettings t = s;
    t.lung_outline = true;
    const auto a = encode_png(to_slice_image(raycast(vol, lab, p, {}, t)));
    const auto b = encode_png(to_slice_image(raycast(vol, lab, p, {}, t)));
    o.require(a == b, "determinism");
  }
}

void volumetry(Outcome& o) {
  const double r = 20.0;
  const int n = 45;
  Geometry g;
  g.dims = {n, n, n};
  std::vector<std::uint8_t> v(g.dims.count(), 0);
  const double c = (n - 1) / 2.0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if ((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c) <= r * r) v[g.index(x, y, z)] = 1;
  const double analytic = 4.0 / 3.0 * std::numbers::pi * r * r * r / 1000.0;
  const double got = measure::region_volume(LabelVolume(g, v), 1);
  const double err = std::abs(got - analytic) / analytic;
  o.detail << "sphere_ml=" << got << " rel_err=" << err;
  o.require(err <= kSphereTol, "sphere");
  o.require(measure::linear_distance({0, 0, 0}, {3, 4, 0}, {1, 1, 1}) == 5.0, "3-4-5");
  o.require(measure::linear_distance({2, 1, 0}, {2, 5, 3}, {1, 1, 1}) == 5.0, "3-4-5 yz");
  o.require(measure::linear_distance({0, 0, 0}, {0.75, 1, 0}, {4, 4, 2}) == 5.0, "3-4-5 spacing");
}

template <typename T>
bool round_trips(std::int16_t datatype, const std::vector<T>& values, std::int16_t intent = 0) {
  const Dims d{3, 2, 2};
  const auto first = nifti::parse(testing::handmade<T>(datatype, d, values, 1.0f, 0.0f, intent));
  const auto second = nifti::parse(nifti::write(first));
  if (intent == nifti::kIntentLabel) {
    const auto& l = std::get<LabelVolume>(first);
    bool ok = std::get<LabelVolume>(second) == l;
    for (std::size_t i = 0; i < values.size(); ++i) ok &= l[i] == values[i];
    return ok;
  }
  const auto& a = std::get<ScalarVolume>(first);
  const auto& b = std::get<ScalarVolume>(second);
  bool ok = a.dims() == b.dims() && a.spacing() == b.spacing() && a.origin() == b.origin();
  for (std::size_t i = 0; i < values.size(); ++i) {
    ok &= a[i] == static_cast<float>(values[i]);
    ok &= std::bit_cast<std::uint32_t>(a[i]) == std::bit_cast<std::uint32_t>(b[i]);
  }
  return ok;
}

nifti::ErrorKind error_kind(std::span<const std::uint8_t> bytes) {
  try {
    nifti::parse(bytes);
  } catch (const nifti::NiftiError& e) {
    return e.kind();
  }
  return nifti::ErrorKind::Io;
}

void parser(Outcome& o) {
  o.require(round_trips<std::uint8_t>(nifti::kUint8, {0, 1, 2, 2, 1, 0, 0, 0, 1, 2, 1, 0}, nifti::kIntentLabel),
            "uint8 labels");
  o.require(round_trips<std::uint8_t>(nifti::kUint8, {0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255}), "uint8");
  o.require(round_trips<std::int16_t>(nifti::kInt16, {-32768, -1024, -1, 0, 1, 7, 99, 1000, 3071, 12345, 32000, 32767}),
            "int16");
  o.require(round_trips<std::int32_t>(nifti::kInt32, {-16777216, -70000, -1, 0, 1, 2, 3, 65536, 100000, 1 << 20,
                                                      1 << 23, 16777216}),
            "int32");
  o.require(round_trips<float>(nifti::kFloat32, {-1e30f, -1024.5f, -0.0f, 0.0f, 1e-30f, 0.1f, 3.14159f, 40.0f,
                                                  1e10f, 7.0f, -3.0f, 1.0f}),
            "float32");
  o.require(round_trips<double>(nifti::kFloat64, {-1024.5, -1.0, 0.0, 0.25, 0.5, 1.0, 2.0, 40.0, 1e6, 123.125,
                                                   -7.75, 3071.0}),
            "float64");

  const std::filesystem::path fixtures = CTVIEW_FIXTURES;
  const auto le = nifti::parse(read_binary_file(fixtures / "int16_le.nii"));
  const auto be = nifti::parse(read_binary_file(fixtures / "int16_be.nii"));
  o.require(std::get<ScalarVolume>(le) == std::get<ScalarVolume>(be), "byte-swapped fixture");

  auto bytes = testing::handmade<std::int16_t>(nifti::kInt16, {2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto bad_magic = bytes;
  bad_magic[345] = 'x';
  o.require(error_kind(bad_magic) == nifti::ErrorKind::BadMagic, "bad magic");
  o.require(error_kind(std::span(bytes).first(bytes.size() - 3)) == nifti::ErrorKind::Truncated, "short payload");
  o.require(error_kind(std::span(bytes).first(200)) == nifti::ErrorKind::Truncated, "short header");
}

void preprocessing(Outcome& o) {
  o.require(normalize_hu(-1250) == 0.0 && normalize_hu(250) == 1.0 && normalize_hu(-500) == 0.5, "anchors");
  o.require(normalize_hu(-3000) == 0.0 && normalize_hu(3000) == 1.0, "clipping");

  for (double sz : {2.0, 0.5, 0.25}) {
    Geometry g;
    g.dims = {3, 2, 9};
    g.spacing = {1, 1, sz};
    std::vector<float> v(g.dims.count());
    for (int z = 0; z < 9; ++z)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) v[g.index(x, y, z)] = static_cast<float>(3.0 * z * sz + x - 7.0 * y);
    const auto r = resample_z(ScalarVolume(g, v), 1.0);
    bool exact = r.spacing().z == 1.0 && r.dims().nz == resampled_slice_count(9, sz, 1.0);
    for (int z = 0; z < r.dims().nz; ++z)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) exact &= r.at(x, y, z) == static_cast<float>(3.0 * z + x - 7.0 * y);
    o.require(exact, "ramp resample " + std::to_string(sz));
  }

  const auto c = mil::generate_phantom(3, true, "p");
  const auto in = prepare_classifier_input(c.scalar, c.labels());
  const auto [lo, hi] = std::minmax_element(in.bag.values.begin(), in.bag.values.end());
  o.detail << "bag=" << in.bag.depth << "x" << in.bag.side << "x" << in.bag.side;
  o.require(in.bag.side == 224 && in.bag.depth == in.geometry.crop.z.extent() &&
                in.bag.values.size() == static_cast<std::size_t>(in.bag.depth) * 224 * 224,
            "shape");
  o.require(*lo >= 0.0f && *hi <= 1.0f, "range");
}

void service_end_to_end(Outcome& o) {
  testing::TempDir tmp("ctview-acceptance");
  auto model = std::make_shared<mil::MilModel>();
  model->initialize(7);
  service::ServiceConfig config;
  config.cache_dir = tmp / "cache";
  config.model = model;
  service::Api api(config);
  auto call = [&](const std::string& method, const std::string& path, std::map<std::string, std::string> q = {},
                  const std::string& body = "") { return api.handle({method, path, std::move(q), body, {}}); };
  auto post = [&](const std::filesystem::path& manifest) {
    return call("POST", "/cases", {}, nlohmann::json{{"manifest", manifest.string()}}.dump());
  };

  const auto created = post(testing::write_phantom_case(tmp.path(), "ph", 11, true, true));
  o.require(created.status == 200, "phantom POST");
  if (created.status == 200) {
    const auto j = created.json();
    const double p = j.at("classification").at("p_neg").get<double>() + j.at("classification").at("p_pos").get<double>();
    o.require(std::abs(p - 1.0) <= 1e-6, "classification");
    o.require(j.at("volumes").at("lung_ml").get<double>() > 0, "volumes");
  }
  const std::map<std::string, std::string> q{{"axis", "axial"}, {"index", "5"}, {"outlines", "1"}};
  const auto a = call("GET", "/cases/ph/slice", q), b = call("GET", "/cases/ph/slice", q);
  o.require(a.status == 200 && a.content_type == "image/png" && a.body == b.body, "deterministic slice");
  const std::string scene = R"({"settings": {"width": 48, "height": 48}, "camera": {"azimuth": 30}})";
  const auto r1 = call("POST", "/cases/ph/render", {}, scene), r2 = call("POST", "/cases/ph/render", {}, scene);
  o.require(r1.status == 200 && r1.body == r2.body, "deterministic render");

  const auto failed = post(testing::write_solid_case(tmp.path(), "solid"));
  o.require(failed.status == 422, "segmentation failure status");
  const auto slice = call("GET", "/cases/solid/slice", {{"axis", "axial"}, {"index", "2"}});
  o.require(slice.status == 200 && slice.content_type == "image/png", "degraded slice");
  o.detail << "failure_status=" << failed.status << " degraded_slice=" << slice.status;
}

}  // namespace

int main() {
  criterion("gradient", gradient);
  criterion("attention-invariants", attention);
  criterion("regularizer", regularizer);
  criterion("cross-validation", cross_validation);
  criterion("auc-oracle", auc_oracle);
  criterion("rendering-oracles", rendering);
  criterion("volumetry", volumetry);
  criterion("parser", parser);
  criterion("preprocessing", preprocessing);
  criterion("service", service_end_to_end);
  std::printf("%d failed\n", failures);
  return failures;
}
