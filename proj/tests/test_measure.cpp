#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ctview/measure.hpp"
#include "ctview/mil/synthetic.hpp"
#include "support.hpp"

using namespace ctview;
using namespace ctview::measure;

namespace {

LabelVolume sphere(double radius_mm, double spacing) {
  const int n = static_cast<int>(std::ceil(2 * radius_mm / spacing)) + 4;
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = {spacing, spacing, spacing};
  std::vector<std::uint8_t> v(g.dims.count(), 0);
  const double c = (n - 1) / 2.0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dx = (x - c) * spacing, dy = (y - c) * spacing, dz = (z - c) * spacing;
        if (dx * dx + dy * dy + dz * dz <= radius_mm * radius_mm) v[g.index(x, y, z)] = 1;
      }
  return LabelVolume(g, v);
}

}  // namespace

TEST_CASE("linear distances") {
  CHECK(linear_distance({0, 0, 0}, {3, 4, 0}, {1, 1, 1}) == 5.0);
  CHECK(linear_distance({0, 0, 0}, {3, 4, 0}, {2, 2, 2}) == 10.0);
  CHECK(linear_distance({1, 1, 1}, {1, 4, 5}, {7, 1, 1}) == 5.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 50), s(0.3, 4);
  for (int i = 0; i < 50; ++i) {
    const Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
    const Vec3 sp{s(rng), s(rng), s(rng)};
    const double oracle = std::sqrt(std::pow((a.x - b.x) * sp.x, 2) + std::pow((a.y - b.y) * sp.y, 2) +
                                    std::pow((a.z - b.z) * sp.z, 2));
    CHECK(std::abs(linear_distance(a, b, sp) - oracle) <= 1e-9);
    CHECK(linear_distance(a, b, sp) == linear_distance(b, a, sp));
    CHECK(linear_distance(a, c, sp) <= linear_distance(a, b, sp) + linear_distance(b, c, sp) + 1e-12);
  }
}

TEST_CASE("region volumes") {
  Geometry g;
  g.dims = {10, 10, 10};
  CHECK(region_volume(LabelVolume(g, std::vector<std::uint8_t>(1000, 1)), 1) == 1.0);
  CHECK(region_volume(LabelVolume(g, std::vector<std::uint8_t>(1000, 1)), 2) == 0.0);
  CHECK_THROWS_AS(region_volume(LabelVolume(g, std::vector<std::uint8_t>(1000, 1)), 0), InvalidArgument);

  const double analytic = 4.0 / 3.0 * std::numbers::pi * 20 * 20 * 20 / 1000.0;
  CHECK(analytic == doctest::Approx(33.51).epsilon(1e-3));
  const double v = region_volume(sphere(20, 1.0), 1);
  CHECK(std::abs(v - analytic) / analytic <= 0.015);

  // Additive over disjoint parts.
  std::mt19937_64 rng(2);
  std::vector<std::uint8_t> all(1000), left(1000, 0), right(1000, 0);
  for (int i = 0; i < 1000; ++i) {
    all[i] = rng() % 2;
    (i % 10 < 5 ? left : right)[i] = all[i];
  }
  g.spacing = {0.7, 1.3, 2.1};
  CHECK(region_volume(LabelVolume(g, all), 1) ==
        doctest::Approx(region_volume(LabelVolume(g, left), 1) + region_volume(LabelVolume(g, right), 1)));
}

TEST_CASE("lesion percentage") {
  Geometry g;
  g.dims = {10, 10, 10};
  std::vector<std::uint8_t> v(1000, 1);
  for (int i = 0; i < 50; ++i) v[i] = 2;
  const auto st = lesion_stats(LabelVolume(g, v));
  CHECK(st.lung_ml == doctest::Approx(0.95));
  CHECK(st.lesion_ml == doctest::Approx(0.05));
  CHECK(st.percentage == doctest::Approx(5.0));
  CHECK(lesion_stats(testing::constant_labels({4, 4, 4}, 1)).percentage == 0.0);
  CHECK_THROWS_AS(lesion_stats(testing::constant_labels({4, 4, 4}, 0)), EmptyRegionError);

  const auto lung_only = lesion_stats(LabelVolume(g, v), Denominator::LungOnly);
  CHECK(lung_only.percentage == doctest::Approx(100.0 * 50 / 950));
  const auto all_lesion = lesion_stats(testing::constant_labels({4, 4, 4}, 2));
  CHECK(all_lesion.percentage == 100.0);
  CHECK_THROWS_AS(lesion_stats(testing::constant_labels({4, 4, 4}, 2), Denominator::LungOnly),
                  EmptyRegionError);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::uint8_t> r(1000);
    for (auto& x : r) x = static_cast<std::uint8_t>(rng() % 3);
    r[0] = 1;
    const double pct = lesion_stats(LabelVolume(g, r)).percentage;
    CHECK(pct >= 0.0);
    CHECK(pct <= 100.0);
  }
}

TEST_CASE("phantom lesion ratio matches the generator") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 3; ++seed) {
    const auto c = mil::generate_phantom(seed, true, "p");
    if (c.lesion_mask.count(2) == 0) continue;
    ++checked;
    const double truth = 100.0 * static_cast<double>(c.lesion_mask.count(2)) /
                         static_cast<double>(c.lung_mask.count(1));
    CHECK(std::abs(lesion_stats(c.labels()).percentage - truth) <= 0.1);
  }
}

TEST_CASE("measurement records") {
  Geometry g;
  g.dims = {10, 10, 10};
  g.spacing = {2, 2, 2};
  const auto r = linear_record(g, {0, 0, 0}, {3, 4, 0});
  CHECK(r.value == 10.0);
  CHECK(r.kind == MeasurementKind::Linear);
  CHECK(r.timestamp.size() == 20);
  CHECK(r.timestamp.back() == 'Z');
  CHECK_THROWS_AS(linear_record(g, {0, 0, 0}, {10, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(linear_record(g, {-1, 0, 0}, {1, 0, 0}), InvalidArgument);

  const auto j = to_json(r);
  CHECK(j.at("kind") == "linear");
  CHECK(j.at("value") == 10.0);
  CHECK(j.at("p1") == nlohmann::json::array({0.0, 0.0, 0.0}));

  const auto vr = volume_record(testing::constant_labels({10, 10, 10}, 2), 2);
  CHECK(vr.value == 1.0);
  CHECK(to_json(vr).at("label") == "lesion");
  CHECK(to_json(std::vector<MeasurementRecord>{r, vr}).size() == 2);
}
