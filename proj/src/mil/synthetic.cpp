#include "ctview/mil/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

namespace ctview::mil {

namespace {

struct Ellipsoid {
  Vec3 centre;
  Vec3 radii;

  bool contains(double x, double y, double z) const {
    const double dx = (x - centre.x) / radii.x;
    const double dy = (y - centre.y) / radii.y;
    const double dz = (z - centre.z) / radii.z;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

LabelVolume SyntheticCase::labels() const {
  std::vector<std::uint8_t> out(lung_mask.data().begin(), lung_mask.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (lesion_mask[i] != 0) out[i] = kLesion;
  }
  return LabelVolume(lung_mask.geometry(), std::move(out));
}

SyntheticCase generate_phantom(std::uint64_t seed, bool positive, const std::string& id,
                               const PhantomConfig& cfg) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const Dims d = cfg.dims;
  const Vec3 sp = cfg.spacing;
  const double cx = (d.nx - 1) / 2.0, cy = (d.ny - 1) / 2.0, cz = (d.nz - 1) / 2.0;

  // Body: elliptic cylinder along z.
  const double body_rx = uniform(0.44, 0.47) * d.nx;
  const double body_ry = uniform(0.30, 0.34) * d.ny;

  Ellipsoid lungs[2];
  const double rx = uniform(0.14, 0.17) * d.nx;
  const double ry = uniform(0.20, 0.25) * d.ny;
  const double rz = uniform(0.30, 0.37) * (d.nz - 1);
  const double gap = uniform(1.0, 2.0);
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    lungs[side].centre = {cx + sign * (rx + gap) + uniform(-0.5, 0.5), cy + uniform(-1.0, 1.0),
                          cz + uniform(-0.3, 0.3)};
    lungs[side].radii = {rx * uniform(0.95, 1.05), ry * uniform(0.95, 1.05), rz};
  }

  SyntheticCase c;
  c.id = id;
  c.label = positive ? 1 : 0;
  if (positive) {
    const int count = std::uniform_int_distribution<int>(1, cfg.max_lesions)(rng);
    for (int i = 0; i < count; ++i) {
      const Ellipsoid& lung = lungs[std::uniform_int_distribution<int>(0, 1)(rng)];
      const double phi = uniform(0.0, 2.0 * std::numbers::pi);
      const double frac = uniform(0.5, 0.75);
      Lesion l;
      l.centre = {lung.centre.x + frac * lung.radii.x * std::cos(phi),
                  lung.centre.y + frac * lung.radii.y * std::sin(phi),
                  lung.centre.z + uniform(-0.25, 0.25) * lung.radii.z};
      const double r_mm = uniform(12.0, 20.0);
      l.radii = {r_mm / sp.x, r_mm / sp.y, std::max(uniform(4.0, 7.0) / sp.z, 1.0)};
      l.hu = cfg.lesion_hu + uniform(-cfg.lesion_hu_spread, cfg.lesion_hu_spread) * 0.8;
      c.lesions.push_back(l);
    }
  }

  std::normal_distribution<double> lung_noise(0.0, cfg.lung_noise_sd);
  std::normal_distribution<double> body_noise(0.0, cfg.body_noise_sd);
  std::normal_distribution<double> lesion_noise(0.0, cfg.lesion_hu_spread * 0.2);
  Geometry g;
  g.dims = d;
  g.spacing = sp;
  std::vector<float> scalar(d.count());
  std::vector<std::uint8_t> lung(d.count(), 0), lesion(d.count(), 0);
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = g.index(x, y, z);
        const double bx = (x - cx) / body_rx, by = (y - cy) / body_ry;
        double v = cfg.exterior_hu;
        if (bx * bx + by * by <= 1.0) v = cfg.body_hu + body_noise(rng);
        if (lungs[0].contains(x, y, z) || lungs[1].contains(x, y, z)) {
          lung[i] = kLung;
          v = cfg.lung_hu + lung_noise(rng);
          for (const Lesion& l : c.lesions) {
            if (Ellipsoid{l.centre, l.radii}.contains(x, y, z)) {
              lesion[i] = kLesion;
              v = l.hu + lesion_noise(rng);
              break;
            }
          }
        }
        scalar[i] = static_cast<float>(v);
      }
    }
  }
  c.scalar = ScalarVolume(g, std::move(scalar));
  c.lung_mask = LabelVolume(g, std::move(lung));
  c.lesion_mask = LabelVolume(g, std::move(lesion));
  return c;
}

std::vector<SyntheticCase> generate_synthetic_dataset(int n_cases, std::uint64_t seed,
                                                      double positive_fraction,
                                                      const PhantomConfig& config) {
  if (n_cases < 2) throw InvalidArgument("synthetic dataset needs at least 2 cases");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw InvalidArgument("positive fraction must lie in [0, 1]");
  }
  const int positives = static_cast<int>(std::lround(n_cases * positive_fraction));
  std::vector<int> labels(n_cases, 0);
  std::fill(labels.begin(), labels.begin() + positives, 1);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<SyntheticCase> out;
  out.reserve(n_cases);
  for (int i = 0; i < n_cases; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "case_%03d", i);
    out.push_back(generate_phantom(mix(seed, static_cast<std::uint64_t>(i)), labels[i] == 1, id,
                                   config));
  }
  return out;
}

}  // namespace ctview::mil
