#include "ctview/segment.hpp"

#include <algorithm>
#include <numeric>

namespace ctview::seg {

void SegmenterConfig::validate() const {
  auto in_range = [](double v) { return v >= -1024.0 && v <= 3071.0; };
  if (!in_range(air_threshold_hu) || !in_range(lesion_band_lo_hu) || !in_range(lesion_band_hi_hu)) {
    throw InvalidArgument("segmenter thresholds must lie within [-1024, 3071] HU");
  }
  if (!(lesion_band_lo_hu < lesion_band_hi_hu)) {
    throw InvalidArgument("lesion band requires lo < hi");
  }
  if (min_component_voxels < 0 || closing_radius < 0) {
    throw InvalidArgument("component size and closing radius must be non-negative");
  }
}

Components label_components(const Dims& d, const std::vector<std::uint8_t>& mask) {
  Components c;
  c.ids.assign(mask.size(), 0);
  const std::size_t sx = 1, sy = d.nx, sz = static_cast<std::size_t>(d.nx) * d.ny;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || c.ids[start] != 0) continue;
    const auto id = static_cast<std::int32_t>(c.sizes.size() + 1);
    std::size_t size = 0;
    stack.push_back(start);
    c.ids[start] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(i % d.nx);
      const int y = static_cast<int>((i / d.nx) % d.ny);
      const int z = static_cast<int>(i / sz);
      auto visit = [&](bool inside, std::size_t j) {
        if (inside && mask[j] && c.ids[j] == 0) {
          c.ids[j] = id;
          stack.push_back(j);
        }
      };
      visit(x > 0, i - sx);
      visit(x + 1 < d.nx, i + sx);
      visit(y > 0, i - sy);
      visit(y + 1 < d.ny, i + sy);
      visit(z > 0, i - sz);
      visit(z + 1 < d.nz, i + sz);
    }
    c.sizes.push_back(size);
  }
  return c;
}

std::vector<std::uint8_t> threshold_candidates(const ScalarVolume& vol, double air_threshold_hu) {
  std::vector<std::uint8_t> out(vol.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vol[i] < air_threshold_hu ? 1 : 0;
  return out;
}

namespace {

struct Offset {
  int dx, dy, dz;
};

std::vector<Offset> ball(int radius) {
  std::vector<Offset> out;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy + dz * dz <= radius * radius) out.push_back({dx, dy, dz});
  return out;
}

std::vector<std::uint8_t> dilate(const Dims& d, const std::vector<std::uint8_t>& in,
                                 const std::vector<Offset>& se) {
  std::vector<std::uint8_t> out(in.size(), 0);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (!in[(static_cast<std::size_t>(z) * d.ny + y) * d.nx + x]) continue;
        for (const auto& o : se) {
          const int X = x + o.dx, Y = y + o.dy, Z = z + o.dz;
          if (X < 0 || Y < 0 || Z < 0 || X >= d.nx || Y >= d.ny || Z >= d.nz) continue;
          out[(static_cast<std::size_t>(Z) * d.ny + Y) * d.nx + X] = 1;
        }
      }
  return out;
}

std::vector<std::uint8_t> erode(const Dims& d, const std::vector<std::uint8_t>& in,
                                const std::vector<Offset>& se) {
  std::vector<std::uint8_t> out(in.size(), 0);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = (static_cast<std::size_t>(z) * d.ny + y) * d.nx + x;
        if (!in[i]) continue;
        bool keep = true;
        for (const auto& o : se) {
          const int X = x + o.dx, Y = y + o.dy, Z = z + o.dz;
          if (X < 0 || Y < 0 || Z < 0 || X >= d.nx || Y >= d.ny || Z >= d.nz) continue;
          if (!in[(static_cast<std::size_t>(Z) * d.ny + Y) * d.nx + X]) {
            keep = false;
            break;
          }
        }
        out[i] = keep ? 1 : 0;
      }
  return out;
}

}  // namespace

std::vector<std::uint8_t> close_mask(const Dims& dims, const std::vector<std::uint8_t>& mask,
                                     int radius) {
  if (radius <= 0) return mask;
  // Work on a grid padded by the radius so the faces of the volume do not
  // act as either foreground or background.
  const Dims p{dims.nx + 2 * radius, dims.ny + 2 * radius, dims.nz + 2 * radius};
  std::vector<std::uint8_t> padded(p.count(), 0);
  auto at = [&](const Dims& d, int x, int y, int z) {
    return (static_cast<std::size_t>(z) * d.ny + y) * d.nx + x;
  };
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x)
        padded[at(p, x + radius, y + radius, z + radius)] = mask[at(dims, x, y, z)];
  const auto se = ball(radius);
  const auto closed = erode(p, dilate(p, padded, se), se);
  std::vector<std::uint8_t> out(mask.size());
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x)
        out[at(dims, x, y, z)] = closed[at(p, x + radius, y + radius, z + radius)];
  return out;
}

LabelVolume segment_lungs(const ScalarVolume& vol, const SegmenterConfig& cfg) {
  cfg.validate();
  const Dims& d = vol.dims();
  const auto candidates = threshold_candidates(vol, cfg.air_threshold_hu);
  const Components comps = label_components(d, candidates);

  std::vector<bool> exterior(comps.count(), false);
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (x != 0 && y != 0 && x != d.nx - 1 && y != d.ny - 1) continue;
        const auto id = comps.ids[vol.geometry().index(x, y, z)];
        if (id > 0) exterior[id - 1] = true;
      }
    }
  }
  std::vector<std::int32_t> order;
  for (std::size_t i = 0; i < comps.count(); ++i) {
    if (!exterior[i]) order.push_back(static_cast<std::int32_t>(i + 1));
  }
  if (order.empty()) throw EmptyRegionError("no lung-candidate component below the air threshold");
  std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return comps.sizes[a - 1] > comps.sizes[b - 1];
  });
  order.resize(std::min<std::size_t>(order.size(), 2));

  std::vector<std::uint8_t> keep(candidates.size(), 0);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto id = comps.ids[i];
    if (id > 0 && std::find(order.begin(), order.end(), id) != order.end()) keep[i] = 1;
  }
  keep = close_mask(d, keep, cfg.closing_radius);
  for (auto& v : keep) v = v ? kLung : kContext;
  return LabelVolume(vol.geometry(), std::move(keep));
}

LabelVolume localize_lesions(const ScalarVolume& vol, const LabelVolume& lungmask,
                             const SegmenterConfig& cfg) {
  cfg.validate();
  if (!vol.geometry().same_as(lungmask.geometry())) {
    throw InvalidArgument("lung mask geometry does not match the scalar volume");
  }
  std::vector<std::uint8_t> band(vol.size(), 0);
  for (std::size_t i = 0; i < band.size(); ++i) {
    const double v = vol[i];
    band[i] = lungmask[i] != kContext && v >= cfg.lesion_band_lo_hu && v <= cfg.lesion_band_hi_hu;
  }
  const Components comps = label_components(vol.dims(), band);
  std::vector<std::uint8_t> out(vol.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto id = comps.ids[i];
    if (id > 0 && comps.sizes[id - 1] >= static_cast<std::size_t>(cfg.min_component_voxels)) {
      out[i] = kLesion;
    } else {
      out[i] = lungmask[i] != kContext ? kLung : kContext;
    }
  }
  return LabelVolume(vol.geometry(), std::move(out));
}

}  // namespace ctview::seg
