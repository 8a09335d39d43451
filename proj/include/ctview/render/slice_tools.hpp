#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview::render {

// Per-pixel maximum over slices [center - half_width, center + half_width]
// along `axis`, taken only over voxels where `mask` is nonzero. Pixels with
// no masked voxel in the slab get the volume minimum. The slab is clipped to
// the volume; throws InvalidArgument if nothing is left.
ScalarSlice mip_project(const ScalarVolume& scalar, const LabelVolume& mask, Axis axis,
                        int center, int half_width);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Closed loop; the last point connects back to the first.
using Polyline = std::vector<Point2>;

// Marching-squares boundaries of {pixel == label} at the 0.5 level, in pixel
// coordinates (pixel centres on integers). Diagonal-only neighbours are kept
// apart. Outer boundaries have positive shoelace area and holes negative, so
// the region is always on the same side of the walk. Collinear vertices are
// dropped.
std::vector<Polyline> mask_contours(const LabelSlice& slice, std::uint8_t label);

// Same, for pixels where `inside(value)` holds.
std::vector<Polyline> mask_contours_if(const LabelSlice& slice, bool (*inside)(std::uint8_t));

double signed_area(const Polyline& loop);

enum class Colormap { BlueRed, Gray };

Colormap parse_colormap(const std::string& name);

// 8-bit color for a heat value in [0, 1].
std::array<std::uint8_t, 3> colormap_color(Colormap map, double value);

struct ContourLayer {
  std::vector<Polyline> loops;
  std::array<std::uint8_t, 3> color{0, 255, 0};
};

inline constexpr std::array<std::uint8_t, 3> kLungOutline{0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kLesionOutline{255, 0, 0};

struct HeatmapOverlay {
  ScalarSlice values;  // in [0, 1]
  double alpha = 0.5;
  double threshold = 0.0;  // values <= threshold stay transparent
  Colormap colormap = Colormap::BlueRed;
};

// RGBA composite of a gray or RGBA base: heatmap blended first, then each
// contour layer drawn 1 px wide on the pixels just inside its region.
// Throws InvalidArgument on a size mismatch.
SliceImage compose_overlay(const SliceImage& base, const std::vector<ContourLayer>& contours,
                           const std::optional<HeatmapOverlay>& heatmap);

}  // namespace ctview::render
