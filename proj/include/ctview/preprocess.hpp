#pragma once

#include <cstddef>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview {

inline constexpr double kClipLowHu = -1250.0;
inline constexpr double kClipHighHu = 250.0;
inline constexpr int kBagSide = 224;

// Stack of `depth` square slices of side `side`, values in [0, 1].
struct SliceStack {
  int depth = 0;
  int side = 0;
  std::vector<float> values;

  std::size_t slice_size() const { return static_cast<std::size_t>(side) * side; }
  const float* slice(int k) const { return values.data() + k * slice_size(); }
  float* slice(int k) { return values.data() + k * slice_size(); }
};

// Where a bag came from, so per-slice maps can be placed back into the
// original volume.
struct BagGeometry {
  Geometry source;        // geometry of the scalar volume before resampling
  double z_spacing = 1.0; // spacing of the resampled grid the bag was cut from
  BoundingBox crop;       // lung box in the resampled grid
  int square = 0;         // side of the padded square before resizing
  int pad_x = 0;          // columns of padding before the crop
  int pad_y = 0;          // rows of padding before the crop
  int side = kBagSide;
};

struct ClassifierInput {
  SliceStack bag;
  BagGeometry geometry;
};

// Clip to [-1250, 250] HU, then map affinely onto [0, 1].
double normalize_hu(double hu);

// Full classifier preprocessing: 1 mm z-resampling, background outside the
// lung mask (labels 1 and 2) set to the clip floor, crop to the lung box,
// symmetric zero padding to a square, normalisation and per-slice bilinear
// resize to side x side. Throws EmptyRegionError for an empty lung mask.
ClassifierInput prepare_classifier_input(const ScalarVolume& vol,
                                         const LabelVolume& lungmask,
                                         int side = kBagSide);

// Places per-slice bag maps (same layout as the bag) back onto the source
// grid. Voxels outside the crop are 0.
ScalarVolume bag_to_volume(const SliceStack& maps, const BagGeometry& geometry);

}  // namespace ctview
