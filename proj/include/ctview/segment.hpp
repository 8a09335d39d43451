#pragma once

#include <cstdint>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview::seg {

// Tag attached to every output of this module.
inline constexpr const char* kFallbackNotice = "fallback - not clinically validated";

struct SegmenterConfig {
  double air_threshold_hu = -320.0;
  double lesion_band_lo_hu = -700.0;
  double lesion_band_hi_hu = -250.0;
  int min_component_voxels = 50;
  int closing_radius = 2;

  void validate() const;
};

// Connected components with 6-connectivity. Component ids start at 1 and
// follow x-fastest scan order of each component's first voxel; 0 is
// background.
struct Components {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> sizes;  // sizes[id - 1]
  std::size_t count() const { return sizes.size(); }
};

Components label_components(const Dims& dims, const std::vector<std::uint8_t>& mask);

// Voxels strictly below the air threshold.
std::vector<std::uint8_t> threshold_candidates(const ScalarVolume& vol, double air_threshold_hu);

// Morphological closing with a ball of `radius` voxels, computed as if the
// volume were padded with background. Never removes foreground.
std::vector<std::uint8_t> close_mask(const Dims& dims, const std::vector<std::uint8_t>& mask,
                                     int radius);

// Threshold, drop components touching the x/y border, keep the two largest,
// close. Output voxels are labelled 1. Throws EmptyRegionError when nothing
// survives.
LabelVolume segment_lungs(const ScalarVolume& vol, const SegmenterConfig& cfg = {});

// Lesion-band voxels inside the lung region, minus components smaller than
// the configured size. Returns the lung mask with lesion voxels relabelled 2.
LabelVolume localize_lesions(const ScalarVolume& vol, const LabelVolume& lungmask,
                             const SegmenterConfig& cfg = {});

}  // namespace ctview::seg
