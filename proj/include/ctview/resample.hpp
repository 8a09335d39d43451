#pragma once

#include "ctview/volume.hpp"

namespace ctview {

// Resamples along z to `target_sz` mm. The first slice stays at the same
// world position and the z extent is preserved to within one output voxel.
// Scalars are interpolated linearly, labels take the nearest slice. x/y are
// untouched. A target equal to the current spacing returns an exact copy.
ScalarVolume resample_z(const ScalarVolume& vol, double target_sz);
LabelVolume resample_z(const LabelVolume& vol, double target_sz);

// Number of output slices resample_z produces.
int resampled_slice_count(int nz, double sz, double target_sz);

// Bilinear resize of a row-major image with half-pixel-centred sampling and
// edge clamping.
void resize_bilinear(const float* src, int src_w, int src_h, float* dst,
                     int dst_w, int dst_h);
void resize_bilinear(const double* src, int src_w, int src_h, double* dst,
                     int dst_w, int dst_h);

}  // namespace ctview
