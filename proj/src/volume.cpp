#include "ctview/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctview {

Axis parse_axis(std::string_view name) {
  if (name == "axial") return Axis::Axial;
  if (name == "coronal") return Axis::Coronal;
  if (name == "sagittal") return Axis::Sagittal;
  throw InvalidArgument("unknown axis '" + std::string(name) + "'");
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::Axial: return "axial";
    case Axis::Coronal: return "coronal";
    case Axis::Sagittal: return "sagittal";
  }
  return "axial";
}

int normal_dimension(Axis axis) {
  switch (axis) {
    case Axis::Axial: return 2;
    case Axis::Coronal: return 1;
    case Axis::Sagittal: return 0;
  }
  return 2;
}

void Geometry::validate() const {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw InvalidArgument("volume dims must all be >= 1");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(spacing[i] > 0.0) || !std::isfinite(spacing[i])) {
      throw InvalidArgument("voxel spacing must be positive and finite");
    }
    if (!std::isfinite(origin[i])) throw InvalidArgument("origin must be finite");
  }
}

bool Geometry::same_as(const Geometry& other, double tol) const {
  if (!(dims == other.dims)) return false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(spacing[i] - other.spacing[i]) > tol) return false;
    if (std::abs(origin[i] - other.origin[i]) > tol) return false;
  }
  return true;
}

ScalarVolume::ScalarVolume(Geometry geometry, std::vector<float> data)
    : VolumeGrid<float>(geometry, std::move(data)) {
  for (float v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("scalar volume contains a non-finite value");
  }
}

float ScalarVolume::min_value() const {
  return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end());
}

float ScalarVolume::max_value() const {
  return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end());
}

LabelVolume::LabelVolume(Geometry geometry, std::vector<std::uint8_t> data)
    : VolumeGrid<std::uint8_t>(geometry, std::move(data)) {
  for (auto v : data_) {
    if (v > kLesion) {
      throw InvalidArgument("label volume value " + std::to_string(v) +
                            " outside {0,1,2}");
    }
  }
}

std::size_t LabelVolume::count(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), label));
}

WindowLevel::WindowLevel(double lo_hu, double hi_hu) : lo(lo_hu), hi(hi_hu) {
  if (!(lo < hi)) throw InvalidArgument("window/level requires lo < hi");
}

void SliceImage::validate() const {
  if (channels != 1 && channels != 4) throw InvalidArgument("slice image channels must be 1 or 4");
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InvalidArgument("slice image buffer does not match width*height*channels");
  }
}

namespace {

template <typename T>
Plane<T> extract(const VolumeGrid<T>& vol, Axis axis, int index) {
  const Dims& d = vol.dims();
  const int n = d[normal_dimension(axis)];
  if (index < 0 || index >= n) {
    throw InvalidArgument("slice index " + std::to_string(index) + " out of range [0, " +
                          std::to_string(n) + ") for " + std::string(axis_name(axis)));
  }
  Plane<T> out;
  switch (axis) {
    case Axis::Axial:
      out.width = d.nx;
      out.height = d.ny;
      out.values.resize(static_cast<std::size_t>(d.nx) * d.ny);
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) out.at(x, y) = vol.at(x, y, index);
      break;
    case Axis::Coronal:
      out.width = d.nx;
      out.height = d.nz;
      out.values.resize(static_cast<std::size_t>(d.nx) * d.nz);
      for (int z = 0; z < d.nz; ++z)
        for (int x = 0; x < d.nx; ++x) out.at(x, z) = vol.at(x, index, z);
      break;
    case Axis::Sagittal:
      out.width = d.ny;
      out.height = d.nz;
      out.values.resize(static_cast<std::size_t>(d.ny) * d.nz);
      for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y) out.at(y, z) = vol.at(index, y, z);
      break;
  }
  return out;
}

}  // namespace

ScalarSlice extract_slice(const ScalarVolume& vol, Axis axis, int index) {
  return extract(vol, axis, index);
}

LabelSlice extract_slice(const LabelVolume& vol, Axis axis, int index) {
  return extract(vol, axis, index);
}

std::pair<double, double> slice_spacing(const Geometry& g, Axis axis) {
  switch (axis) {
    case Axis::Axial: return {g.spacing.x, g.spacing.y};
    case Axis::Coronal: return {g.spacing.x, g.spacing.z};
    case Axis::Sagittal: return {g.spacing.y, g.spacing.z};
  }
  return {g.spacing.x, g.spacing.y};
}

std::uint8_t window_level_value(double v, const WindowLevel& wl) {
  if (v <= wl.lo) return 0;
  if (v >= wl.hi) return 255;
  const double scaled = std::round(255.0 * (v - wl.lo) / (wl.hi - wl.lo));
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

SliceImage apply_window_level(const ScalarSlice& slice, const WindowLevel& wl) {
  if (!(wl.lo < wl.hi)) throw InvalidArgument("window/level requires lo < hi");
  SliceImage img;
  img.width = slice.width;
  img.height = slice.height;
  img.channels = 1;
  img.pixels.resize(slice.values.size());
  for (std::size_t i = 0; i < slice.values.size(); ++i) {
    img.pixels[i] = window_level_value(slice.values[i], wl);
  }
  return img;
}

namespace {

template <typename Pred>
BoundingBox box_where(const LabelVolume& mask, Pred pred, const char* what) {
  const Dims& d = mask.dims();
  BoundingBox box{{d.nx, -1}, {d.ny, -1}, {d.nz, -1}};
  bool found = false;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!pred(mask.at(x, y, z))) continue;
        found = true;
        box.x.min = std::min(box.x.min, x);
        box.x.max = std::max(box.x.max, x);
        box.y.min = std::min(box.y.min, y);
        box.y.max = std::max(box.y.max, y);
        box.z.min = std::min(box.z.min, z);
        box.z.max = std::max(box.z.max, z);
      }
    }
  }
  if (!found) throw EmptyRegionError(std::string("no voxels labelled ") + what);
  return box;
}

}  // namespace

BoundingBox mask_bounding_box(const LabelVolume& mask, std::uint8_t label) {
  if (label != kLung && label != kLesion) {
    throw InvalidArgument("bounding box label must be 1 (lung) or 2 (lesion)");
  }
  return box_where(mask, [label](std::uint8_t v) { return v == label; },
                   label == kLung ? "lung" : "lesion");
}

BoundingBox tissue_bounding_box(const LabelVolume& mask) {
  return box_where(mask, [](std::uint8_t v) { return v != kContext; }, "lung or lesion");
}

Vec3 voxel_to_world(const Geometry& g, const Vec3& voxel) {
  return {g.origin.x + voxel.x * g.spacing.x, g.origin.y + voxel.y * g.spacing.y,
          g.origin.z + voxel.z * g.spacing.z};
}

Vec3 world_to_voxel(const Geometry& g, const Vec3& world) {
  return {(world.x - g.origin.x) / g.spacing.x, (world.y - g.origin.y) / g.spacing.y,
          (world.z - g.origin.z) / g.spacing.z};
}

}  // namespace ctview
