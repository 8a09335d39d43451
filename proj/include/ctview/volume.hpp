#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctview/error.hpp"

namespace ctview {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  int& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  friend bool operator==(const Index3&, const Index3&) = default;
};

// Axial planes are (x, y) at fixed z, coronal (x, z) at fixed y, sagittal
// (y, z) at fixed x. x runs left-right, y anterior-posterior, z
// inferior-superior.
enum class Axis { Axial, Coronal, Sagittal };

Axis parse_axis(std::string_view name);
std::string_view axis_name(Axis axis);

// Index of the volume axis held fixed by a slice along `axis` (0=x, 1=y, 2=z).
int normal_dimension(Axis axis);

enum Label : std::uint8_t { kContext = 0, kLung = 1, kLesion = 2 };

struct Dims {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int operator[](int i) const { return i == 0 ? nx : (i == 1 ? ny : nz); }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Geometry {
  Dims dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin;

  // Throws InvalidArgument unless every dim is >= 1 and every spacing > 0.
  void validate() const;

  bool same_as(const Geometry& other, double tol = 1e-6) const;

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x;
  }
  bool contains(const Index3& p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < dims.nx &&
           p.y < dims.ny && p.z < dims.nz;
  }
  double voxel_volume_mm3() const { return spacing.x * spacing.y * spacing.z; }
};

// Dense x-fastest voxel grid. Immutable once constructed.
template <typename T>
class VolumeGrid {
 public:
  using value_type = T;

  VolumeGrid() = default;
  VolumeGrid(Geometry geometry, std::vector<T> data)
      : geometry_(geometry), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.dims.count()) {
      throw InvalidArgument("voxel buffer length " +
                            std::to_string(data_.size()) +
                            " does not match dims product " +
                            std::to_string(geometry_.dims.count()));
    }
  }

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  const Vec3& spacing() const { return geometry_.spacing; }
  const Vec3& origin() const { return geometry_.origin; }
  std::span<const T> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  T at(int x, int y, int z) const { return data_[geometry_.index(x, y, z)]; }
  T operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const VolumeGrid& a, const VolumeGrid& b) {
    return a.geometry_.dims == b.geometry_.dims &&
           a.geometry_.spacing == b.geometry_.spacing &&
           a.geometry_.origin == b.geometry_.origin && a.data_ == b.data_;
  }

 protected:
  Geometry geometry_;
  std::vector<T> data_;
};

// CT intensities in HU.
class ScalarVolume : public VolumeGrid<float> {
 public:
  ScalarVolume() = default;
  ScalarVolume(Geometry geometry, std::vector<float> data);

  float min_value() const;
  float max_value() const;
};

// Per-voxel labels restricted to {context, lung, lesion}.
class LabelVolume : public VolumeGrid<std::uint8_t> {
 public:
  LabelVolume() = default;
  LabelVolume(Geometry geometry, std::vector<std::uint8_t> data);

  std::size_t count(std::uint8_t label) const;
};

struct WindowLevel {
  double lo = -1000.0;
  double hi = 400.0;

  WindowLevel() = default;
  WindowLevel(double lo_hu, double hi_hu);
};

// Row-major 2D array; row r, column c lives at values[r * width + c].
template <typename T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  T at(int c, int r) const { return values[static_cast<std::size_t>(r) * width + c]; }
  T& at(int c, int r) { return values[static_cast<std::size_t>(r) * width + c]; }
};

using ScalarSlice = Plane<float>;
using LabelSlice = Plane<std::uint8_t>;

struct SliceImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (gray) or 4 (RGBA)
  std::vector<std::uint8_t> pixels;
  Axis axis = Axis::Axial;
  int index = 0;
  double spacing_u = 1.0;
  double spacing_v = 1.0;

  void validate() const;
};

struct AxisRange {
  int min = 0;
  int max = 0;
  int extent() const { return max - min + 1; }
  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

// Inclusive voxel index ranges per axis.
struct BoundingBox {
  AxisRange x;
  AxisRange y;
  AxisRange z;

  const AxisRange& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Slices are copied without interpolation. Axial planes have width nx and
// height ny, coronal nx by nz, sagittal ny by nz.
ScalarSlice extract_slice(const ScalarVolume& vol, Axis axis, int index);
LabelSlice extract_slice(const LabelVolume& vol, Axis axis, int index);

// In-plane pixel spacing (u, v) of a slice along `axis`.
std::pair<double, double> slice_spacing(const Geometry& geometry, Axis axis);

// Linear gray mapping: v <= lo -> 0, v >= hi -> 255, otherwise
// round(255 (v - lo) / (hi - lo)) with halves rounded away from zero.
std::uint8_t window_level_value(double v, const WindowLevel& wl);
SliceImage apply_window_level(const ScalarSlice& slice, const WindowLevel& wl);

// Tightest box around voxels carrying `label` (1 or 2). Throws
// EmptyRegionError when the label is absent.
BoundingBox mask_bounding_box(const LabelVolume& mask, std::uint8_t label);

// Tightest box around all lung tissue (labels 1 and 2).
BoundingBox tissue_bounding_box(const LabelVolume& mask);

Vec3 voxel_to_world(const Geometry& geometry, const Vec3& voxel);
Vec3 world_to_voxel(const Geometry& geometry, const Vec3& world);

}  // namespace ctview
