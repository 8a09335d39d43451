#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "ctview/render/transfer.hpp"
#include "ctview/volume.hpp"

namespace ctview::render {

enum class Projection { Perspective, Orthographic };

// Looks at `center` from `distance` mm away. Azimuth turns about +z
// starting from a view along +y; elevation tilts toward +z.
struct Camera {
  Vec3 center;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = 500.0;
  Projection projection = Projection::Orthographic;
  double fov_deg = 30.0;        // perspective
  double ortho_height = 300.0;  // orthographic, mm

  void validate() const;
  // Centered on the volume, orthographic, framing its largest extent.
  static Camera framing(const Geometry& geometry);
};

// Fractions of the volume extent, where 0 and 1 are the outer faces of the
// first and last voxel along each axis.
struct ClipBox {
  std::array<double, 3> min{0.0, 0.0, 0.0};
  std::array<double, 3> max{1.0, 1.0, 1.0};

  void validate() const;
  bool degenerate() const;
};

struct LabelStyle {
  bool visible = true;
  TransferFunction tf;
};

struct RenderSettings {
  std::array<LabelStyle, 3> labels;  // context, lung, lesion
  // Lung drawn as a faint white shell brightened where the scalar gradient
  // is strong, instead of its own transfer function.
  bool lung_outline = false;
  int width = 256;
  int height = 256;
  Rgba background{0.0, 0.0, 0.0, 1.0};
  double step_factor = 0.5;  // sample step as a fraction of the smallest spacing

  void validate() const;
  static RenderSettings defaults();
};

inline constexpr double kEarlyTermination = 0.995;

// Float RGBA, straight (not premultiplied) alpha, rows top to bottom.
struct RgbaImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgba;
};

// Throws InvalidArgument if the volumes are not co-registered or any
// argument is invalid. A degenerate clip box yields a background image.
RgbaImage raycast(const ScalarVolume& scalar, const LabelVolume& labels, const Camera& camera,
                  const ClipBox& clip, const RenderSettings& settings);

// Rounds to 8 bits per channel.
SliceImage to_slice_image(const RgbaImage& image);

Camera camera_from_json(const nlohmann::json& j, const Geometry& geometry);
ClipBox clip_from_json(const nlohmann::json& j);
// Missing fields keep their defaults. Label TFs may be given inline or by
// preset name ("tf": "lung-air") resolved against `presets`.
RenderSettings settings_from_json(const nlohmann::json& j,
                                  const std::map<std::string, TransferFunction>& presets);

}  // namespace ctview::render
