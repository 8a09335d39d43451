#include "ctview/render/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "ctview/error.hpp"

namespace ctview::render {

namespace {

using V3 = std::array<double, 3>;

V3 add(const V3& a, const V3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
V3 scale(const V3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
V3 cross(const V3& a, const V3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const V3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }
V3 normalized(const V3& a) { return scale(a, 1.0 / norm(a)); }
double radians(double deg) { return deg * std::numbers::pi / 180.0; }

struct Frame {
  V3 forward;
  V3 right;
  V3 up;
};

Frame camera_frame(const Camera& cam) {
  const double az = radians(cam.azimuth_deg), el = radians(cam.elevation_deg);
  Frame f;
  f.forward = {std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
  V3 r = cross(f.forward, {0.0, 0.0, 1.0});
  f.right = norm(r) < 1e-9 ? V3{1.0, 0.0, 0.0} : normalized(r);
  f.up = cross(f.right, f.forward);
  return f;
}

// Everything a ray needs, resolved once per frame.
struct Scene {
  const ScalarVolume* scalar;
  const LabelVolume* labels;
  const RenderSettings* settings;
  std::array<int, 3> n;
  V3 origin, spacing;
  V3 box_lo, box_hi;     // clip box, continuous index space
  std::array<int, 3> clamp_lo, clamp_hi;  // voxel centres inside the clip box
  double step;           // mm
  double exponent;       // opacity correction, step / reference step
  TransferFunction outline;

  float voxel(int x, int y, int z) const {
    return scalar->data()[(static_cast<std::size_t>(z) * n[1] + y) * n[0] + x];
  }
  std::uint8_t label(int x, int y, int z) const {
    return labels->data()[(static_cast<std::size_t>(z) * n[1] + y) * n[0] + x];
  }

  double trilinear(const V3& p) const {
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      const double fl = std::floor(p[a]);
      i0[a] = static_cast<int>(fl);
      f[a] = p[a] - fl;
    }
    auto at = [&](int dx, int dy, int dz) {
      const int x = std::min(i0[0] + dx, clamp_hi[0]);
      const int y = std::min(i0[1] + dy, clamp_hi[1]);
      const int z = std::min(i0[2] + dz, clamp_hi[2]);
      return static_cast<double>(voxel(x, y, z));
    };
    const double c00 = at(0, 0, 0) * (1 - f[0]) + at(1, 0, 0) * f[0];
    const double c10 = at(0, 1, 0) * (1 - f[0]) + at(1, 1, 0) * f[0];
    const double c01 = at(0, 0, 1) * (1 - f[0]) + at(1, 0, 1) * f[0];
    const double c11 = at(0, 1, 1) * (1 - f[0]) + at(1, 1, 1) * f[0];
    const double c0 = c00 * (1 - f[1]) + c10 * f[1];
    const double c1 = c01 * (1 - f[1]) + c11 * f[1];
    return c0 * (1 - f[2]) + c1 * f[2];
  }

  // Central-difference gradient magnitude in HU/mm at a voxel.
  double gradient(int x, int y, int z) const {
    const int c[3] = {x, y, z};
    double g2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      int lo[3] = {x, y, z}, hi[3] = {x, y, z};
      lo[a] = std::max(c[a] - 1, clamp_lo[a]);
      hi[a] = std::min(c[a] + 1, clamp_hi[a]);
      if (hi[a] == lo[a]) continue;
      const double d = (voxel(hi[0], hi[1], hi[2]) - voxel(lo[0], lo[1], lo[2])) /
                       ((hi[a] - lo[a]) * spacing[a]);
      g2 += d * d;
    }
    return std::sqrt(g2);
  }
};

// Ray/box slab test in index space; returns false when the ray misses.
bool intersect(const V3& o, const V3& d, const V3& lo, const V3& hi, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

std::array<double, 4> trace(const Scene& s, const V3& world_origin, const V3& world_dir) {
  const RenderSettings& rs = *s.settings;
  V3 o, d;
  for (int a = 0; a < 3; ++a) {
    o[a] = (world_origin[a] - s.origin[a]) / s.spacing[a];
    d[a] = world_dir[a] / s.spacing[a];
  }
  double c[3] = {0.0, 0.0, 0.0};
  double acc = 0.0;
  double t0, t1;
  if (intersect(o, d, s.box_lo, s.box_hi, t0, t1)) {
    t0 = std::max(t0, 0.0);
    for (long k = 0;; ++k) {
      const double t = t0 + (static_cast<double>(k) + 0.5) * s.step;
      if (t >= t1) break;
      V3 p;
      int nearest[3];
      for (int a = 0; a < 3; ++a) {
        p[a] = std::clamp(o[a] + t * d[a], static_cast<double>(s.clamp_lo[a]),
                          static_cast<double>(s.clamp_hi[a]));
        nearest[a] = static_cast<int>(std::floor(p[a] + 0.5));
      }
      const std::uint8_t l = s.label(nearest[0], nearest[1], nearest[2]);
      const LabelStyle& style = rs.labels[l];
      if (!style.visible) continue;
      const double v = s.trilinear(p);
      Rgba col;
      if (rs.lung_outline && l == kLung) {
        col = s.outline.eval(v);
        const double g = s.gradient(nearest[0], nearest[1], nearest[2]);
        col.a = std::min(1.0, col.a + 0.5 * std::min(1.0, g / 500.0)) * style.tf.opacity_scale;
      } else {
        col = style.tf.eval(v);
      }
      if (col.a <= 0.0) continue;
      const double alpha = col.a >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - col.a, s.exponent);
      const double w = (1.0 - acc) * alpha;
      c[0] += w * col.r;
      c[1] += w * col.g;
      c[2] += w * col.b;
      acc += w;
      if (acc >= kEarlyTermination) break;
    }
  }
  const Rgba& bg = rs.background;
  if (acc == 0.0) return {bg.r, bg.g, bg.b, bg.a};
  const double out_a = acc + (1.0 - acc) * bg.a;
  const double k = (1.0 - acc) * bg.a;
  return {(c[0] + k * bg.r) / out_a, (c[1] + k * bg.g) / out_a, (c[2] + k * bg.b) / out_a, out_a};
}

}  // namespace

void Camera::validate() const {
  if (!(distance > 0.0)) throw InvalidArgument("camera distance must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw InvalidArgument("camera fov must lie in (0, 180)");
  if (!(ortho_height > 0.0)) throw InvalidArgument("orthographic height must be positive");
  if (!std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg)) {
    throw InvalidArgument("camera angles must be finite");
  }
}

Camera Camera::framing(const Geometry& g) {
  Camera c;
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    const int n = a == 0 ? g.dims.nx : (a == 1 ? g.dims.ny : g.dims.nz);
    c.center[a] = g.origin[a] + (n - 1) * g.spacing[a] / 2.0;
    extent = std::max(extent, n * g.spacing[a]);
  }
  c.distance = 2.0 * extent;
  c.ortho_height = extent * 1.05;
  return c;
}

void ClipBox::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(min[a] >= 0.0 && min[a] <= max[a] && max[a] <= 1.0)) {
      throw InvalidArgument("clip box needs 0 <= min <= max <= 1 on every axis");
    }
  }
}

bool ClipBox::degenerate() const {
  for (int a = 0; a < 3; ++a) {
    if (max[a] <= min[a]) return true;
  }
  return false;
}

void RenderSettings::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("image width and height must be >= 1");
  if (width > 4096 || height > 4096) throw InvalidArgument("image size is limited to 4096 pixels");
  if (!(step_factor > 0.0)) throw InvalidArgument("step factor must be positive");
  for (const auto& l : labels) l.tf.validate();
  for (double v : {background.r, background.g, background.b, background.a}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("background channels must lie in [0, 1]");
  }
}

RenderSettings RenderSettings::defaults() {
  RenderSettings s;
  s.labels[kContext].tf = builtin_preset("context-fat");
  s.labels[kLung].tf = builtin_preset("lung-air");
  s.labels[kLesion].tf = builtin_preset("lesion-red");
  return s;
}

RgbaImage raycast(const ScalarVolume& scalar, const LabelVolume& labels, const Camera& camera,
                  const ClipBox& clip, const RenderSettings& settings) {
  camera.validate();
  clip.validate();
  settings.validate();
  if (!scalar.geometry().same_as(labels.geometry())) {
    throw InvalidArgument("scalar and label volumes are not co-registered");
  }
  RgbaImage img{settings.width, settings.height,
                std::vector<float>(static_cast<std::size_t>(settings.width) * settings.height * 4)};

  const Geometry& g = scalar.geometry();
  Scene s{};
  s.scalar = &scalar;
  s.labels = &labels;
  s.settings = &settings;
  s.n = {g.dims.nx, g.dims.ny, g.dims.nz};
  bool empty = clip.degenerate();
  for (int a = 0; a < 3; ++a) {
    s.origin[a] = g.origin[a];
    s.spacing[a] = g.spacing[a];
    s.box_lo[a] = -0.5 + clip.min[a] * s.n[a];
    s.box_hi[a] = -0.5 + clip.max[a] * s.n[a];
    s.clamp_lo[a] = std::max(0, static_cast<int>(std::ceil(s.box_lo[a])));
    s.clamp_hi[a] = std::min(s.n[a] - 1, static_cast<int>(std::floor(s.box_hi[a])));
    if (s.clamp_lo[a] > s.clamp_hi[a]) empty = true;
  }
  const double ref = std::min({g.spacing.x, g.spacing.y, g.spacing.z});
  s.step = settings.step_factor * ref;
  s.exponent = s.step / ref;
  s.outline = builtin_preset("outline");

  const Frame fr = camera_frame(camera);
  const V3 center{camera.center.x, camera.center.y, camera.center.z};
  const V3 eye = add(center, scale(fr.forward, -camera.distance));
  const double aspect = static_cast<double>(settings.width) / settings.height;
  const double half_tan = std::tan(radians(camera.fov_deg) / 2.0);

  auto render_row = [&](int py) {
    for (int px = 0; px < settings.width; ++px) {
      const double u = (px + 0.5) / settings.width - 0.5;
      const double v = 0.5 - (py + 0.5) / settings.height;
      V3 o, d;
      if (camera.projection == Projection::Orthographic) {
        const double h = camera.ortho_height, w = h * aspect;
        o = add(eye, add(scale(fr.right, u * w), scale(fr.up, v * h)));
        d = fr.forward;
      } else {
        o = eye;
        d = normalized(add(fr.forward, add(scale(fr.right, 2.0 * u * half_tan * aspect),
                                           scale(fr.up, 2.0 * v * half_tan))));
      }
      std::array<double, 4> px_rgba;
      if (empty) {
        const Rgba& bg = settings.background;
        px_rgba = {bg.r, bg.g, bg.b, bg.a};
      } else {
        px_rgba = trace(s, o, d);
      }
      float* out = img.rgba.data() + (static_cast<std::size_t>(py) * settings.width + px) * 4;
      for (int c = 0; c < 4; ++c) out[c] = static_cast<float>(px_rgba[c]);
    }
  };

  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 8);
  if (workers == 1 || settings.height < 2 * workers) {
    for (int y = 0; y < settings.height; ++y) render_row(y);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int y = w; y < settings.height; y += workers) render_row(y);
      });
    }
  }
  return img;
}

SliceImage to_slice_image(const RgbaImage& image) {
  SliceImage out;
  out.width = image.width;
  out.height = image.height;
  out.channels = 4;
  out.pixels.resize(image.rgba.size());
  for (std::size_t i = 0; i < image.rgba.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.rgba[i]), 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

Camera camera_from_json(const nlohmann::json& j, const Geometry& geometry) {
  Camera c = Camera::framing(geometry);
  try {
    if (j.contains("center")) {
      const auto& v = j.at("center");
      c.center = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
    }
    maybe(j, "azimuth", c.azimuth_deg);
    maybe(j, "elevation", c.elevation_deg);
    maybe(j, "distance", c.distance);
    maybe(j, "fov", c.fov_deg);
    maybe(j, "height", c.ortho_height);
    if (j.contains("projection")) {
      const auto p = j.at("projection").get<std::string>();
      if (p == "perspective") {
        c.projection = Projection::Perspective;
      } else if (p == "orthographic") {
        c.projection = Projection::Orthographic;
      } else {
        throw InvalidArgument("projection must be 'perspective' or 'orthographic'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed camera: ") + e.what());
  }
  c.validate();
  return c;
}

ClipBox clip_from_json(const nlohmann::json& j) {
  ClipBox b;
  try {
    const char* names[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
      if (!j.contains(names[a])) continue;
      const auto& r = j.at(names[a]);
      b.min[a] = r.at(0).get<double>();
      b.max[a] = r.at(1).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed clip box: ") + e.what());
  }
  b.validate();
  return b;
}

RenderSettings settings_from_json(const nlohmann::json& j,
                                  const std::map<std::string, TransferFunction>& presets) {
  RenderSettings s = RenderSettings::defaults();
  try {
    maybe(j, "width", s.width);
    maybe(j, "height", s.height);
    maybe(j, "step_factor", s.step_factor);
    maybe(j, "lung_outline", s.lung_outline);
    if (j.contains("background")) {
      const auto& b = j.at("background");
      s.background = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                      b.size() > 3 ? b.at(3).get<double>() : 1.0};
    }
    if (j.contains("labels")) {
      const char* names[3] = {"context", "lung", "lesion"};
      const auto& labels = j.at("labels");
      for (int l = 0; l < 3; ++l) {
        if (!labels.contains(names[l])) continue;
        const auto& lj = labels.at(names[l]);
        LabelStyle& st = s.labels[l];
        maybe(lj, "visible", st.visible);
        if (lj.contains("tf")) {
          const auto& tj = lj.at("tf");
          if (tj.is_string()) {
            const auto it = presets.find(tj.get<std::string>());
            if (it == presets.end()) {
              throw InvalidArgument("unknown transfer function preset '" +
                                    tj.get<std::string>() + "'");
            }
            st.tf = it->second;
          } else {
            st.tf = tf_from_json(tj);
          }
        }
        maybe(lj, "offset", st.tf.offset);
        maybe(lj, "opacity", st.tf.opacity_scale);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed render settings: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace ctview::render
