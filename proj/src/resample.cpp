#include "ctview/resample.hpp"

#include <algorithm>
#include <cmath>

namespace ctview {

int resampled_slice_count(int nz, double sz, double target_sz) {
  if (!(target_sz > 0.0) || !std::isfinite(target_sz)) {
    throw InvalidArgument("target z spacing must be positive");
  }
  const double extent = (nz - 1) * sz;
  return static_cast<int>(std::floor(extent / target_sz + 1e-9)) + 1;
}

namespace {

// Source slice position (in source index units) of output slice j.
double source_position(int j, double sz, double target_sz) {
  return j * (target_sz / sz);
}

Geometry resampled_geometry(const Geometry& g, double target_sz) {
  Geometry out = g;
  out.dims.nz = resampled_slice_count(g.dims.nz, g.spacing.z, target_sz);
  out.spacing.z = target_sz;
  return out;
}

}  // namespace

ScalarVolume resample_z(const ScalarVolume& vol, double target_sz) {
  const Geometry& g = vol.geometry();
  const Geometry og = resampled_geometry(g, target_sz);
  if (target_sz == g.spacing.z) return vol;

  const std::size_t plane = static_cast<std::size_t>(g.dims.nx) * g.dims.ny;
  std::vector<float> out(og.dims.count());
  const auto src = vol.data();
  for (int j = 0; j < og.dims.nz; ++j) {
    const double pos = source_position(j, g.spacing.z, target_sz);
    int i0 = std::min(static_cast<int>(std::floor(pos)), g.dims.nz - 1);
    const int i1 = std::min(i0 + 1, g.dims.nz - 1);
    const double f = (i0 == g.dims.nz - 1) ? 0.0 : pos - i0;
    const float* s0 = src.data() + i0 * plane;
    const float* s1 = src.data() + i1 * plane;
    float* dst = out.data() + j * plane;
    if (f == 0.0) {
      std::copy(s0, s0 + plane, dst);
      continue;
    }
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = static_cast<float>((1.0 - f) * s0[p] + f * s1[p]);
    }
  }
  return ScalarVolume(og, std::move(out));
}

LabelVolume resample_z(const LabelVolume& vol, double target_sz) {
  const Geometry& g = vol.geometry();
  const Geometry og = resampled_geometry(g, target_sz);
  if (target_sz == g.spacing.z) return vol;

  const std::size_t plane = static_cast<std::size_t>(g.dims.nx) * g.dims.ny;
  std::vector<std::uint8_t> out(og.dims.count());
  const auto src = vol.data();
  for (int j = 0; j < og.dims.nz; ++j) {
    const double pos = source_position(j, g.spacing.z, target_sz);
    const int i = std::clamp(static_cast<int>(std::floor(pos + 0.5)), 0, g.dims.nz - 1);
    std::copy(src.begin() + i * plane, src.begin() + (i + 1) * plane,
              out.begin() + j * plane);
  }
  return LabelVolume(og, std::move(out));
}

namespace {

template <typename T>
void resize_impl(const T* src, int sw, int sh, T* dst, int dw, int dh) {
  if (sw < 1 || sh < 1 || dw < 1 || dh < 1) throw InvalidArgument("resize dims must be >= 1");
  const double rx = static_cast<double>(sw) / dw;
  const double ry = static_cast<double>(sh) / dh;
  std::vector<int> x0(dw), x1(dw);
  std::vector<double> fx(dw);
  for (int x = 0; x < dw; ++x) {
    const double s = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(sw - 1));
    x0[x] = static_cast<int>(std::floor(s));
    x1[x] = std::min(x0[x] + 1, sw - 1);
    fx[x] = s - x0[x];
  }
  for (int y = 0; y < dh; ++y) {
    const double s = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(std::floor(s));
    const int y1 = std::min(y0 + 1, sh - 1);
    const double fy = s - y0;
    const T* r0 = src + static_cast<std::size_t>(y0) * sw;
    const T* r1 = src + static_cast<std::size_t>(y1) * sw;
    T* out = dst + static_cast<std::size_t>(y) * dw;
    for (int x = 0; x < dw; ++x) {
      const double top = (1.0 - fx[x]) * r0[x0[x]] + fx[x] * r0[x1[x]];
      const double bottom = (1.0 - fx[x]) * r1[x0[x]] + fx[x] * r1[x1[x]];
      out[x] = static_cast<T>((1.0 - fy) * top + fy * bottom);
    }
  }
}

}  // namespace

void resize_bilinear(const float* src, int sw, int sh, float* dst, int dw, int dh) {
  resize_impl(src, sw, sh, dst, dw, dh);
}

void resize_bilinear(const double* src, int sw, int sh, double* dst, int dw, int dh) {
  resize_impl(src, sw, sh, dst, dw, dh);
}

}  // namespace ctview
