#include "ctview/render/slice_tools.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ctview/error.hpp"

namespace ctview::render {

ScalarSlice mip_project(const ScalarVolume& scalar, const LabelVolume& mask, Axis axis,
                        int center, int half_width) {
  if (!scalar.geometry().same_as(mask.geometry())) {
    throw InvalidArgument("MIP volume and mask are not co-registered");
  }
  if (half_width < 0) throw InvalidArgument("MIP half width must be non-negative");
  const int n = scalar.dims()[normal_dimension(axis)];
  const int lo = std::max(0, center - half_width);
  const int hi = std::min(n - 1, center + half_width);
  if (lo > hi) {
    throw InvalidArgument("MIP slab [" + std::to_string(center - half_width) + ", " +
                          std::to_string(center + half_width) + "] lies outside the volume");
  }
  ScalarSlice out = extract_slice(scalar, axis, lo);
  const float floor_value = scalar.min_value();
  std::vector<bool> hit(out.values.size(), false);
  for (int k = lo; k <= hi; ++k) {
    const ScalarSlice s = extract_slice(scalar, axis, k);
    const LabelSlice m = extract_slice(mask, axis, k);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (m.values[i] == 0) continue;
      if (!hit[i] || s.values[i] > out.values[i]) out.values[i] = s.values[i];
      hit[i] = true;
    }
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!hit[i]) out.values[i] = floor_value;
  }
  return out;
}

namespace {

using Key = std::int64_t;

// Doubled coordinates are integers for every marching-squares vertex.
Key key_of(const Point2& p) {
  const std::int64_t x = std::lround(2.0 * p.x) + 4;
  const std::int64_t y = std::lround(2.0 * p.y) + 4;
  return (y << 32) | x;
}

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

template <typename Inside>
std::vector<Polyline> trace_contours(const LabelSlice& slice, Inside inside) {
  const int w = slice.width, h = slice.height;
  auto fg = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && inside(slice.at(x, y));
  };
  struct Segment {
    Point2 a, b;
  };
  std::vector<Segment> segments;
  // Cell (x, y) spans pixel centres (x, y) .. (x + 1, y + 1).
  for (int y = -1; y < h; ++y) {
    for (int x = -1; x < w; ++x) {
      const bool c[4] = {fg(x, y), fg(x + 1, y), fg(x + 1, y + 1), fg(x, y + 1)};
      const Point2 corner[4] = {{double(x), double(y)},
                                {double(x + 1), double(y)},
                                {double(x + 1), double(y + 1)},
                                {double(x), double(y + 1)}};
      // Edge e joins corners e and e + 1.
      const Point2 mid[4] = {{x + 0.5, double(y)},
                             {double(x + 1), y + 0.5},
                             {x + 0.5, double(y + 1)},
                             {double(x), y + 0.5}};
      const int count = c[0] + c[1] + c[2] + c[3];
      if (count == 0 || count == 4) continue;
      auto emit = [&](int e0, int e1, int fg_corner) {
        Segment s{mid[e0], mid[e1]};
        if (cross(s.a, s.b, corner[fg_corner]) < 0) std::swap(s.a, s.b);
        segments.push_back(s);
      };
      const bool saddle = count == 2 && c[0] == c[2];
      if (saddle) {
        // Cut each foreground corner off on its own.
        for (int k = 0; k < 4; ++k) {
          if (c[k]) emit((k + 3) % 4, k, k);
        }
        continue;
      }
      int crossing[2], m = 0, any_fg = 0;
      for (int e = 0; e < 4; ++e) {
        if (c[e] != c[(e + 1) % 4]) crossing[m++] = e;
        if (c[e]) any_fg = e;
      }
      emit(crossing[0], crossing[1], any_fg);
    }
  }

  std::unordered_map<Key, std::size_t> by_start;
  by_start.reserve(segments.size() * 2);
  for (std::size_t i = 0; i < segments.size(); ++i) by_start.emplace(key_of(segments[i].a), i);

  std::vector<bool> used(segments.size(), false);
  std::vector<Polyline> loops;
  for (std::size_t first = 0; first < segments.size(); ++first) {
    if (used[first]) continue;
    Polyline loop;
    std::size_t cur = first;
    while (!used[cur]) {
      used[cur] = true;
      loop.push_back(segments[cur].a);
      const auto it = by_start.find(key_of(segments[cur].b));
      if (it == by_start.end()) break;
      cur = it->second;
    }
    // Drop collinear vertices.
    bool changed = true;
    while (changed && loop.size() > 3) {
      changed = false;
      for (std::size_t i = 0; i < loop.size() && loop.size() > 3; ++i) {
        const Point2& prev = loop[(i + loop.size() - 1) % loop.size()];
        const Point2& next = loop[(i + 1) % loop.size()];
        if (cross(prev, loop[i], next) == 0.0) {
          loop.erase(loop.begin() + static_cast<std::ptrdiff_t>(i));
          changed = true;
          --i;
        }
      }
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

}  // namespace

std::vector<Polyline> mask_contours(const LabelSlice& slice, std::uint8_t label) {
  return trace_contours(slice, [label](std::uint8_t v) { return v == label; });
}

std::vector<Polyline> mask_contours_if(const LabelSlice& slice, bool (*inside)(std::uint8_t)) {
  return trace_contours(slice, inside);
}

double signed_area(const Polyline& loop) {
  double s = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Point2& a = loop[i];
    const Point2& b = loop[(i + 1) % loop.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return s / 2.0;
}

Colormap parse_colormap(const std::string& name) {
  if (name == "blue-red") return Colormap::BlueRed;
  if (name == "gray") return Colormap::Gray;
  throw InvalidArgument("unknown colormap '" + name + "' (expected blue-red or gray)");
}

std::array<std::uint8_t, 3> colormap_color(Colormap map, double value) {
  const double t = std::clamp(value, 0.0, 1.0);
  const auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
  switch (map) {
    case Colormap::Gray:
      return {q(t), q(t), q(t)};
    case Colormap::BlueRed:
    default:
      return {q(t), 0, q(1.0 - t)};
  }
}

SliceImage compose_overlay(const SliceImage& base, const std::vector<ContourLayer>& contours,
                           const std::optional<HeatmapOverlay>& heatmap) {
  base.validate();
  SliceImage out = base;
  out.channels = 4;
  const std::size_t n = static_cast<std::size_t>(base.width) * base.height;
  out.pixels.assign(n * 4, 255);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      out.pixels[i * 4 + c] = base.channels == 1 ? base.pixels[i] : base.pixels[i * 4 + c];
    }
    if (base.channels == 4) out.pixels[i * 4 + 3] = base.pixels[i * 4 + 3];
  }

  if (heatmap) {
    const auto& hm = *heatmap;
    if (hm.values.width != base.width || hm.values.height != base.height) {
      throw InvalidArgument("heatmap is " + std::to_string(hm.values.width) + "x" +
                            std::to_string(hm.values.height) + " but the slice is " +
                            std::to_string(base.width) + "x" + std::to_string(base.height));
    }
    if (!(hm.alpha >= 0.0 && hm.alpha <= 1.0)) {
      throw InvalidArgument("heatmap alpha must lie in [0, 1]");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = hm.values.values[i];
      if (!(v > hm.threshold)) continue;
      const auto col = colormap_color(hm.colormap, v);
      for (int c = 0; c < 3; ++c) {
        const double b = out.pixels[i * 4 + c];
        out.pixels[i * 4 + c] =
            static_cast<std::uint8_t>(std::lround((1.0 - hm.alpha) * b + hm.alpha * col[c]));
      }
    }
  }

  for (const auto& layer : contours) {
    for (const auto& loop : layer.loops) {
      for (std::size_t i = 0; i < loop.size(); ++i) {
        const Point2& a = loop[i];
        const Point2& b = loop[(i + 1) % loop.size()];
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len = std::hypot(dx, dy);
        if (len == 0.0) continue;
        // Nudge toward the region so the stroke lands on its edge pixels.
        const double ox = -dy / len * 0.25, oy = dx / len * 0.25;
        const int steps = static_cast<int>(std::ceil(len / 0.25));
        for (int s = 0; s <= steps; ++s) {
          const double t = static_cast<double>(s) / steps;
          const int px = static_cast<int>(std::floor(a.x + t * dx + ox + 0.5));
          const int py = static_cast<int>(std::floor(a.y + t * dy + oy + 0.5));
          if (px < 0 || py < 0 || px >= base.width || py >= base.height) continue;
          std::uint8_t* p = &out.pixels[(static_cast<std::size_t>(py) * base.width + px) * 4];
          p[0] = layer.color[0];
          p[1] = layer.color[1];
          p[2] = layer.color[2];
          p[3] = 255;
        }
      }
    }
  }
  return out;
}

}  // namespace ctview::render
