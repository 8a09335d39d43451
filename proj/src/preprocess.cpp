#include "ctview/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "ctview/resample.hpp"

namespace ctview {

double normalize_hu(double hu) {
  const double clipped = std::clamp(hu, kClipLowHu, kClipHighHu);
  return (clipped - kClipLowHu) / (kClipHighHu - kClipLowHu);
}

ClassifierInput prepare_classifier_input(const ScalarVolume& vol, const LabelVolume& lungmask,
                                         int side) {
  if (!vol.geometry().same_as(lungmask.geometry())) {
    throw InvalidArgument("lung mask geometry does not match the scalar volume");
  }
  if (side < 1) throw InvalidArgument("bag side must be >= 1");

  const ScalarVolume scalar = resample_z(vol, 1.0);
  const LabelVolume labels = resample_z(lungmask, 1.0);
  const BoundingBox box = tissue_bounding_box(labels);

  ClassifierInput result;
  BagGeometry& bg = result.geometry;
  bg.source = vol.geometry();
  bg.z_spacing = 1.0;
  bg.crop = box;
  bg.side = side;
  const int w = box.x.extent();
  const int h = box.y.extent();
  bg.square = std::max(w, h);
  bg.pad_x = (bg.square - w) / 2;
  bg.pad_y = (bg.square - h) / 2;

  SliceStack& bag = result.bag;
  bag.depth = box.z.extent();
  bag.side = side;
  bag.values.resize(static_cast<std::size_t>(bag.depth) * bag.slice_size());

  std::vector<float> square(static_cast<std::size_t>(bg.square) * bg.square);
  for (int k = 0; k < bag.depth; ++k) {
    const int z = box.z.min + k;
    std::fill(square.begin(), square.end(), 0.0f);
    for (int y = box.y.min; y <= box.y.max; ++y) {
      float* row = square.data() + static_cast<std::size_t>(y - box.y.min + bg.pad_y) * bg.square;
      for (int x = box.x.min; x <= box.x.max; ++x) {
        const bool tissue = labels.at(x, y, z) != kContext;
        row[x - box.x.min + bg.pad_x] =
            tissue ? static_cast<float>(normalize_hu(scalar.at(x, y, z))) : 0.0f;
      }
    }
    resize_bilinear(square.data(), bg.square, bg.square, bag.slice(k), side, side);
  }
  return result;
}

ScalarVolume bag_to_volume(const SliceStack& maps, const BagGeometry& bg) {
  const Geometry& g = bg.source;
  if (maps.depth != bg.crop.z.extent() || maps.side != bg.side) {
    throw InvalidArgument("map stack does not match the bag geometry");
  }
  std::vector<float> out(g.dims.count(), 0.0f);
  const double scale = static_cast<double>(bg.side) / bg.square;
  for (int z = 0; z < g.dims.nz; ++z) {
    const double zr = z * g.spacing.z / bg.z_spacing;
    const int k = static_cast<int>(std::floor(zr + 0.5)) - bg.crop.z.min;
    if (k < 0 || k >= maps.depth) continue;
    const float* map = maps.slice(k);
    for (int y = bg.crop.y.min; y <= bg.crop.y.max; ++y) {
      const double v = std::clamp((y - bg.crop.y.min + bg.pad_y + 0.5) * scale - 0.5, 0.0,
                                  static_cast<double>(bg.side - 1));
      const int v0 = static_cast<int>(v);
      const int v1 = std::min(v0 + 1, bg.side - 1);
      const double fv = v - v0;
      for (int x = bg.crop.x.min; x <= bg.crop.x.max; ++x) {
        const double u = std::clamp((x - bg.crop.x.min + bg.pad_x + 0.5) * scale - 0.5, 0.0,
                                    static_cast<double>(bg.side - 1));
        const int u0 = static_cast<int>(u);
        const int u1 = std::min(u0 + 1, bg.side - 1);
        const double fu = u - u0;
        const double top = (1 - fu) * map[v0 * bg.side + u0] + fu * map[v0 * bg.side + u1];
        const double bot = (1 - fu) * map[v1 * bg.side + u0] + fu * map[v1 * bg.side + u1];
        out[g.index(x, y, z)] = static_cast<float>((1 - fv) * top + fv * bot);
      }
    }
  }
  return ScalarVolume(g, std::move(out));
}

}  // namespace ctview
