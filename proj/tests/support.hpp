#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctview/mil/model.hpp"
#include "ctview/volume.hpp"

namespace testing {

// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ctview");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Writes scalar (+ optional masks) of a synthetic phantom and its case.json
// into `dir`. Returns the manifest path.
std::filesystem::path write_phantom_case(const std::filesystem::path& dir, const std::string& id,
                                         std::uint64_t seed, bool positive, bool with_masks);

// Writes a case whose scalar has no air at all, so fallback segmentation
// fails.
std::filesystem::path write_solid_case(const std::filesystem::path& dir, const std::string& id);

// Probability that a random positive outscores a random negative, ties
// counting one half. O(P N).
double pairwise_auc(std::span<const double> scores, std::span<const int> labels);

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t kinks = 0;       // entries whose one-sided differences disagree
  double worst_smooth = 0.0;   // worst relative error away from kinks
  double worst_kink = 0.0;     // worst error against the nearer one-sided slope
};

// Compares batch_gradient against central differences for every `stride`-th
// parameter, starting at `offset`, of a randomly initialised model on two
// random bags.
GradientCheck check_gradient(const ctview::mil::ModelConfig& config, std::uint64_t seed,
                             double lambda, std::size_t stride, std::size_t offset = 0,
                             double h = 1e-5);

// Minimal little-endian single-file writer laid out from the header table,
// kept separate from the library's writer. Spacing (1.25, 1.5, 3).
template <typename T>
std::vector<std::uint8_t> handmade(std::int16_t datatype, ctview::Dims d, const std::vector<T>& values,
                                   float slope = 1.0f, float inter = 0.0f, std::int16_t intent = 0) {
  std::vector<std::uint8_t> b(352, 0);
  auto put = [&](std::size_t off, auto v) { std::memcpy(b.data() + off, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny),
                               static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(40 + 2 * i, dim[i]);
  put(68, intent);
  put(70, datatype);
  put(72, static_cast<std::int16_t>(8 * sizeof(T)));
  const float pixdim[8] = {1, 1.25f, 1.5f, 3.0f, 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) put(76 + 4 * i, pixdim[i]);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  for (const T& v : values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    b.insert(b.end(), p, p + sizeof(T));
  }
  return b;
}

// Toy widths on a 16 x 16 input so a full sweep stays fast.
ctview::mil::ModelConfig small_input_config();

ctview::ScalarVolume constant_volume(ctview::Dims dims, float value, ctview::Vec3 spacing = {1, 1, 1});
ctview::LabelVolume constant_labels(ctview::Dims dims, std::uint8_t value,
                                    ctview::Vec3 spacing = {1, 1, 1});

}  // namespace testing
