#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctview/volume.hpp"

namespace ctview::mil {

struct PhantomConfig {
  Dims dims{64, 64, 10};
  Vec3 spacing{4.0, 4.0, 2.0};
  double body_hu = 40.0;
  double lung_hu = -850.0;
  double exterior_hu = -1000.0;
  double lesion_hu = -450.0;
  double lesion_hu_spread = 50.0;
  double lung_noise_sd = 20.0;
  double body_noise_sd = 10.0;
  int max_lesions = 4;
};

struct Lesion {
  Vec3 centre;  // voxel coordinates
  Vec3 radii;   // voxels
  double hu = 0.0;
};

// A chest phantom: an ellipsoidal +40 HU body holding two textured -850 HU
// lung ellipsoids on -1000 HU air. Positive cases add peripheral GGO-like
// blobs clipped to the lungs.
struct SyntheticCase {
  std::string id;
  int label = 0;
  ScalarVolume scalar;
  LabelVolume lung_mask;    // 1 on every lung voxel, lesions included
  LabelVolume lesion_mask;  // 2 on lesion voxels
  std::vector<Lesion> lesions;

  LabelVolume labels() const;  // lung 1, lesion 2
};

SyntheticCase generate_phantom(std::uint64_t seed, bool positive, const std::string& id,
                               const PhantomConfig& config = {});

// `round(n * positive_fraction)` positives, the rest negative, assigned to
// case indices by a seeded shuffle. Each case gets an independent seed.
std::vector<SyntheticCase> generate_synthetic_dataset(int n_cases, std::uint64_t seed,
                                                      double positive_fraction = 0.5,
                                                      const PhantomConfig& config = {});

}  // namespace ctview::mil
