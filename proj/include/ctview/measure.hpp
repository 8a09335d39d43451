#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctview/volume.hpp"

namespace ctview::measure {

// Euclidean distance in mm between two voxel positions.
double linear_distance(const Vec3& p1, const Vec3& p2, const Vec3& spacing);

// Voxel count of `label` times the voxel volume, in mL. Throws
// InvalidArgument unless label is 1 or 2.
double region_volume(const LabelVolume& labels, std::uint8_t label);

enum class Denominator {
  LungAndLesion,  // lesion voxels are lung tissue
  LungOnly,       // may exceed 100 when lesions outweigh lung
};

struct LesionStats {
  double lung_ml = 0.0;    // label 1 only
  double lesion_ml = 0.0;  // label 2
  double percentage = 0.0;
};

// Throws EmptyRegionError when the denominator is zero.
LesionStats lesion_stats(const LabelVolume& labels,
                         Denominator denominator = Denominator::LungAndLesion);

enum class MeasurementKind { Linear, Volume };

struct MeasurementRecord {
  MeasurementKind kind = MeasurementKind::Linear;
  std::optional<Vec3> p1, p2;  // voxel coordinates, linear only
  double value = 0.0;          // mm or mL
  std::string label;           // e.g. "lung", "lesion", "caliper"
  std::string timestamp;       // ISO-8601 UTC

  void validate(const Geometry& geometry) const;
};

MeasurementRecord linear_record(const Geometry& geometry, const Vec3& p1, const Vec3& p2,
                                std::string label = "caliper");
MeasurementRecord volume_record(const LabelVolume& labels, std::uint8_t label);

std::string utc_timestamp();

nlohmann::json to_json(const MeasurementRecord& record);
nlohmann::json to_json(const std::vector<MeasurementRecord>& records);
nlohmann::json to_json(const LesionStats& stats);

}  // namespace ctview::measure
