#include "ctview/measure.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

#include "ctview/error.hpp"

namespace ctview::measure {

double linear_distance(const Vec3& p1, const Vec3& p2, const Vec3& spacing) {
  const double dx = (p1.x - p2.x) * spacing.x;
  const double dy = (p1.y - p2.y) * spacing.y;
  const double dz = (p1.z - p2.z) * spacing.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double region_volume(const LabelVolume& labels, std::uint8_t label) {
  if (label != kLung && label != kLesion) {
    throw InvalidArgument("volume is measured for label 1 (lung) or 2 (lesion), got " +
                          std::to_string(label));
  }
  return static_cast<double>(labels.count(label)) * labels.geometry().voxel_volume_mm3() / 1000.0;
}

LesionStats lesion_stats(const LabelVolume& labels, Denominator denominator) {
  LesionStats s;
  s.lung_ml = region_volume(labels, kLung);
  s.lesion_ml = region_volume(labels, kLesion);
  const double denom =
      denominator == Denominator::LungAndLesion ? s.lung_ml + s.lesion_ml : s.lung_ml;
  if (!(denom > 0.0)) throw EmptyRegionError("no lung tissue to take a lesion percentage of");
  s.percentage = 100.0 * s.lesion_ml / denom;
  return s;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void MeasurementRecord::validate(const Geometry& geometry) const {
  if (!(value >= 0.0)) throw InvalidArgument("measurement value must be non-negative");
  if (kind != MeasurementKind::Linear) return;
  if (!p1 || !p2) throw InvalidArgument("linear measurement needs two endpoints");
  for (const Vec3* p : {&*p1, &*p2}) {
    for (int a = 0; a < 3; ++a) {
      if (!((*p)[a] >= 0.0 && (*p)[a] <= geometry.dims[a] - 1)) {
        throw InvalidArgument("measurement endpoint lies outside the volume");
      }
    }
  }
}

MeasurementRecord linear_record(const Geometry& geometry, const Vec3& p1, const Vec3& p2,
                                std::string label) {
  MeasurementRecord r;
  r.kind = MeasurementKind::Linear;
  r.p1 = p1;
  r.p2 = p2;
  r.label = std::move(label);
  r.value = linear_distance(p1, p2, geometry.spacing);
  r.timestamp = utc_timestamp();
  r.validate(geometry);
  return r;
}

MeasurementRecord volume_record(const LabelVolume& labels, std::uint8_t label) {
  MeasurementRecord r;
  r.kind = MeasurementKind::Volume;
  r.label = label == kLung ? "lung" : "lesion";
  r.value = region_volume(labels, label);
  r.timestamp = utc_timestamp();
  return r;
}

nlohmann::json to_json(const MeasurementRecord& r) {
  nlohmann::json j{{"kind", r.kind == MeasurementKind::Linear ? "linear" : "volume"},
                   {"value", r.value},
                   {"unit", r.kind == MeasurementKind::Linear ? "mm" : "mL"},
                   {"label", r.label},
                   {"timestamp", r.timestamp}};
  if (r.p1) j["p1"] = {r.p1->x, r.p1->y, r.p1->z};
  if (r.p2) j["p2"] = {r.p2->x, r.p2->y, r.p2->z};
  return j;
}

nlohmann::json to_json(const std::vector<MeasurementRecord>& records) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) out.push_back(to_json(r));
  return out;
}

nlohmann::json to_json(const LesionStats& s) {
  return {{"lung_ml", s.lung_ml}, {"lesion_ml", s.lesion_ml}, {"pct", s.percentage}};
}

}  // namespace ctview::measure
