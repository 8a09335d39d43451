#include "ctview/case.hpp"

#include <fstream>

#include "ctview/nifti.hpp"
#include "ctview/resample.hpp"

namespace ctview {

namespace fs = std::filesystem;

bool is_safe_case_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

CaseManifest parse_manifest(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw StageError("ingest", "manifest must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  CaseManifest m;
  if (!doc.contains("id") || !doc["id"].is_string()) {
    throw StageError("ingest", "manifest requires a string 'id'");
  }
  m.id = doc["id"].get<std::string>();
  if (!is_safe_case_id(m.id)) {
    throw StageError("ingest", "case id '" + m.id + "' is not filesystem-safe");
  }
  if (!doc.contains("scalar") || !doc["scalar"].is_string()) {
    throw StageError("ingest", "manifest requires a string 'scalar' path");
  }
  m.scalar = resolve(doc["scalar"].get<std::string>());
  for (const char* key : {"lung_mask", "lesion_mask"}) {
    if (!doc.contains(key) || doc[key].is_null()) continue;
    if (!doc[key].is_string()) throw StageError("ingest", std::string("'") + key + "' must be a path");
    (std::string(key) == "lung_mask" ? m.lung_mask : m.lesion_mask) =
        resolve(doc[key].get<std::string>());
  }
  if (doc.contains("metadata")) {
    if (!doc["metadata"].is_object()) throw StageError("ingest", "'metadata' must be an object");
    for (const auto& [k, v] : doc["metadata"].items()) {
      m.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return m;
}

CaseManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StageError("ingest", "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw StageError("ingest", "malformed manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

nlohmann::json to_json(const CaseManifest& m) {
  nlohmann::json doc{{"id", m.id}, {"scalar", m.scalar.string()}, {"metadata", m.metadata}};
  if (m.lung_mask) doc["lung_mask"] = m.lung_mask->string();
  if (m.lesion_mask) doc["lesion_mask"] = m.lesion_mask->string();
  return doc;
}

LabelVolume merge_masks(const LabelVolume& lung, const std::optional<LabelVolume>& lesion) {
  std::vector<std::uint8_t> out(lung.data().begin(), lung.data().end());
  for (auto& v : out) v = v != 0 ? kLung : kContext;
  if (lesion) {
    if (!lesion->geometry().same_as(lung.geometry())) {
      throw InvalidArgument("lesion mask geometry differs from lung mask");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if ((*lesion)[i] != 0) out[i] = kLesion;
    }
  }
  return LabelVolume(lung.geometry(), std::move(out));
}

namespace {

struct RawFile {
  std::vector<std::uint8_t> bytes;
  nifti::Volume volume;
};

RawFile read_volume(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw StageError("ingest", std::string(what) + " file not found: " + path.string());
  }
  try {
    RawFile f{read_binary_file(path), ScalarVolume{}};
    const std::string name = path.string();
    if (name.ends_with(".hdr") || name.ends_with(".hdr.gz")) {
      f.volume = nifti::read_file(path);
    } else {
      f.volume = nifti::parse(f.bytes);
    }
    return f;
  } catch (const Error& e) {
    throw StageError("ingest", std::string("cannot read ") + what + " " + path.string() + ": " +
                                   e.what());
  }
}

}  // namespace

LoadedCase load_case_volumes(const CaseManifest& manifest) {
  LoadedCase lc;
  lc.manifest = manifest;

  RawFile scalar = read_volume(manifest.scalar, "scalar");
  std::uint64_t hash = fnv1a64(scalar.bytes);
  lc.scalar = nifti::to_scalar(scalar.volume);

  if (manifest.lung_mask) {
    RawFile f = read_volume(*manifest.lung_mask, "lung mask");
    hash = fnv1a64(f.bytes, hash ^ 0x4c554e47ULL);
    lc.lung_mask = nifti::to_mask(f.volume, kLung);
  } else {
    lc.lung_fallback = true;
  }
  if (manifest.lesion_mask) {
    RawFile f = read_volume(*manifest.lesion_mask, "lesion mask");
    hash = fnv1a64(f.bytes, hash ^ 0x4c455349ULL);
    lc.lesion_mask = nifti::to_mask(f.volume, kLesion);
  } else {
    lc.lesion_fallback = true;
  }
  lc.input_hash = hash;

  const Geometry& g = lc.scalar.geometry();
  auto mismatched = [&](const std::optional<LabelVolume>& m) {
    return m && !m->geometry().same_as(g);
  };
  if (mismatched(lc.lung_mask) || mismatched(lc.lesion_mask)) {
    // Masks produced on a different z grid are accepted when they agree
    // after 1 mm resampling.
    ScalarVolume scalar1 = resample_z(lc.scalar, 1.0);
    auto move = [&](std::optional<LabelVolume>& m, const char* what) {
      if (!m) return;
      LabelVolume r = resample_z(*m, 1.0);
      if (!r.geometry().same_as(scalar1.geometry(), 1e-3)) {
        throw StageError("ingest", std::string(what) + " geometry does not match the scalar volume");
      }
      m = LabelVolume(scalar1.geometry(), std::vector<std::uint8_t>(r.data().begin(), r.data().end()));
    };
    move(lc.lung_mask, "lung mask");
    move(lc.lesion_mask, "lesion mask");
    lc.scalar = std::move(scalar1);
    lc.warnings.push_back("masks were co-registered on the 1 mm z grid");
  }
  return lc;
}

}  // namespace ctview
