#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctview/volume.hpp"

namespace ctview {

// One case per JSON document:
//   {"id": str, "scalar": path, "lung_mask": path?, "lesion_mask": path?,
//    "metadata": {str: str}}
// Relative paths resolve against the manifest's directory.
struct CaseManifest {
  std::string id;
  std::filesystem::path scalar;
  std::optional<std::filesystem::path> lung_mask;
  std::optional<std::filesystem::path> lesion_mask;
  std::map<std::string, std::string> metadata;
};

bool is_safe_case_id(const std::string& id);

// Throws StageError("ingest") on schema problems.
CaseManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
CaseManifest read_manifest(const std::filesystem::path& path);
nlohmann::json to_json(const CaseManifest& manifest);

// Volumes of a case as read from disk. Masks are co-registered with the
// scalar volume; when the raw geometries differ only by z spacing all three
// are moved onto the 1 mm grid.
struct LoadedCase {
  CaseManifest manifest;
  ScalarVolume scalar;
  std::optional<LabelVolume> lung_mask;    // label 1 where lung
  std::optional<LabelVolume> lesion_mask;  // label 2 where lesion
  bool lung_fallback = false;
  bool lesion_fallback = false;
  std::uint64_t input_hash = 0;  // FNV-1a over every input file's bytes
  std::vector<std::string> warnings;
};

// Throws StageError("ingest") for missing/unreadable files and geometry
// mismatches.
LoadedCase load_case_volumes(const CaseManifest& manifest);

// Lung and lesion masks merged into one label volume; lesion wins.
LabelVolume merge_masks(const LabelVolume& lung, const std::optional<LabelVolume>& lesion);

}  // namespace ctview
