#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctview/mil/synthetic.hpp"
#include "ctview/mil/train.hpp"

namespace ctview {

// Dataset directory layout:
//   <dir>/dataset.json             {"cases": [{"id", "manifest", "label"}]}
//   <dir>/<id>/case.json           case manifest, metadata.label = "0" | "1"
//   <dir>/<id>/scalar.nii.gz, lung.nii.gz, lesion.nii.gz
void write_dataset(const std::filesystem::path& dir, const std::vector<mil::SyntheticCase>& cases);

struct DatasetEntry {
  std::string id;
  std::filesystem::path manifest;
  int label = 0;
};

// Throws StageError("ingest") for a missing or malformed index.
std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& dir);

// Loads every case and cuts its classifier bag. Cases without a lung mask
// fall back to automatic segmentation.
std::vector<mil::LabeledBag> load_labeled_bags(const std::filesystem::path& dir, int side);

}  // namespace ctview
