#include "ctview/dataset.hpp"

#include <fstream>

#include "ctview/case.hpp"
#include "ctview/nifti.hpp"
#include "ctview/preprocess.hpp"
#include "ctview/segment.hpp"

namespace ctview {

namespace fs = std::filesystem;

void write_dataset(const fs::path& dir, const std::vector<mil::SyntheticCase>& cases) {
  fs::create_directories(dir);
  nlohmann::json index{{"cases", nlohmann::json::array()}};
  for (const auto& c : cases) {
    const fs::path case_dir = dir / c.id;
    fs::create_directories(case_dir);
    nifti::write_file(case_dir / "scalar.nii.gz", c.scalar);
    nifti::write_file(case_dir / "lung.nii.gz", c.lung_mask);
    nifti::write_file(case_dir / "lesion.nii.gz", c.lesion_mask);
    CaseManifest m;
    m.id = c.id;
    m.scalar = "scalar.nii.gz";
    m.lung_mask = fs::path("lung.nii.gz");
    m.lesion_mask = fs::path("lesion.nii.gz");
    m.metadata["label"] = std::to_string(c.label);
    m.metadata["source"] = "synthetic";
    std::ofstream(case_dir / "case.json") << to_json(m).dump(2) << '\n';
    index["cases"].push_back(
        {{"id", c.id}, {"manifest", (fs::path(c.id) / "case.json").string()}, {"label", c.label}});
  }
  std::ofstream out(dir / "dataset.json");
  if (!out) throw Error("cannot write " + (dir / "dataset.json").string());
  out << index.dump(2) << '\n';
}

std::vector<DatasetEntry> read_dataset_index(const fs::path& dir) {
  const fs::path path = dir / "dataset.json";
  std::ifstream in(path);
  if (!in) throw StageError("ingest", "cannot open dataset index " + path.string());
  std::vector<DatasetEntry> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& c : j.at("cases")) {
      DatasetEntry e;
      e.id = c.at("id").get<std::string>();
      e.manifest = dir / c.at("manifest").get<std::string>();
      e.label = c.at("label").get<int>();
      if (e.label != 0 && e.label != 1) throw StageError("ingest", "case labels must be 0 or 1");
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw StageError("ingest", "malformed dataset index " + path.string() + ": " + e.what());
  }
  return out;
}

std::vector<mil::LabeledBag> load_labeled_bags(const fs::path& dir, int side) {
  std::vector<mil::LabeledBag> out;
  for (const auto& e : read_dataset_index(dir)) {
    const LoadedCase c = load_case_volumes(read_manifest(e.manifest));
    const LabelVolume lung = c.lung_mask ? *c.lung_mask : seg::segment_lungs(c.scalar);
    const LabelVolume labels = merge_masks(lung, c.lesion_mask);
    out.push_back({e.id, prepare_classifier_input(c.scalar, labels, side).bag, e.label});
  }
  return out;
}

}  // namespace ctview
