#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctview::render {

struct Rgba {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double a = 0.0;
  friend bool operator==(const Rgba&, const Rgba&) = default;
};

struct ControlPoint {
  double hu = 0.0;
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double a = 0.0;
  friend bool operator==(const ControlPoint&, const ControlPoint&) = default;
};

// Piecewise-linear HU -> RGBA map. `offset` shifts the response along the
// HU axis and `opacity_scale` multiplies alpha.
struct TransferFunction {
  std::string name;
  std::vector<ControlPoint> points;
  double offset = 0.0;
  double opacity_scale = 1.0;

  // Throws InvalidArgument unless there is at least one point, the HU values
  // strictly increase and every channel lies in [0, 1].
  void validate() const;
  Rgba eval(double scalar) const;

  friend bool operator==(const TransferFunction&, const TransferFunction&) = default;
};

// {"name", "points": [[hu, r, g, b, a], ...], "offset"?, "opacity_scale"?}
TransferFunction tf_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TransferFunction& tf);

// lung-air, vessel, lesion-red, context-fat, outline.
const std::map<std::string, TransferFunction>& builtin_presets();
const TransferFunction& builtin_preset(const std::string& name);

TransferFunction load_preset_file(const std::filesystem::path& path);

// Built-ins overlaid with every *.json file in `dir` (files win on a name
// clash). Unreadable files are skipped and reported through `errors`.
std::map<std::string, TransferFunction> load_presets(const std::filesystem::path& dir,
                                                     std::vector<std::string>* errors = nullptr);

void save_preset_file(const TransferFunction& tf, const std::filesystem::path& path);

}  // namespace ctview::render
