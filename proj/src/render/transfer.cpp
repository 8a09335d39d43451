#include "ctview/render/transfer.hpp"

#include <algorithm>
#include <fstream>

#include "ctview/error.hpp"

namespace ctview::render {

void TransferFunction::validate() const {
  if (points.empty()) throw InvalidArgument("transfer function '" + name + "' has no points");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!unit(p.r) || !unit(p.g) || !unit(p.b) || !unit(p.a)) {
      throw InvalidArgument("transfer function '" + name + "' has a channel outside [0, 1]");
    }
    if (i > 0 && !(p.hu > points[i - 1].hu)) {
      throw InvalidArgument("transfer function '" + name + "' control points must strictly increase");
    }
  }
  if (!unit(opacity_scale)) throw InvalidArgument("opacity scale must lie in [0, 1]");
  if (!std::isfinite(offset)) throw InvalidArgument("transfer function offset must be finite");
}

Rgba TransferFunction::eval(double scalar) const {
  const double x = scalar - offset;
  Rgba out;
  const auto hi = std::upper_bound(points.begin(), points.end(), x,
                                   [](double v, const ControlPoint& p) { return v < p.hu; });
  if (hi == points.begin()) {
    out = {points.front().r, points.front().g, points.front().b, points.front().a};
  } else if (hi == points.end()) {
    out = {points.back().r, points.back().g, points.back().b, points.back().a};
  } else {
    const ControlPoint& p0 = *(hi - 1);
    const ControlPoint& p1 = *hi;
    const double t = (x - p0.hu) / (p1.hu - p0.hu);
    out = {p0.r + t * (p1.r - p0.r), p0.g + t * (p1.g - p0.g), p0.b + t * (p1.b - p0.b),
           p0.a + t * (p1.a - p0.a)};
  }
  out.a *= opacity_scale;
  return out;
}

TransferFunction tf_from_json(const nlohmann::json& j) {
  TransferFunction tf;
  try {
    tf.name = j.value("name", std::string{});
    for (const auto& row : j.at("points")) {
      if (!row.is_array() || row.size() != 5) {
        throw InvalidArgument("transfer function points must be [hu, r, g, b, a]");
      }
      tf.points.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                           row[3].get<double>(), row[4].get<double>()});
    }
    tf.offset = j.value("offset", 0.0);
    tf.opacity_scale = j.value("opacity_scale", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed transfer function: ") + e.what());
  }
  tf.validate();
  return tf;
}

nlohmann::json to_json(const TransferFunction& tf) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : tf.points) points.push_back({p.hu, p.r, p.g, p.b, p.a});
  nlohmann::json j{{"name", tf.name}, {"points", points}};
  if (tf.offset != 0.0) j["offset"] = tf.offset;
  if (tf.opacity_scale != 1.0) j["opacity_scale"] = tf.opacity_scale;
  return j;
}

const std::map<std::string, TransferFunction>& builtin_presets() {
  static const std::map<std::string, TransferFunction> presets = [] {
    std::map<std::string, TransferFunction> m;
    auto add = [&](std::string name, std::vector<ControlPoint> pts) {
      TransferFunction tf{name, std::move(pts)};
      tf.validate();
      m.emplace(std::move(name), std::move(tf));
    };
    add("lung-air", {{-1000, 0.55, 0.65, 0.85, 0.0},
                     {-900, 0.60, 0.70, 0.90, 0.01},
                     {-700, 0.75, 0.80, 0.95, 0.04},
                     {-400, 0.90, 0.90, 1.00, 0.0}});
    add("vessel", {{-300, 0.70, 0.15, 0.15, 0.0},
                   {0, 0.85, 0.25, 0.25, 0.25},
                   {200, 1.00, 0.75, 0.70, 0.80}});
    add("lesion-red", {{-850, 1.00, 0.00, 0.00, 0.0},
                       {-650, 1.00, 0.10, 0.05, 0.30},
                       {0, 1.00, 0.25, 0.10, 0.85}});
    add("context-fat", {{-300, 0.85, 0.70, 0.55, 0.0},
                        {-100, 0.90, 0.78, 0.60, 0.03},
                        {100, 0.95, 0.85, 0.75, 0.06},
                        {1000, 1.00, 1.00, 1.00, 0.60}});
    add("outline", {{-1024, 1.0, 1.0, 1.0, 0.03}, {3071, 1.0, 1.0, 1.0, 0.03}});
    return m;
  }();
  return presets;
}

const TransferFunction& builtin_preset(const std::string& name) {
  const auto& m = builtin_presets();
  const auto it = m.find(name);
  if (it == m.end()) throw InvalidArgument("unknown transfer function preset '" + name + "'");
  return it->second;
}

TransferFunction load_preset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open preset " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  TransferFunction tf = tf_from_json(j);
  if (tf.name.empty()) tf.name = path.stem().string();
  return tf;
}

std::map<std::string, TransferFunction> load_presets(const std::filesystem::path& dir,
                                                     std::vector<std::string>* errors) {
  auto out = builtin_presets();
  std::error_code ec;
  if (dir.empty() || !std::filesystem::is_directory(dir, ec)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      TransferFunction tf = load_preset_file(f);
      out.insert_or_assign(tf.name, std::move(tf));
    } catch (const std::exception& e) {
      if (errors) errors->push_back(e.what());
    }
  }
  return out;
}

void save_preset_file(const TransferFunction& tf, const std::filesystem::path& path) {
  tf.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write preset " + path.string());
  out << to_json(tf).dump(2) << '\n';
}

}  // namespace ctview::render
