#include "ctview/service.hpp"

#include <charconv>

#include <httplib.h>

#include "ctview/nifti.hpp"
#include "ctview/render/png.hpp"
#include "ctview/render/raycast.hpp"
#include "ctview/render/slice_tools.hpp"

namespace ctview::service {

namespace {

struct HttpError {
  int status;
  std::string error;
  std::string detail;
  std::string stage;
};

[[noreturn]] void fail(int status, std::string detail, std::string stage = {}) {
  static const std::map<int, std::string> names{{400, "bad request"},
                                                {404, "not found"},
                                                {405, "method not allowed"},
                                                {409, "conflict"},
                                                {422, "unprocessable"},
                                                {500, "internal error"}};
  const auto it = names.find(status);
  throw HttpError{status, it == names.end() ? "error" : it->second, std::move(detail),
                  std::move(stage)};
}

Response json_response(const nlohmann::json& j, int status = 200) {
  return {status, "application/json", j.dump(), {}};
}

Response error_response(const HttpError& e) {
  nlohmann::json j{{"error", e.error}, {"detail", e.detail}};
  if (!e.stage.empty()) j["stage"] = e.stage;
  return json_response(j, e.status);
}

Response png_response(const SliceImage& image) {
  const auto bytes = render::encode_png(image);
  return {200, "image/png", std::string(bytes.begin(), bytes.end()), {}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string::npos ? path.size() : j;
    if (end > i) parts.push_back(path.substr(i, end - i));
    i = end;
  }
  return parts;
}

const std::string* param(const Request& r, const std::string& name) {
  const auto it = r.query.find(name);
  return it == r.query.end() ? nullptr : &it->second;
}

double number_param(const Request& r, const std::string& name, double fallback) {
  const std::string* s = param(r, name);
  if (!s) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(*s, &used);
    if (used != s->size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(400, "query parameter '" + name + "' must be a number, got '" + *s + "'");
  }
}

int int_param(const Request& r, const std::string& name, int fallback) {
  const std::string* s = param(r, name);
  if (!s) return fallback;
  int v = 0;
  const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
  if (ec != std::errc() || p != s->data() + s->size()) {
    fail(400, "query parameter '" + name + "' must be an integer, got '" + *s + "'");
  }
  return v;
}

bool flag_param(const Request& r, const std::string& name) {
  const std::string* s = param(r, name);
  if (!s) return false;
  if (*s == "1" || *s == "true" || s->empty()) return true;
  if (*s == "0" || *s == "false") return false;
  fail(400, "query parameter '" + name + "' must be 0/1 or true/false");
}

nlohmann::json parse_body(const Request& r) {
  try {
    return nlohmann::json::parse(r.body);
  } catch (const nlohmann::json::exception& e) {
    fail(400, std::string("request body is not valid JSON: ") + e.what());
  }
}

Vec3 point_of(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_array() || j.at(name).size() != 3) {
    fail(400, std::string("'") + name + "' must be [x, y, z]");
  }
  const auto& a = j.at(name);
  for (const auto& v : a) {
    if (!v.is_number()) fail(400, std::string("'") + name + "' must hold numbers");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Axis axis_param(const Request& r) {
  const std::string* s = param(r, "axis");
  if (!s) return Axis::Axial;
  try {
    return parse_axis(*s);
  } catch (const std::exception& e) {
    fail(400, e.what());
  }
}

int slice_index(const Request& r, const Geometry& g, Axis axis) {
  const int n = g.dims[normal_dimension(axis)];
  const int index = int_param(r, "index", n / 2);
  if (index < 0 || index >= n) {
    fail(400, "index " + std::to_string(index) + " is outside [0, " + std::to_string(n - 1) +
                  "] for the " + std::string(axis_name(axis)) + " axis");
  }
  return index;
}

bool lung_region(std::uint8_t v) { return v != kContext; }

}  // namespace

Api::Api(ServiceConfig config)
    : config_(std::move(config)),
      cache_(config_.cache_dir.empty() ? nullptr
                                       : std::make_shared<DerivedCache>(config_.cache_dir)),
      pipeline_(config_.model, cache_, config_.pipeline) {
  presets_ = render::load_presets(config_.preset_dir, &startup_warnings_);
}

Response Api::handle(const Request& request) {
  try {
    Response r = route(request);
    const auto it = r.headers.find("ETag");
    if (it != r.headers.end()) {
      const auto inm = request.headers.find("if-none-match");
      if (inm != request.headers.end() && inm->second == it->second) {
        return {304, r.content_type, "", r.headers};
      }
    }
    return r;
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const StageError& e) {
    return error_response({400, "bad request", e.what(), e.stage()});
  } catch (const InvalidArgument& e) {
    return error_response({400, "bad request", e.what(), ""});
  } catch (const std::exception& e) {
    return error_response({500, "internal error", e.what(), ""});
  }
}

Response Api::route(const Request& request) {
  const auto parts = split_path(request.path);
  const std::string& m = request.method;
  if (parts.size() == 1 && parts[0] == "presets") {
    if (m == "GET") {
      std::shared_lock lock(presets_mutex_);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& [name, tf] : presets_) out.push_back(render::to_json(tf));
      return json_response(out);
    }
    if (m == "POST") {
      const render::TransferFunction tf = render::tf_from_json(parse_body(request));
      if (!is_safe_case_id(tf.name)) fail(400, "preset name must be a simple identifier");
      if (!config_.preset_dir.empty()) {
        std::filesystem::create_directories(config_.preset_dir);
        render::save_preset_file(tf, config_.preset_dir / (tf.name + ".json"));
      }
      std::unique_lock lock(presets_mutex_);
      presets_.insert_or_assign(tf.name, tf);
      ++presets_generation_;
      return json_response(render::to_json(tf));
    }
    fail(405, m + " is not supported on /presets");
  }
  if (parts.empty() || parts[0] != "cases") fail(404, "no route for " + request.path);
  if (parts.size() == 1) {
    if (m == "GET") return list_cases();
    if (m == "POST") return create_case(request);
    fail(405, m + " is not supported on /cases");
  }
  std::string rest;
  for (std::size_t i = 2; i < parts.size(); ++i) rest += (i > 2 ? "/" : "") + parts[i];
  return case_route(request, parts[1], rest);
}

Response Api::list_cases() {
  std::shared_lock lock(cases_mutex_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, entry] : cases_) out.push_back(entry->analysis.summary());
  return json_response(out);
}

Response Api::create_case(const Request& request) {
  const nlohmann::json body = parse_body(request);
  CaseManifest manifest;
  if (body.is_object() && body.contains("manifest") && body.at("manifest").is_string()) {
    manifest = read_manifest(body.at("manifest").get<std::string>());
  } else {
    manifest = parse_manifest(body, std::filesystem::current_path());
  }
  {
    std::shared_lock lock(cases_mutex_);
    if (cases_.count(manifest.id)) fail(409, "case '" + manifest.id + "' is already loaded");
  }
  auto entry = std::make_shared<CaseEntry>();
  entry->analysis = pipeline_.run(manifest);
  if (entry->analysis.labels) {
    entry->records.push_back(measure::volume_record(*entry->analysis.labels, kLung));
    entry->records.push_back(measure::volume_record(*entry->analysis.labels, kLesion));
  }
  {
    std::unique_lock lock(cases_mutex_);
    if (!cases_.emplace(manifest.id, entry).second) {
      fail(409, "case '" + manifest.id + "' is already loaded");
    }
  }
  const nlohmann::json summary = entry->analysis.summary();
  if (!entry->analysis.failures.empty()) {
    const StageFailure& f = entry->analysis.failures.front();
    nlohmann::json j{{"error", "pipeline failure"},
                     {"stage", f.stage},
                     {"detail", f.detail},
                     {"case", summary}};
    return json_response(j, 422);
  }
  return json_response(summary);
}

std::shared_ptr<Api::CaseEntry> Api::find(const std::string& id) {
  std::shared_lock lock(cases_mutex_);
  const auto it = cases_.find(id);
  if (it == cases_.end()) fail(404, "no case '" + id + "' is loaded");
  return it->second;
}

std::string Api::etag(const CaseEntry& entry, const Request& request) const {
  std::string key = request.method + "\n" + request.path + "\n";
  for (const auto& [k, v] : request.query) key += k + "=" + v + "&";
  key += "\n" + request.body + "\n";
  key += entry.analysis.classification ? entry.analysis.classification->model_version : "none";
  key += "\n" + std::to_string(presets_generation_.load());
  std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(key.data()), key.size()},
                            entry.analysis.input.input_hash);
  return "\"" + to_hex(h) + "\"";
}

Response Api::case_route(const Request& request, const std::string& id, const std::string& rest) {
  const std::string& m = request.method;
  if (rest.empty() && m == "DELETE") {
    std::unique_lock lock(cases_mutex_);
    if (cases_.erase(id) == 0) fail(404, "no case '" + id + "' is loaded");
    return json_response({{"deleted", id}});
  }
  const auto entry = find(id);
  const CaseAnalysis& c = entry->analysis;
  const Geometry& g = c.input.scalar.geometry();
  auto tagged = [&](Response r) {
    r.headers["ETag"] = etag(*entry, request);
    return r;
  };

  if (rest.empty() && m == "GET") return json_response(c.summary());

  if (rest == "slice" && m == "GET") {
    const Axis axis = axis_param(request);
    const int index = slice_index(request, g, axis);
    const double lo = number_param(request, "wl_lo", -1350.0);
    const double hi = number_param(request, "wl_hi", 150.0);
    if (!(lo < hi)) fail(400, "wl_lo must be below wl_hi");
    const WindowLevel wl(lo, hi);

    ScalarSlice plane;
    if (flag_param(request, "mip")) {
      if (!c.labels) fail(409, "MIP is restricted to the lungs and segmentation failed", "segment");
      const int slab = int_param(request, "slab", 5);
      if (slab < 0) fail(400, "slab must be non-negative");
      plane = render::mip_project(c.input.scalar, *c.labels, axis, index, slab);
    } else {
      plane = extract_slice(c.input.scalar, axis, index);
    }
    SliceImage base = apply_window_level(plane, wl);

    std::optional<render::HeatmapOverlay> heat;
    if (flag_param(request, "heatmap")) {
      if (!c.heatmap) {
        const StageFailure* f = c.failure("classify");
        fail(409, f ? f->detail : "no heatmap available", "classify");
      }
      render::HeatmapOverlay h;
      h.values = extract_slice(*c.heatmap, axis, index);
      h.alpha = number_param(request, "heatmap_alpha", 0.5);
      h.threshold = number_param(request, "heatmap_threshold", 0.0);
      if (const std::string* cm = param(request, "colormap")) h.colormap = render::parse_colormap(*cm);
      if (!(h.alpha >= 0.0 && h.alpha <= 1.0)) fail(400, "heatmap_alpha must lie in [0, 1]");
      heat = std::move(h);
    }
    std::vector<render::ContourLayer> layers;
    if (flag_param(request, "outlines") && c.labels) {
      const LabelSlice ls = extract_slice(*c.labels, axis, index);
      layers.push_back({render::mask_contours_if(ls, lung_region), render::kLungOutline});
      layers.push_back({render::mask_contours(ls, kLesion), render::kLesionOutline});
    }
    return tagged(png_response(render::compose_overlay(base, layers, heat)));
  }

  if (rest == "render" && m == "POST") {
    const nlohmann::json body = request.body.empty() ? nlohmann::json::object() : parse_body(request);
    render::RenderSettings settings;
    {
      std::shared_lock lock(presets_mutex_);
      settings = render::settings_from_json(body.value("settings", nlohmann::json::object()),
                                            presets_);
    }
    const render::Camera cam =
        render::camera_from_json(body.value("camera", nlohmann::json::object()), g);
    const render::ClipBox clip = render::clip_from_json(body.value("clip", nlohmann::json::object()));
    const LabelVolume labels =
        c.labels ? *c.labels : LabelVolume(g, std::vector<std::uint8_t>(g.dims.count(), 0));
    const auto img = render::raycast(c.input.scalar, labels, cam, clip, settings);
    return tagged(png_response(render::to_slice_image(img)));
  }

  if (rest == "transform" && m == "GET") {
    const Vec3 p{number_param(request, "x", 0.0), number_param(request, "y", 0.0),
                 number_param(request, "z", 0.0)};
    const std::string* dir = param(request, "dir");
    Vec3 out;
    if (!dir || *dir == "voxel2world") {
      out = voxel_to_world(g, p);
    } else if (*dir == "world2voxel") {
      out = world_to_voxel(g, p);
    } else {
      fail(400, "dir must be voxel2world or world2voxel");
    }
    return tagged(json_response({{"x", out.x}, {"y", out.y}, {"z", out.z}}));
  }

  if (rest == "classification" && m == "GET") {
    if (!c.classification) {
      const StageFailure* f = c.failure("classify");
      fail(409, f ? f->detail : "classification unavailable", "classify");
    }
    const Classification& cl = *c.classification;
    return tagged(json_response({{"p_neg", cl.p_negative},
                                 {"p_pos", cl.p_positive},
                                 {"attention", cl.attention},
                                 {"model_version", cl.model_version}}));
  }

  if (rest == "measurements" && m == "GET") {
    std::lock_guard lock(entry->records_mutex);
    return json_response({{"volumes", c.volumes ? measure::to_json(*c.volumes) : nlohmann::json()},
                          {"records", measure::to_json(entry->records)}});
  }

  if (rest == "measure/linear" && m == "POST") {
    const nlohmann::json body = parse_body(request);
    const Vec3 p1 = point_of(body, "p1"), p2 = point_of(body, "p2");
    const auto record = measure::linear_record(g, p1, p2, body.value("label", "caliper"));
    std::lock_guard lock(entry->records_mutex);
    entry->records.push_back(record);
    return json_response({{"mm", record.value}, {"record", measure::to_json(record)}});
  }

  if (rest == "heatmap/slice" && m == "GET") {
    if (!c.heatmap) {
      const StageFailure* f = c.failure("classify");
      fail(409, f ? f->detail : "no heatmap available", "classify");
    }
    const Axis axis = axis_param(request);
    const int index = slice_index(request, g, axis);
    const double threshold = number_param(request, "threshold", 0.0);
    render::Colormap cmap = render::Colormap::BlueRed;
    if (const std::string* cm = param(request, "colormap")) cmap = render::parse_colormap(*cm);
    const ScalarSlice hs = extract_slice(*c.heatmap, axis, index);
    SliceImage img;
    img.width = hs.width;
    img.height = hs.height;
    img.channels = 4;
    img.axis = axis;
    img.index = index;
    img.pixels.resize(hs.values.size() * 4);
    for (std::size_t i = 0; i < hs.values.size(); ++i) {
      const double v = hs.values[i];
      const auto col = render::colormap_color(cmap, v);
      const bool shown = v > threshold;
      img.pixels[i * 4 + 0] = col[0];
      img.pixels[i * 4 + 1] = col[1];
      img.pixels[i * 4 + 2] = col[2];
      img.pixels[i * 4 + 3] = shown ? 255 : 0;
    }
    return tagged(png_response(img));
  }

  fail(404, "no route for " + m + " " + request.path);
}

void serve(Api& api, const std::string& host, int port) {
  httplib::Server server;
  auto adapt = [&api](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    r.body = req.body;
    for (const auto& [k, v] : req.headers) {
      std::string lower = k;
      for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      r.headers[lower] = v;
    }
    const Response out = api.handle(r);
    res.status = out.status;
    for (const auto& [k, v] : out.headers) res.set_header(k, v);
    if (out.status != 304) res.set_content(out.body, out.content_type);
  };
  server.Get(".*", adapt);
  server.Post(".*", adapt);
  server.Delete(".*", adapt);
  if (!server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace ctview::service
