#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctview/pipeline.hpp"
#include "ctview/render/transfer.hpp"

namespace ctview::service {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ServiceConfig {
  std::filesystem::path cache_dir;   // empty: no derived-result cache
  std::filesystem::path preset_dir;  // scanned at startup; POST /presets writes here
  std::shared_ptr<const mil::MilModel> model;
  PipelineOptions pipeline;
};

// The HTTP API minus the transport. Routes:
//   GET    /cases                         POST /cases   {manifest JSON | {"manifest": path}}
//   GET    /cases/{id}                    DELETE /cases/{id}
//   GET    /cases/{id}/slice?axis&index&wl_lo&wl_hi&outlines&heatmap&mip&slab
//          [&heatmap_alpha&heatmap_threshold&colormap]
//   POST   /cases/{id}/render            {settings, camera, clip}
//   GET    /cases/{id}/transform?x&y&z&dir=voxel2world|world2voxel
//   GET    /cases/{id}/classification
//   GET    /cases/{id}/measurements
//   POST   /cases/{id}/measure/linear    {p1: [x, y, z], p2: [x, y, z]}
//   GET    /cases/{id}/heatmap/slice?axis&index[&threshold&colormap]
//   GET    /presets                       POST /presets  {name, points}
// Errors are JSON {error, stage?, detail}.
class Api {
 public:
  explicit Api(ServiceConfig config);

  Response handle(const Request& request);

  const CasePipeline& pipeline() const { return pipeline_; }
  std::vector<std::string> startup_warnings() const { return startup_warnings_; }

 private:
  struct CaseEntry {
    CaseAnalysis analysis;
    std::mutex records_mutex;
    std::vector<measure::MeasurementRecord> records;  // volumes first, then linear
  };

  Response route(const Request& request);
  Response create_case(const Request& request);
  Response list_cases();
  Response case_route(const Request& request, const std::string& id, const std::string& rest);

  std::shared_ptr<CaseEntry> find(const std::string& id);
  std::string etag(const CaseEntry& entry, const Request& request) const;

  ServiceConfig config_;
  std::shared_ptr<DerivedCache> cache_;
  CasePipeline pipeline_;
  std::vector<std::string> startup_warnings_;

  std::shared_mutex cases_mutex_;
  std::map<std::string, std::shared_ptr<CaseEntry>> cases_;

  std::shared_mutex presets_mutex_;
  std::map<std::string, render::TransferFunction> presets_;
  std::atomic<long> presets_generation_{0};  // part of every ETag
};

// Blocks serving `api` over HTTP/1.1 until the process is stopped.
// Throws Error when the address cannot be bound.
void serve(Api& api, const std::string& host, int port);

}  // namespace ctview::service
