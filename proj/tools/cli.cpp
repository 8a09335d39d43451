#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctview/dataset.hpp"
#include "ctview/measure.hpp"
#include "ctview/mil/checkpoint.hpp"
#include "ctview/mil/evaluate.hpp"
#include "ctview/mil/predict.hpp"
#include "ctview/nifti.hpp"
#include "ctview/pipeline.hpp"
#include "ctview/render/png.hpp"
#include "ctview/render/raycast.hpp"
#include "ctview/render/slice_tools.hpp"
#include "ctview/service.hpp"

namespace ctview::cli {

namespace fs = std::filesystem;

namespace {

Vec3 parse_point(const std::string& s) {
  Vec3 p;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw InvalidArgument("point must be x,y,z, got '" + s + "'");
  }
  return p;
}

nlohmann::json read_json(const fs::path& path, const std::string& stage) {
  std::ifstream in(path);
  if (!in) throw StageError(stage, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw StageError(stage, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

LabelVolume case_labels(const LoadedCase& c, const seg::SegmenterConfig& cfg) {
  const LabelVolume lung = c.lung_mask ? *c.lung_mask : seg::segment_lungs(c.scalar, cfg);
  if (c.lesion_mask) return merge_masks(lung, c.lesion_mask);
  return seg::localize_lesions(c.scalar, lung, cfg);
}

mil::ModelConfig model_config(const std::string& backbone) {
  mil::ModelConfig mc;
  if (backbone == "toy") {
    mc.extractor = mil::ExtractorConfig::toy();
  } else if (backbone == "resnet-scale") {
    mc.extractor = mil::ExtractorConfig::resnet_scale();
  } else {
    throw InvalidArgument("backbone must be toy or resnet-scale");
  }
  return mc;
}

struct TrainFlags {
  std::string preset = "toy";
  std::string backbone = "toy";
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool no_augment = false;
  std::string aggregation = "mean";

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "Training preset: toy or pretrained")
        ->check(CLI::IsMember({"toy", "pretrained"}));
    app->add_option("--backbone", backbone, "Feature extractor: toy or resnet-scale")
        ->check(CLI::IsMember({"toy", "resnet-scale"}));
    app->add_option("--epochs", epochs, "Override the preset's epoch count");
    app->add_option("--lr", lr, "Override the preset's learning rate");
    app->add_option("--batch", batch, "Override the preset's batch size");
    app->add_option("--lambda", lambda, "Weight of the attention smoothness penalty");
    app->add_option("--seed", seed, "Random seed");
    app->add_flag("--no-augment", no_augment, "Disable rotation/flip augmentation");
    app->add_option("--aggregation", aggregation,
                    "Smoothness penalty over a batch: mean of per-bag sums, or sum")
        ->check(CLI::IsMember({"mean", "sum"}));
  }

  mil::TrainConfig config() const {
    mil::TrainConfig tc = mil::TrainConfig::preset(preset);
    if (epochs) tc.epochs = *epochs;
    if (lr) tc.learning_rate = *lr;
    if (batch) tc.batch_size = *batch;
    tc.lambda = lambda;
    tc.seed = seed;
    tc.augment = !no_augment;
    tc.aggregation = aggregation == "sum" ? mil::AwAggregation::SumOverBatch
                                          : mil::AwAggregation::MeanOfBagSums;
    tc.validate();
    return tc;
  }
};

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chest-CT analysis workbench", "ctview"};
  app.require_subcommand(1);
  std::string stage = "cli";

  // ingest
  std::string case_path, out_path;
  auto* ingest = app.add_subcommand("ingest", "Validate a case and write normalized NIfTI volumes");
  ingest->add_option("--case", case_path, "Case manifest")->required();
  ingest->add_option("--out", out_path, "Output directory");

  // segment
  seg::SegmenterConfig seg_cfg;
  auto* segment = app.add_subcommand("segment", "Fallback lung and lesion masks from HU thresholds");
  segment->add_option("--case", case_path, "Case manifest")->required();
  segment->add_option("--out", out_path, "Label volume to write (.nii or .nii.gz)")->required();
  segment->add_option("--air-threshold", seg_cfg.air_threshold_hu, "Lung candidate threshold (HU)");
  segment->add_option("--lesion-lo", seg_cfg.lesion_band_lo_hu, "Lesion band lower bound (HU)");
  segment->add_option("--lesion-hi", seg_cfg.lesion_band_hi_hu, "Lesion band upper bound (HU)");
  segment->add_option("--min-size", seg_cfg.min_component_voxels, "Smallest kept component (voxels)");

  // classify
  std::string model_path, cache_dir, heatmap_path;
  auto* classify = app.add_subcommand("classify", "Classify one case and print JSON");
  classify->add_option("--case", case_path, "Case manifest")->required();
  classify->add_option("--model", model_path, "Model checkpoint");
  classify->add_option("--cache-dir", cache_dir, "Derived-result cache");
  classify->add_option("--heatmap", heatmap_path, "Write the Grad-CAM volume here");

  // render
  std::string scene_path;
  auto* render_cmd = app.add_subcommand("render", "Raycast a scene to PNG");
  render_cmd->add_option("--scene", scene_path,
                         "Scene JSON {case, settings?, camera?, clip?}")->required();
  render_cmd->add_option("--out", out_path, "PNG path (default: <scene>.png)");

  // mip
  std::string axis_name_arg = "axial";
  int index = -1, slab = 5;
  double wl_lo = -1350.0, wl_hi = 150.0;
  auto* mip = app.add_subcommand("mip", "Lung-restricted maximum intensity projection to PNG");
  mip->add_option("--case", case_path, "Case manifest")->required();
  mip->add_option("--axis", axis_name_arg, "axial, coronal or sagittal");
  mip->add_option("--index", index, "Slab centre (default: middle)");
  mip->add_option("--slab", slab, "Slab half width in slices");
  mip->add_option("--wl-lo", wl_lo, "Window low (HU)");
  mip->add_option("--wl-hi", wl_hi, "Window high (HU)");
  mip->add_option("--out", out_path, "PNG path")->required();

  // measure
  std::string p1_arg, p2_arg;
  bool lung_only = false;
  auto* measure_cmd = app.add_subcommand("measure", "Lung/lesion volumes and caliper distances");
  measure_cmd->add_option("--case", case_path, "Case manifest")->required();
  measure_cmd->add_option("--p1", p1_arg, "Caliper start voxel x,y,z");
  measure_cmd->add_option("--p2", p2_arg, "Caliper end voxel x,y,z");
  measure_cmd->add_flag("--lung-only", lung_only, "Lesion percentage over lung voxels only");

  // synth
  int n_cases = 40;
  std::uint64_t synth_seed = 0;
  double positive_fraction = 0.5;
  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic phantom dataset");
  synth->add_option("--cases", n_cases, "Number of cases");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--positive-fraction", positive_fraction, "Share of lesion-bearing cases");
  synth->add_option("--out", out_path, "Output directory")->required();

  // train
  std::string data_dir;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train the attention-MIL classifier");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_flags.add_to(train_cmd);

  // eval
  int folds = 5, resamples = 2000;
  double threshold = 0.5;
  TrainFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Stratified k-fold cross-validation report");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--folds", folds, "Number of folds");
  eval->add_option("--bootstrap", resamples, "Bootstrap resamples for the intervals");
  eval->add_option("--threshold", threshold, "Decision threshold on p(positive)");
  eval->add_option("--out", out_path, "Also write the report here");
  eval_flags.add_to(eval);

  // sweep
  std::vector<double> lambdas{0.0, 0.5, 1.0, 2.0};
  TrainFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Train once per lambda and report attention roughness");
  sweep->add_option("--data", data_dir, "Dataset directory")->required();
  sweep->add_option("--lambdas", lambdas, "Lambda values")->delimiter(',');
  sweep_flags.add_to(sweep);

  // serve
  std::string host, presets_dir = "presets";
  int port = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", host, "Listen address (env CTVIEW_HOST, default 127.0.0.1)");
  serve->add_option("--port", port, "Listen port (env CTVIEW_PORT, default 8080)");
  serve->add_option("--cache-dir", cache_dir, "Derived-result cache (env CTVIEW_CACHE)");
  serve->add_option("--model", model_path, "Model checkpoint");
  serve->add_option("--presets", presets_dir, "Transfer-function preset directory");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == args[0];
    if (!known) {
      err << "error: unknown subcommand '" << args[0] << "'\n" << "run with --help for usage\n";
      return 2;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (*ingest) {
      stage = "ingest";
      const LoadedCase c = load_case_volumes(read_manifest(case_path));
      if (!out_path.empty()) {
        fs::create_directories(out_path);
        nifti::write_file(fs::path(out_path) / "scalar.nii.gz", c.scalar);
        if (c.lung_mask) {
          nifti::write_file(fs::path(out_path) / "labels.nii.gz", merge_masks(*c.lung_mask, c.lesion_mask));
        }
      }
      const Geometry& g = c.scalar.geometry();
      nlohmann::json j{{"id", c.manifest.id},
                       {"dims", {g.dims.nx, g.dims.ny, g.dims.nz}},
                       {"spacing", {g.spacing.x, g.spacing.y, g.spacing.z}},
                       {"hu_range", {c.scalar.min_value(), c.scalar.max_value()}},
                       {"lung_mask", c.lung_mask.has_value()},
                       {"lesion_mask", c.lesion_mask.has_value()},
                       {"input_hash", to_hex(c.input_hash)},
                       {"warnings", c.warnings}};
      out << j.dump(2) << "\n";
    } else if (*segment) {
      stage = "ingest";
      const LoadedCase c = load_case_volumes(read_manifest(case_path));
      stage = "segment";
      seg_cfg.validate();
      const LabelVolume lung = seg::segment_lungs(c.scalar, seg_cfg);
      const LabelVolume labels = seg::localize_lesions(c.scalar, lung, seg_cfg);
      nifti::write_file(out_path, labels);
      nlohmann::json j{{"lung_ml", measure::region_volume(labels, kLung)},
                       {"lesion_ml", measure::region_volume(labels, kLesion)},
                       {"notice", seg::kFallbackNotice}};
      out << j.dump(2) << "\n";
    } else if (*classify) {
      stage = "ingest";
      const CaseManifest m = read_manifest(case_path);
      stage = "classify";
      if (model_path.empty()) throw StageError("classify", "--model is required to classify");
      auto model = std::make_shared<const mil::MilModel>(mil::load_checkpoint_file(model_path));
      std::shared_ptr<DerivedCache> cache;
      if (!cache_dir.empty()) cache = std::make_shared<DerivedCache>(cache_dir);
      PipelineOptions opts;
      opts.heatmap = !heatmap_path.empty();
      const CasePipeline pipeline(model, cache, opts);
      stage = "ingest";
      const CaseAnalysis a = pipeline.run(m);
      if (!a.classification) {
        const StageFailure* f = a.failure("segment");
        if (!f) f = a.failure("classify");
        throw StageError(f ? f->stage : "classify", f ? f->detail : "classification failed");
      }
      if (a.heatmap && !heatmap_path.empty()) nifti::write_file(heatmap_path, *a.heatmap);
      nlohmann::json j{{"id", a.id()},
                       {"p_neg", a.classification->p_negative},
                       {"p_pos", a.classification->p_positive},
                       {"attention", a.classification->attention},
                       {"model_version", a.classification->model_version},
                       {"cached", a.classification_cached},
                       {"warnings", a.warnings}};
      out << j.dump(2) << "\n";
    } else if (*render_cmd) {
      stage = "render";
      const nlohmann::json scene = read_json(scene_path, "render");
      if (!scene.contains("case") || !scene.at("case").is_string()) {
        throw StageError("render", "scene needs a \"case\" manifest path");
      }
      fs::path manifest_path = scene.at("case").get<std::string>();
      if (manifest_path.is_relative()) manifest_path = fs::path(scene_path).parent_path() / manifest_path;
      stage = "ingest";
      const LoadedCase c = load_case_volumes(read_manifest(manifest_path));
      stage = "render";
      const Geometry& g = c.scalar.geometry();
      LabelVolume labels(g, std::vector<std::uint8_t>(g.dims.count(), 0));
      try {
        labels = case_labels(c, seg_cfg);
      } catch (const std::exception& e) {
        err << "warning: no masks, rendering context only: " << e.what() << "\n";
      }
      const auto presets = render::load_presets(scene.value("presets", std::string("presets")));
      const auto settings =
          render::settings_from_json(scene.value("settings", nlohmann::json::object()), presets);
      const auto camera = render::camera_from_json(scene.value("camera", nlohmann::json::object()), g);
      const auto clip = render::clip_from_json(scene.value("clip", nlohmann::json::object()));
      const auto img = render::raycast(c.scalar, labels, camera, clip, settings);
      const fs::path png = out_path.empty() ? fs::path(scene_path).replace_extension(".png")
                                            : fs::path(out_path);
      render::write_png_file(render::to_slice_image(img), png);
      out << png.string() << "\n";
    } else if (*mip) {
      stage = "ingest";
      const LoadedCase c = load_case_volumes(read_manifest(case_path));
      stage = "segment";
      const LabelVolume labels = case_labels(c, seg_cfg);
      stage = "mip";
      const Axis axis = parse_axis(axis_name_arg);
      const int n = c.scalar.dims()[normal_dimension(axis)];
      const ScalarSlice plane =
          render::mip_project(c.scalar, labels, axis, index < 0 ? n / 2 : index, slab);
      render::write_png_file(apply_window_level(plane, WindowLevel(wl_lo, wl_hi)), out_path);
      out << out_path << "\n";
    } else if (*measure_cmd) {
      stage = "ingest";
      const LoadedCase c = load_case_volumes(read_manifest(case_path));
      stage = "segment";
      const LabelVolume labels = case_labels(c, seg_cfg);
      stage = "measure";
      const auto stats = measure::lesion_stats(
          labels, lung_only ? measure::Denominator::LungOnly : measure::Denominator::LungAndLesion);
      nlohmann::json j{{"volumes", measure::to_json(stats)}};
      if (!p1_arg.empty() || !p2_arg.empty()) {
        if (p1_arg.empty() || p2_arg.empty()) throw InvalidArgument("--p1 and --p2 go together");
        const auto rec =
            measure::linear_record(c.scalar.geometry(), parse_point(p1_arg), parse_point(p2_arg));
        j["linear"] = measure::to_json(rec);
      }
      out << j.dump(2) << "\n";
    } else if (*synth) {
      stage = "synth";
      const auto cases = mil::generate_synthetic_dataset(n_cases, synth_seed, positive_fraction);
      write_dataset(out_path, cases);
      int positives = 0;
      for (const auto& c : cases) positives += c.label;
      out << nlohmann::json{{"cases", n_cases}, {"positive", positives}, {"out", out_path}}.dump()
          << "\n";
    } else if (*train_cmd) {
      stage = "train";
      const auto tc = train_flags.config();
      const auto mc = model_config(train_flags.backbone);
      stage = "ingest";
      const auto data = load_labeled_bags(data_dir, mc.extractor.input_side);
      stage = "train";
      const auto result = mil::train(data, mc, tc, [&](int epoch, const mil::EpochLoss& l) {
        out << nlohmann::json{{"epoch", epoch}, {"ce", l.ce}, {"aw", l.aw}, {"total", l.total}}.dump()
            << "\n";
        out.flush();
      });
      mil::save_checkpoint_file(result.model, out_path);
      err << "wrote " << out_path << " (model " << result.model.version() << ")\n";
    } else if (*eval) {
      stage = "eval";
      const auto tc = eval_flags.config();
      const auto mc = model_config(eval_flags.backbone);
      stage = "ingest";
      const auto data = load_labeled_bags(data_dir, mc.extractor.input_side);
      stage = "eval";
      mil::CrossValidationOptions opts;
      opts.folds = folds;
      opts.seed = eval_flags.seed;
      opts.bootstrap_resamples = resamples;
      opts.threshold = threshold;
      const auto report = mil::cross_validate(data, mc, tc, opts, [&](const mil::FoldReport& f) {
        err << "fold " << f.fold << ": accuracy " << f.metrics.accuracy << ", auc "
            << (f.auc_defined ? std::to_string(f.auc) : "n/a") << "\n";
      });
      const std::string text = report.to_json().dump(2) + "\n";
      if (!out_path.empty()) write_text(out_path, text);
      out << text;
    } else if (*sweep) {
      stage = "train";
      const auto mc = model_config(sweep_flags.backbone);
      stage = "ingest";
      const auto data = load_labeled_bags(data_dir, mc.extractor.input_side);
      stage = "train";
      nlohmann::json rows = nlohmann::json::array();
      for (double lambda : lambdas) {
        auto tc = sweep_flags.config();
        tc.lambda = lambda;
        const auto result = mil::train(data, mc, tc);
        rows.push_back({{"lambda", lambda},
                        {"roughness", mil::mean_attention_roughness(result.model, data)},
                        {"final_ce", result.curve.empty() ? 0.0 : result.curve.back().ce}});
      }
      out << rows.dump(2) << "\n";
    } else if (*serve) {
      stage = "serve";
      auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? v : "";
      };
      if (host.empty()) host = env("CTVIEW_HOST");
      if (host.empty()) host = "127.0.0.1";
      if (port == 0 && !env("CTVIEW_PORT").empty()) port = std::stoi(env("CTVIEW_PORT"));
      if (port == 0) port = 8080;
      if (cache_dir.empty()) cache_dir = env("CTVIEW_CACHE");
      service::ServiceConfig cfg;
      cfg.cache_dir = cache_dir;
      cfg.preset_dir = presets_dir;
      if (!model_path.empty()) {
        cfg.model = std::make_shared<const mil::MilModel>(mil::load_checkpoint_file(model_path));
      }
      service::Api api(cfg);
      for (const auto& w : api.startup_warnings()) err << "warning: " << w << "\n";
      err << "listening on http://" << host << ":" << port << "\n";
      service::serve(api, host, port);
    }
  } catch (const StageError& e) {
    err << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ctview::cli
