#include "cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "factor/calibration.hpp"
#include "factor/errors.hpp"
#include "factor/evaluation.hpp"
#include "factor/parallel.hpp"
#include "factor/plots.hpp"
#include "factor/png_io.hpp"
#include "factor/synthetic.hpp"
#include "factor/transforms.hpp"

namespace factor::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  if (auto existing = spdlog::get("factor")) return existing;
  auto created = spdlog::stderr_color_mt("factor");
  created->set_pattern("[%l] %v");
  return created;
}

void configure_logging(const std::string& flag_level) {
  std::string level = flag_level;
  if (const char* env = std::getenv("FACTOR_LOG"); env && *env) level = env;
  static const std::vector<std::string> known = {
      "trace", "debug", "info", "warn", "warning", "err", "error", "critical",
      "off"};
  if (std::find(known.begin(), known.end(), level) == known.end()) {
    logger()->set_level(spdlog::level::info);
    logger()->warn("unknown log level '{}', using info", level);
    return;
  }
  if (level == "warning") level = "warn";
  if (level == "error") level = "err";
  logger()->set_level(spdlog::level::from_str(level));
}

Json parse(const std::string& canonical) { return Json::parse(canonical); }

void write_json(const fs::path& path, const Json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory '" + dir.string() + "'");
  }
}

Json diff_json(const PixelDiffReport& r) {
  Json j;
  j["delta_mu"] = r.delta_mu;
  j["delta_std"] = r.delta_std;
  j["delta_max"] = r.delta_max;
  j["relative_change_pct"] = r.relative_change_pct;
  return j;
}

std::vector<fs::path> collect_pngs(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else if (fs::is_directory(input)) {
    for (const auto& entry : fs::directory_iterator(input)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    throw InputError("input '" + input.string() + "' does not exist");
  }
  if (files.empty()) {
    throw InputError("no PNG images found in '" + input.string() + "'");
  }
  return files;
}

// --- perturb ----------------------------------------------------------------

struct PerturbOptions {
  std::string in;
  std::string out;
  std::string params;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma_prime, alpha, sigma_noise, theta, beta;
  std::optional<int> kernel_size;
  std::size_t workers = 1;
};

void run_perturb(const PerturbOptions& o) {
  TransformParams p;
  if (!o.params.empty()) p = read_config(o.params).transform_params;
  if (o.gamma_prime) p.gamma_prime = *o.gamma_prime;
  if (o.alpha) p.alpha = *o.alpha;
  if (o.kernel_size) p.kernel_size = *o.kernel_size;
  if (o.sigma_noise) p.sigma_noise = *o.sigma_noise;
  if (o.theta) p.theta = *o.theta;
  if (o.beta) p.beta = *o.beta;
  if (o.seed) p.noise_seed = *o.seed;
  p.validate();

  const auto files = collect_pngs(o.in);
  const fs::path out_dir = o.out;
  ensure_directory(out_dir);
  for (const auto& f : files) {
    if (fs::exists(out_dir / f.filename()) &&
        fs::equivalent(out_dir / f.filename(), f)) {
      throw InputError("output would overwrite input '" + f.string() + "'");
    }
  }
  logger()->info("perturbing {} image(s) into {}", files.size(),
                 out_dir.string());

  std::vector<PixelDiffReport> reports(files.size());
  parallel_for(files.size(), o.workers, [&](std::size_t i) {
    const Image original = read_png(files[i]);
    const Image cf =
        compose_counterfactual(original, p, files[i].stem().string());
    write_png(out_dir / files[i].filename(), cf);
    reports[i] = pixel_diff_report(original, cf);
  });

  Json doc;
  doc["config"]["transform_params"] = parse(serialize_transform_params(p));
  doc["config"]["seed"] = p.noise_seed;
  doc["images"] = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    Json entry;
    entry["image"] = files[i].filename().string();
    entry.update(diff_json(reports[i]));
    doc["images"].push_back(entry);
  }
  write_json(out_dir / "diff_report.json", doc);
}

// --- calibrate --------------------------------------------------------------

struct CalibrateOptions {
  std::string orig, cf, emb, config, out, stats;
  std::optional<double> lambda, iou_threshold;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

void run_calibrate(const CalibrateOptions& o) {
  CalibrationConfig config;
  if (!o.config.empty()) config = read_config(o.config);
  if (o.lambda) config.lambda = *o.lambda;
  if (o.iou_threshold) config.iou_threshold = *o.iou_threshold;
  config.validate();

  const auto originals = read_detections_jsonl(o.orig);
  const auto counterfactuals = read_detections_jsonl(o.cf);
  const TextEmbeddingTable table = read_embedding_table(o.emb);

  std::map<std::string, std::size_t> cf_index;
  for (std::size_t i = 0; i < counterfactuals.size(); ++i) {
    if (!cf_index.emplace(counterfactuals[i].image_id, i).second) {
      throw InputError("duplicate counterfactual image '" +
                       counterfactuals[i].image_id + "'");
    }
  }
  std::map<std::string, int> seen;
  for (const auto& set : originals) {
    if (seen[set.image_id]++) {
      throw InputError("duplicate original image '" + set.image_id + "'");
    }
    if (!cf_index.count(set.image_id)) {
      throw InputError("no counterfactual detections for image '" +
                       set.image_id + "'");
    }
  }
  if (cf_index.size() != originals.size()) {
    logger()->warn("{} counterfactual image(s) have no original and are ignored",
                   cf_index.size() - originals.size());
  }

  const Calibrator calibrator(table, config);
  std::vector<ImageCalibration> results(originals.size());
  parallel_for(originals.size(), o.workers, [&](std::size_t i) {
    results[i] = calibrator.run(originals[i],
                                counterfactuals[cf_index.at(originals[i].image_id)]);
  });

  std::vector<DetectionSet> calibrated;
  calibrated.reserve(results.size());
  Json images = Json::array();
  std::size_t total_pairs = 0, total_passthrough = 0;
  for (const auto& r : results) {
    calibrated.push_back(r.calibrated);
    Json entry;
    entry["image_id"] = r.calibrated.image_id;
    entry["pairs"] = r.num_pairs;
    entry["passthrough"] = r.num_passthrough;
    entry["mu"] = r.mean_kl;
    images.push_back(entry);
    total_pairs += r.num_pairs;
    total_passthrough += r.num_passthrough;
  }
  write_detections_jsonl(o.out, calibrated);

  Json stats;
  stats["config"] = parse(serialize_config(config));
  stats["config"]["seed"] = o.seed;
  stats["images"] = images.size();
  stats["pairs"] = total_pairs;
  stats["passthrough"] = total_passthrough;
  stats["per_image"] = images;
  if (!o.stats.empty()) write_json(o.stats, stats);
  logger()->info("calibrated {} image(s): {} paired, {} passthrough region(s)",
                 results.size(), total_pairs, total_passthrough);
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateOptions {
  std::string det, gt, out;
  double iou_threshold = 0.5;
  std::uint64_t seed = 0;
};

void run_evaluate(const EvaluateOptions& o) {
  if (!(o.iou_threshold > 0.0 && o.iou_threshold <= 1.0)) {
    throw ParameterError("--iou-threshold must lie in (0, 1]");
  }
  const auto detections = read_detections_jsonl(o.det);
  const auto truth = read_ground_truth_jsonl(o.gt);
  const EvalReport report = evaluate(detections, truth, o.iou_threshold);
  Json doc;
  doc["config"]["iou_threshold"] = o.iou_threshold;
  doc["config"]["seed"] = o.seed;
  doc.update(parse(serialize_eval_report(report)));
  write_json(o.out, doc);
  logger()->info("mAP50 = {:.4f} over {} image(s)", report.map50, truth.size());
}

// --- sweep ------------------------------------------------------------------

struct SweepOptions {
  std::string config, out, plots;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> scenes, workers;
  std::optional<double> spurious_strength, lambda;
  std::vector<std::string> severities;
};

void run_sweep(const SweepOptions& o) {
  ExperimentConfig config;
  if (!o.config.empty()) {
    config = deserialize_experiment_config(read_text_file(o.config));
  }
  if (o.seed) config.seed = *o.seed;
  if (o.scenes) config.num_scenes = *o.scenes;
  if (o.workers) config.workers = *o.workers;
  if (o.spurious_strength) config.spurious_strength = *o.spurious_strength;
  if (o.lambda) config.calibration.lambda = *o.lambda;
  if (!o.severities.empty()) {
    config.severities.clear();
    for (const auto& s : o.severities) {
      config.severities.push_back(severity_from_string(s));
    }
  }
  config.validate();
  logger()->info("running {} scene(s) x {} severity level(s)",
                 config.num_scenes, config.severities.size());

  const ExperimentReport report = run_experiment(config);
  Json doc = parse(serialize_experiment_report(report));
  // Worker count never changes results; keep it out of the echo so reports
  // compare equal across machines.
  doc["config"].erase("workers");
  write_json(o.out, doc);
  for (const auto& r : report.results) {
    logger()->info("{}: baseline {:.4f}  factor {:.4f}", to_string(r.severity),
                   r.baseline.map50, r.calibrated.map50);
  }

  if (!o.plots.empty()) {
    const fs::path dir = o.plots;
    ensure_directory(dir);
    for (const auto& r : report.results) {
      write_text_file(dir / ("pr_" + std::string(to_string(r.severity)) + ".svg"),
                      render_svg(pr_chart(r)));
    }
    write_text_file(dir / "lambda_sensitivity.svg",
                    render_svg(lambda_chart(report)));
  }
}

// --- generate ---------------------------------------------------------------

struct GenerateOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t scenes = 8;
  std::string severity = "high";
  double spurious_strength = ExperimentConfig{}.spurious_strength;
  double localization_noise = ExperimentConfig{}.localization_noise;
  std::size_t embedding_dim = ExperimentConfig{}.embedding_dim;
};

void run_generate(const GenerateOptions& o) {
  if (o.scenes == 0) throw ParameterError("--scenes must be positive");
  SceneConfig scene;
  const ShiftSeverity severity = severity_from_string(o.severity);
  scene.shift_field = severity_field(severity);
  if (severity == ShiftSeverity::kNone) scene.attribute_probability = 0.0;
  const std::size_t c = scene.num_categories;
  const TextEmbeddingTable table =
      synthetic_embeddings(c, o.embedding_dim, o.seed);
  const MockDetectorParams detector = default_detector_params(
      c, o.spurious_strength, o.localization_noise, o.seed);
  const TransformParams cf_params;

  const fs::path dir = o.out;
  ensure_directory(dir / "images");
  ensure_directory(dir / "counterfactual");
  std::vector<GroundTruthSet> truth;
  std::vector<DetectionSet> originals, counterfactuals;
  for (std::size_t i = 0; i < o.scenes; ++i) {
    const SyntheticScene s = generate_scene(scene, o.seed + i);
    const auto proposals = s.proposals();
    const Image cf = compose_counterfactual(s.image, cf_params, s.image_id);
    write_png(dir / "images" / (s.image_id + ".png"), s.image);
    write_png(dir / "counterfactual" / (s.image_id + ".png"), cf);
    truth.push_back(s.truth);
    originals.push_back(mock_detect(s.image, proposals, s.image_id,
                                    View::kOriginal, detector, table));
    counterfactuals.push_back(mock_detect(cf, proposals, s.image_id,
                                          View::kCounterfactual, detector,
                                          table));
  }
  write_ground_truth_jsonl(dir / "groundtruth.jsonl", truth);
  write_detections_jsonl(dir / "detections_orig.jsonl", originals);
  write_detections_jsonl(dir / "detections_cf.jsonl", counterfactuals);
  write_text_file(dir / "embeddings.json",
                  serialize_embedding_table(table) + "\n");
  write_text_file(dir / "config.json",
                  serialize_config(CalibrationConfig{}) + "\n");
  logger()->info("wrote {} synthetic scene(s) to {}", o.scenes, dir.string());
}

// --- metrics ----------------------------------------------------------------

struct MetricsOptions {
  std::string a, b, out;
  std::uint64_t seed = 0;
};

void run_metrics(const MetricsOptions& o) {
  const PixelDiffReport r = pixel_diff_report(read_png(o.a), read_png(o.b));
  Json doc = diff_json(r);
  const std::string text = doc.dump(2) + "\n";
  std::cout << text;
  if (!o.out.empty()) write_text_file(o.out, text);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Counterfactual test-time calibration for open-vocabulary "
               "detection",
               "factor"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::string log_level = "info";
  app.add_option("--log-level", log_level,
                 "trace|debug|info|warn|error|off (FACTOR_LOG overrides)")
      ->capture_default_str();

  PerturbOptions po;
  auto* perturb = app.add_subcommand(
      "perturb", "Write counterfactual PNGs and a diff_report.json");
  perturb->add_option("--in", po.in, "Input PNG file or directory")->required();
  perturb->add_option("--out", po.out, "Output directory")->required();
  perturb->add_option("--params", po.params,
                      "Config JSON; its transform_params are used");
  perturb->add_option("--seed", po.seed, "Noise seed (overrides config)");
  perturb->add_option("--gamma-prime", po.gamma_prime, "Brightness gamma'");
  perturb->add_option("--alpha", po.alpha, "Contrast scale");
  perturb->add_option("--kernel-size", po.kernel_size, "Blur kernel size (odd)");
  perturb->add_option("--sigma-noise", po.sigma_noise, "Noise std");
  perturb->add_option("--theta", po.theta, "Texture resampling density");
  perturb->add_option("--beta", po.beta, "Haze blend weight");
  perturb->add_option("--workers", po.workers, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CalibrateOptions co;
  auto* calibrate = app.add_subcommand(
      "calibrate", "Calibrate original detections against counterfactuals");
  calibrate->add_option("--orig", co.orig, "Original-view detections.jsonl")
      ->required();
  calibrate->add_option("--cf", co.cf, "Counterfactual-view detections.jsonl")
      ->required();
  calibrate->add_option("--emb", co.emb, "embeddings.json")->required();
  calibrate->add_option("--config", co.config, "config.json");
  calibrate->add_option("--out", co.out, "Calibrated detections.jsonl")
      ->required();
  calibrate->add_option("--stats", co.stats, "Per-image statistics JSON");
  calibrate->add_option("--lambda", co.lambda, "Penalty weight (overrides config)");
  calibrate->add_option("--iou-threshold", co.iou_threshold,
                        "Pairing IoU threshold (overrides config)");
  calibrate->add_option("--seed", co.seed, "Recorded in stats; no randomness")
      ->capture_default_str();
  calibrate->add_option("--workers", co.workers, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EvaluateOptions eo;
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "AP50 / mAP50 of detections");
  evaluate_cmd->add_option("--det", eo.det, "detections.jsonl")->required();
  evaluate_cmd->add_option("--gt", eo.gt, "groundtruth.jsonl")->required();
  evaluate_cmd->add_option("--out", eo.out, "report.json")->required();
  evaluate_cmd->add_option("--iou-threshold", eo.iou_threshold,
                           "Match threshold")
      ->capture_default_str();
  evaluate_cmd->add_option("--seed", eo.seed, "Recorded in report; no randomness")
      ->capture_default_str();

  SweepOptions so;
  auto* sweep = app.add_subcommand(
      "sweep", "Synthetic spurious-correlation experiment");
  sweep->add_option("--config", so.config, "experiment.json");
  sweep->add_option("--out", so.out, "report.json")->required();
  sweep->add_option("--emit-plots", so.plots,
                    "Directory for PR and lambda-sensitivity SVG plots");
  sweep->add_option("--seed", so.seed, "Experiment seed (overrides config)");
  sweep->add_option("--scenes", so.scenes, "Scenes per severity");
  sweep->add_option("--severity", so.severities,
                    "none|low|medium|high|realistic|low_level (repeatable)");
  sweep->add_option("--spurious-strength", so.spurious_strength,
                    "Mock detector spurious reliance");
  sweep->add_option("--lambda", so.lambda, "Penalty weight for the main run");
  sweep->add_option("--workers", so.workers, "Worker threads")
      ->check(CLI::PositiveNumber);

  GenerateOptions go;
  auto* generate = app.add_subcommand(
      "generate", "Write a synthetic dataset with mock detections");
  generate->add_option("--out", go.out, "Output directory")->required();
  generate->add_option("--seed", go.seed, "First scene seed")
      ->capture_default_str();
  generate->add_option("--scenes", go.scenes, "Number of scenes")
      ->capture_default_str();
  generate->add_option("--severity", go.severity, "Shift severity")
      ->capture_default_str();
  generate->add_option("--spurious-strength", go.spurious_strength,
                       "Mock detector spurious reliance")
      ->capture_default_str();
  generate->add_option("--localization-noise", go.localization_noise,
                       "Box jitter std (normalised units)")
      ->capture_default_str();
  generate->add_option("--embedding-dim", go.embedding_dim,
                       "Embedding dimension")
      ->capture_default_str();

  MetricsOptions mo;
  auto* metrics =
      app.add_subcommand("metrics", "Pixel discrepancy between two PNGs");
  metrics->add_option("--a", mo.a, "First image")->required();
  metrics->add_option("--b", mo.b, "Second image")->required();
  metrics->add_option("--out", mo.out, "Also write the report here");
  metrics->add_option("--seed", mo.seed, "Accepted for uniformity; unused")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? 0 : 1;
  }

  configure_logging(log_level);
  try {
    if (*perturb) run_perturb(po);
    if (*calibrate) run_calibrate(co);
    if (*evaluate_cmd) run_evaluate(eo);
    if (*sweep) run_sweep(so);
    if (*generate) run_generate(go);
    if (*metrics) run_metrics(mo);
  } catch (const Error& e) {
    logger()->error("{}", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    logger()->error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    logger()->critical("internal error: {}", e.what());
    return 2;
  }
  logger()->flush();
  return 0;
}

}  // namespace factor::cli
