#pragma once

// RunConfig: one JSON object per command invocation. Command-line flags
// override fields; negative numeric fields mean "use the command default" and
// are filled in by resolve() before the config is echoed to the output dir.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bigroc/error.hpp"
#include "bigroc/pgd.hpp"
#include "bigroc/threat_model.hpp"

namespace bigroc {

struct RunConfig {
  std::string command;
  std::string out;
  std::uint64_t seed = 0;
  int workers = 1;

  // models
  std::string classifier;  // robust checkpoint directory
  std::string standard;    // standard checkpoint directory (pag-demo, default extractor)
  std::string extractor;   // evaluation feature extractor; empty: `standard`
  std::vector<std::string> classifiers;  // classifier-eps ablation

  // image sets (manifest paths)
  std::string input;
  std::string real;
  std::string calib;
  std::string generated;
  std::string boosted;

  // threat model and PGD schedule
  std::string norm = "l2";
  double eps = -1.0;
  std::string preset;  // "dataset/generator" epsilon preset, used when eps is unset
  int steps = -1;
  double alpha = -1.0;
  std::string step_rule = "auto";
  bool return_best = false;

  // pseudo labels
  bool debias = true;
  double debias_a = 1.0;

  // metrics
  int is_splits = 10;
  int fid_repeats = 3;
  std::string feature_scale = "emb";

  // training / built-in data
  std::string dataset = "shapes10";
  int count = 10000;
  std::uint64_t dataset_seed = 1;
  int epochs = 15;
  int batch_size = 64;
  double learning_rate = 2e-3;
  int width = 16;
  int train_steps = 7;

  // generator (sample-vae)
  int vae_epochs = 20;
  int samples = 2048;
  int calib_size = 1024;

  // pag-demo
  int image = 0;
  std::vector<int> targets;

  // ablate
  std::string axis;
  std::vector<std::string> values;

  // interpolate
  std::string source;
  std::string target;
  int source_index = 0;
  int target_index = 1;
  std::vector<double> schedule{0.25, 0.5, 1.0};

  // check-gradients
  int trials = 20;
  double tolerance = 1e-4;

  Norm threat_norm() const { return parse_norm(norm); }
  std::string extractor_path() const { return extractor.empty() ? standard : extractor; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    RunConfig, command, out, seed, workers, classifier, standard, extractor, classifiers, input,
    real, calib, generated, boosted, norm, eps, preset, steps, alpha, step_rule, return_best, debias,
    debias_a, is_splits, fid_repeats, feature_scale, dataset, count, dataset_seed, epochs,
    batch_size, learning_rate, width, train_steps, vae_epochs, samples, calib_size, image, targets,
    axis, values, source, target, source_index, target_index, schedule, trials, tolerance)

/// Parses a config object, rejecting keys RunConfig does not know.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  const nlohmann::json known = RunConfig{};
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw InvalidArgument("unknown config key '" + k + "'");
  try {
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "make-dataset", "train-robust", "sample-vae", "refine",      "evaluate",
      "pag-demo",     "ablate",       "interpolate", "check-gradients"};
  return names;
}

// Desk-scale defaults for 16x16x3 images in [-1, 1].
inline constexpr double kDefaultTrainEps = 1.0;
inline constexpr double kDefaultRefineEps = 8.0;
inline constexpr int kDefaultRefineSteps = 7;
inline constexpr double kPagReferenceEps = 30.0;  // for 32x32x3 images
inline constexpr std::size_t kPagReferenceDims = 3072;
inline constexpr int kPagSteps = 60;
inline constexpr int kInterpSteps = 30;

/// Fills command defaults, then checks values and that referenced paths exist.
/// `image_dims` is the per-image value count, used to scale the PAG budget.
inline void resolve(RunConfig& c, std::size_t image_dims = 768) {
  const auto& names = command_names();
  detail::require(std::find(names.begin(), names.end(), c.command) != names.end(),
                  "unknown command '" + c.command + "'");
  detail::require(c.workers >= 1, "workers must be >= 1");
  detail::require(c.is_splits >= 1, "is_splits must be >= 1");
  detail::require(c.fid_repeats >= 0, "fid_repeats must be >= 0");
  const Norm n = parse_norm(c.norm);
  parse_step_rule(c.step_rule);

  auto need = [](const std::string& p, const std::string& what) {
    detail::require(!p.empty(), what + " is required");
    if (!std::filesystem::exists(p)) throw IoError(what + " not found: " + p);
  };
  auto maybe = [](const std::string& p, const std::string& what) {
    if (!p.empty() && !std::filesystem::exists(p)) throw IoError(what + " not found: " + p);
  };
  auto refine_schedule = [&] {
    if (c.eps < 0) c.eps = kDefaultRefineEps;
    if (c.steps < 0) c.steps = kDefaultRefineSteps;
    if (c.alpha < 0) c.alpha = c.steps > 0 ? 1.5 * c.eps / c.steps : 0.0;
  };
  const std::string& cmd = c.command;
  if (cmd != "check-gradients") detail::require(!c.out.empty(), "--out is required");

  if (cmd == "make-dataset") {
    detail::require(c.count >= 1, "count must be >= 1");
  } else if (cmd == "train-robust") {
    maybe(c.input, "training manifest");
    if (c.eps < 0) c.eps = kDefaultTrainEps;
    if (c.steps < 0) c.steps = c.train_steps;
    if (c.alpha < 0) c.alpha = 0.2 * c.eps;
    detail::require(c.epochs >= 1 && c.batch_size >= 1, "epochs and batch_size must be >= 1");
  } else if (cmd == "sample-vae") {
    maybe(c.input, "training manifest");
    detail::require(c.samples >= 1 && c.calib_size >= 0 && c.vae_epochs >= 1,
                    "samples and vae_epochs must be >= 1");
  } else if (cmd == "refine") {
    need(c.classifier, "classifier checkpoint");
    need(c.input, "input manifest");
    maybe(c.calib, "calibration manifest");
    refine_schedule();
  } else if (cmd == "evaluate") {
    need(c.extractor_path(), "extractor checkpoint (--extractor or --standard)");
    need(c.real, "real manifest");
    need(c.generated, "generated manifest");
    need(c.boosted, "boosted manifest");
  } else if (cmd == "pag-demo") {
    need(c.classifier, "classifier checkpoint");
    need(c.input, "input manifest");
    maybe(c.standard, "standard checkpoint");
    if (c.eps < 0)
      c.eps = kPagReferenceEps * std::sqrt(static_cast<double>(image_dims) / kPagReferenceDims);
    if (c.steps < 0) c.steps = kPagSteps;
    if (c.alpha < 0) c.alpha = c.steps > 0 ? c.eps / c.steps : 0.0;
    if (c.step_rule == "auto") c.step_rule = "normalized";
  } else if (cmd == "ablate") {
    need(c.input, "generated manifest");
    need(c.real, "real manifest");
    need(c.extractor_path(), "extractor checkpoint (--extractor or --standard)");
    maybe(c.calib, "calibration manifest");
    detail::require(!c.axis.empty() && !c.values.empty(), "ablate needs --axis and --values");
    if (c.axis == "classifier-eps") {
      detail::require(!c.classifiers.empty(), "classifier-eps ablation needs --classifiers");
      for (const auto& p : c.classifiers) need(p, "classifier checkpoint");
    } else {
      need(c.classifier, "classifier checkpoint");
    }
    refine_schedule();
  } else if (cmd == "interpolate") {
    need(c.classifier, "classifier checkpoint");
    if (c.source.empty() || c.target.empty()) need(c.input, "input manifest");
    maybe(c.source, "source image");
    maybe(c.target, "target image");
    if (c.steps < 0) c.steps = kInterpSteps;
  } else if (cmd == "check-gradients") {
    need(c.classifier, "classifier checkpoint");
    detail::require(c.trials >= 1, "trials must be >= 1");
  }
  detail::require(c.eps < 0 || std::isfinite(c.eps), "eps must be finite");
  if (c.eps >= 0 && c.steps >= 0) {
    ThreatModel(n, c.eps);
    PGDConfig p;
    p.steps = c.steps;
    p.alpha = c.alpha;
    if (c.eps > 0) p.validate();
  }
}

}  // namespace bigroc
