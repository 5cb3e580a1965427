// bigroc: command-line front end for robust training, refinement, evaluation
// and the desk-scale experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bigroc/bigroc.hpp"
#include "bigroc/desk/architecture.hpp"
#include "bigroc/desk/shapes_dataset.hpp"
#include "bigroc/desk/vae.hpp"

namespace fs = std::filesystem;
using namespace bigroc;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("short write to " + p.string());
}

fs::path prepare_out(const RunConfig& c, const std::vector<std::string>& inputs) {
  const fs::path out = fs::weakly_canonical(c.out);
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    const fs::path p = fs::weakly_canonical(in);
    const fs::path dir = fs::is_directory(p) ? p : p.parent_path();
    if (dir == out) throw InvalidArgument("--out must differ from the input directory " + dir.string());
  }
  fs::create_directories(out);
  write_json(out / "config.json", json(c));
  return out;
}

Classifier<float> load_model(const std::string& dir) { return load_checkpoint<float>(dir); }

ImageBatch<float> load_set(const std::string& manifest) {
  return io::load_images<float>(io::read_manifest(manifest));
}

void require_compatible(const Classifier<float>& clf, const ImageBatch<float>& b, const std::string& what) {
  detail::require(b.shape == clf.input_shape(), what + " images have shape " + b.shape.str() +
                                                    ", classifier expects " + clf.input_shape().str());
  detail::require(b.range == clf.pixel_range(),
                  what + " pixel range differs from the classifier's pixel range");
}

ImageBatch<float> training_data(const RunConfig& c) {
  if (!c.input.empty()) {
    ImageBatch<float> b = load_set(c.input);
    detail::require(b.has_labels(), "training manifest must be labelled");
    return b;
  }
  detail::require(c.dataset == "shapes10", "unknown built-in dataset '" + c.dataset + "'");
  return desk::make_shapes10({.count = c.count, .seed = c.dataset_seed});
}

PGDConfig schedule_of(const RunConfig& c) {
  PGDConfig p;
  p.steps = c.steps;
  p.alpha = c.alpha;
  p.step_rule = parse_step_rule(c.step_rule);
  p.return_best_iterate = c.return_best;
  p.seed = c.seed;
  return p;
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

// ---- commands ---------------------------------------------------------------

int cmd_make_dataset(const RunConfig& c) {
  const fs::path out = prepare_out(c, {});
  detail::require(c.dataset == "shapes10", "unknown built-in dataset '" + c.dataset + "'");
  ImageBatch<float> b = desk::make_shapes10({.count = c.count, .seed = c.dataset_seed});
  io::save_images(b, out);
  std::cout << "wrote " << b.size() << " images to " << (out / "manifest.json").string() << "\n";
  return kExitOk;
}

int cmd_train_robust(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const ImageBatch<float> data = training_data(c);
  int classes = 2;
  for (int y : data.labels) classes = std::max(classes, y + 1);
  auto init = desk::desk_classifier<float>(data.shape, classes, c.seed, c.width);
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.batch_size = c.batch_size;
  tc.optimizer.learning_rate = c.learning_rate;
  tc.attack = ThreatModel(c.threat_norm(), c.eps);
  tc.attack_pgd = TrainConfig::default_inner_attack(tc.attack, c.steps);
  tc.attack_pgd.alpha = c.alpha;
  if (c.step_rule != "auto") tc.attack_pgd.step_rule = parse_step_rule(c.step_rule);
  tc.seed = c.seed;
  tc.workers = c.workers;
  TrainResult r = adversarial_train(std::move(init), data, tc, out);
  for (const auto& e : r.log)
    std::cout << "epoch " << e.epoch << "  loss " << fmt(e.loss) << "  clean " << fmt(e.clean_acc)
              << "  adv " << fmt(e.adv_acc) << "\n";
  std::cout << (tc.attack.epsilon > 0 ? "robust" : "standard") << " checkpoint: " << out.string()
            << "\nparam_sha256 " << r.classifier.fingerprint() << "\n";
  if (r.diverged) {
    std::cerr << "training diverged: " << r.message << " (kept the last completed epoch)\n";
    return kExitFatal;
  }
  return kExitOk;
}

int cmd_sample_vae(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const ImageBatch<float> data = training_data(c);
  desk::VaeConfig vc;
  vc.epochs = c.vae_epochs;
  vc.seed = c.seed;
  vc.workers = c.workers;
  desk::TinyVae vae(data.shape, vc);
  const std::vector<double> hist = vae.train(data);
  write_json(out / "vae_log.json", {{"epoch_loss", hist}});
  io::save_images(vae.sample(c.samples, c.seed * 2 + 1), out / "generated");
  if (c.calib_size > 0) io::save_images(vae.sample(c.calib_size, c.seed * 2 + 2), out / "calib");
  std::cout << "vae loss " << fmt(hist.front(), 2) << " -> " << fmt(hist.back(), 2) << "\n"
            << "generated: " << (out / "generated" / "manifest.json").string() << "\n";
  if (c.calib_size > 0)
    std::cout << "calibration: " << (out / "calib" / "manifest.json").string() << "\n";
  return kExitOk;
}

int cmd_refine(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const Classifier<float> clf = load_model(c.classifier);
  const io::Manifest m = io::read_manifest(c.input);
  const ImageBatch<float> gen = io::load_images<float>(m);
  require_compatible(clf, gen, "input");

  std::optional<DebiasVector> d;
  if (!gen.has_labels() && c.debias) {
    detail::require(!c.calib.empty(),
                    "unlabelled input needs a calibration set (--calib) or --no-debias");
    const ImageBatch<float> calib = load_set(c.calib);
    require_compatible(clf, calib, "calibration");
    d = compute_debias_vector(clf, calib, c.debias_a, c.workers);
    write_json(out / "debias.json", d->to_json());
  }
  const ThreatModel tm(c.threat_norm(), c.eps);
  BoostResult<float> b = boost(clf, gen, gen.has_labels() ? &gen.labels : nullptr, tm,
                               schedule_of(c), d ? &*d : nullptr, c.workers);
  ImageBatch<float> refined = b.images;
  refined.generator = gen.generator.empty() ? "bigroc" : gen.generator + "+bigroc";
  io::save_images(refined, out, gen.has_labels());
  write_json(out / "report.json", b.report.to_json());

  std::vector<Vec<float>> pairs;
  const int shown = std::min(gen.size(), 16);
  for (int i = 0; i < shown; ++i) {
    pairs.push_back(gen.image(i));
    pairs.push_back(refined.image(i));
  }
  io::write_grid(out / "grid.png", gen.shape, pairs, 8, gen.range);

  const auto& r = b.report;
  std::cout << "mode " << r.mode << "  images " << r.images.size() << "  failures " << r.failures
            << "\nmean p " << fmt(r.mean_p_before) << " -> " << fmt(r.mean_p_after)
            << "  max ||delta|| " << fmt(r.max_norm) << "\n";
  if (r.mode == "pl-debiased")
    std::cout << "label chi-square " << fmt(r.chi_square_plain, 2) << " -> "
              << fmt(r.chi_square_debiased, 2) << " after debiasing\n";
  if (r.failures == static_cast<int>(r.images.size())) return kExitFatal;
  return r.failures > 0 ? kExitPartial : kExitOk;
}

void print_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::printf("%-12s %12s %10s %10s %10s\n", "set", "proxy-FID", "IS", "IS std", "chi2");
  for (const auto& [name, r] : rows)
    std::printf("%-12s %12.4f %10.4f %10.4f %10.2f\n", name.c_str(), r.fid, r.is_mean, r.is_std,
                r.chi_square);
}

int cmd_evaluate(const RunConfig& c) {
  const fs::path out = prepare_out(c, {});
  const Classifier<float> ex = load_model(c.extractor_path());
  EvalOptions opt{c.is_splits, c.fid_repeats, c.seed};
  const FeatureSet real = extract_eval_features(ex, load_set(c.real), c.feature_scale, c.workers);
  const FeatureSet gen = extract_eval_features(ex, load_set(c.generated), c.feature_scale, c.workers);
  const FeatureSet bst = extract_eval_features(ex, load_set(c.boosted), c.feature_scale, c.workers);
  auto [mg, mb] = evaluate_sets(real, gen, bst, opt);
  json j = {{"generated", mg.to_json()}, {"boosted", mb.to_json()}};
  const fs::path rep = fs::path(c.boosted).parent_path() / "report.json";
  if (fs::exists(rep)) {
    std::ifstream f(rep);
    json r;
    f >> r;
    json pl = {{"mode", r.at("mode")},
               {"histogram_plain", r.at("histogram_plain")},
               {"chi_square_plain", r.at("chi_square_plain")}};
    if (r.contains("histogram_debiased")) {
      pl["histogram_debiased"] = r.at("histogram_debiased");
      pl["chi_square_debiased"] = r.at("chi_square_debiased");
    }
    j["pseudo_labels"] = pl;
  }
  write_json(out / "metrics.json", j);
  print_metrics_table({{"generated", mg}, {"boosted", mb}});
  return kExitOk;
}

int cmd_pag_demo(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const Classifier<float> robust = load_model(c.classifier);
  std::optional<Classifier<float>> standard;
  if (c.standard.empty())
    std::cerr << "warning: no standard checkpoint given, running the robust model only\n";
  else
    standard = load_model(c.standard);
  const ImageBatch<float> set = load_set(c.input);
  require_compatible(robust, set, "input");
  if (standard) require_compatible(*standard, set, "input");
  detail::require(c.image >= 0 && c.image < set.size(),
                  "--image " + std::to_string(c.image) + " outside the manifest");
  std::vector<int> targets = c.targets;
  if (targets.empty())
    for (int k = 0; k < robust.class_count(); ++k) targets.push_back(k);
  const Vec<float> x = set.image(c.image);
  const PagDemoResult r = pag_demo(robust, standard ? &*standard : nullptr, x, targets,
                                   ThreatModel(c.threat_norm(), c.eps), schedule_of(c), c.workers);
  write_json(out / "pag.json", r.to_json());

  std::vector<Vec<float>> grid{x};
  for (const auto& cell : r.robust) grid.push_back(cell.image);
  if (standard) {
    grid.push_back(x);
    for (const auto& cell : r.standard) grid.push_back(cell.image);
  }
  io::write_grid(out / "grid.png", set.shape, grid, static_cast<int>(targets.size()) + 1, set.range);

  std::printf("epsilon %.4f  steps %d  alpha %.4f\n", c.eps, c.steps, c.alpha);
  std::printf("%-8s %12s %12s %12s %12s\n", "target", "P robust", "|d| robust", "P standard",
              "|d| standard");
  for (std::size_t k = 0; k < targets.size(); ++k) {
    std::printf("%-8d %12.6f %12.4f", targets[k], r.robust[k].p, r.robust[k].norm);
    if (standard) std::printf(" %12.6f %12.4f", r.standard[k].p, r.standard[k].norm);
    std::printf("\n");
  }
  return kExitOk;
}

int cmd_ablate(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const Classifier<float> ex = load_model(c.extractor_path());
  std::vector<Classifier<float>> models;
  if (c.axis == "classifier-eps")
    for (const auto& p : c.classifiers) models.push_back(load_model(p));
  else
    models.push_back(load_model(c.classifier));
  const ImageBatch<float> gen = load_set(c.input);
  for (const auto& m : models) require_compatible(m, gen, "generated");
  std::optional<ImageBatch<float>> calib;
  if (c.debias && !c.calib.empty()) calib = load_set(c.calib);

  RefineSetup s;
  s.classifier = &models.front();
  s.extractor = &ex;
  s.real = extract_eval_features(ex, load_set(c.real), c.feature_scale, c.workers);
  s.generated = &gen;
  s.calibration = calib ? &*calib : nullptr;
  s.debias_a = c.debias_a;
  s.threat_model = ThreatModel(c.threat_norm(), c.eps);
  s.steps = c.steps;
  s.alpha = c.axis == "steps" || c.axis == "eps" ? 0.0 : c.alpha;
  s.step_rule = parse_step_rule(c.step_rule);
  s.eval = {c.is_splits, c.fid_repeats, c.seed};
  s.workers = c.workers;
  s.keep_images = c.axis == "norm";
  std::vector<const Classifier<float>*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  std::vector<AblationRow> rows = ablate(s, c.axis, c.values, ptrs);

  json table = json::array();
  for (const auto& r : rows) table.push_back(r.to_json());
  write_json(out / "ablation.json", {{"axis", c.axis}, {"rows", table}});
  if (c.axis == "norm") {
    const int shown = std::min(gen.size(), 8);
    std::vector<Vec<float>> grid;
    for (int i = 0; i < shown; ++i) grid.push_back(gen.image(i));
    for (std::size_t k = 1; k < rows.size(); ++k)
      for (int i = 0; i < shown; ++i) grid.push_back(rows[k].images->image(i));
    io::write_grid(out / "grid.png", gen.shape, grid, shown, gen.range);
  }
  std::printf("%-12s %6s %8s %6s %12s %10s %10s\n", c.axis.c_str(), "norm", "eps", "T",
              "proxy-FID", "IS", "p after");
  for (const auto& r : rows)
    std::printf("%-12s %6s %8.4f %6d %12.4f %10.4f %10.4f\n", r.value.c_str(), r.norm.c_str(),
                r.epsilon, r.steps, r.metrics.fid, r.metrics.is_mean, r.mean_p_after);
  return kExitOk;
}

int cmd_interpolate(const RunConfig& c) {
  const fs::path out = prepare_out(c, {c.input});
  const Classifier<float> clf = load_model(c.classifier);
  Vec<float> xs, xt;
  if (!c.source.empty() && !c.target.empty()) {
    auto load_one = [&](const std::string& p) {
      io::PngImage img = io::read_png(p, clf.pixel_range());
      detail::require(img.shape == clf.input_shape(), p + " has shape " + img.shape.str());
      return Vec<float>(Eigen::Map<const Eigen::VectorXd>(img.chw.data(), img.chw.size()).cast<float>());
    };
    xs = load_one(c.source);
    xt = load_one(c.target);
  } else {
    const ImageBatch<float> set = load_set(c.input);
    require_compatible(clf, set, "input");
    for (int i : {c.source_index, c.target_index})
      detail::require(i >= 0 && i < set.size(), "image index " + std::to_string(i) + " outside the manifest");
    xs = set.image(c.source_index);
    xt = set.image(c.target_index);
  }
  InterpConfig ic;
  ic.c_schedule = c.schedule;
  ic.steps = c.steps;
  const InterpResult<float> r = interpolate(clf, xs, xt, ic);
  write_json(out / "interp.json", r.to_json());
  std::vector<Vec<float>> strip{xs};
  for (const auto& f : r.frames) strip.push_back(f);
  strip.push_back(xt);
  io::write_grid(out / "strip.png", clf.input_shape(), strip, static_cast<int>(strip.size()),
                 clf.pixel_range());
  std::printf("%-8s %10s %12s %10s\n", "c", "epsilon", "objective", "||delta||");
  std::printf("%-8s %10s %12.6f %10.4f\n", "0", "0", r.start_objective, 0.0);
  for (const auto& f : r.info)
    std::printf("%-8.3f %10.4f %12.6f %10.4f\n", f.c, f.epsilon, f.objective, f.norm);
  return r.flagged > 0 ? kExitPartial : kExitOk;
}

int cmd_check_gradients(const RunConfig& c) {
  const Classifier<double> clf = load_checkpoint<double>(c.classifier);
  GradCheckOptions o;
  o.trials = c.trials;
  o.tolerance = c.tolerance;
  o.seed = c.seed;
  const GradCheckReport r = check_gradients(clf, o);
  const json j = {{"trials", o.trials},
                  {"trial_errors", r.trial_errors},
                  {"max_relative_error", r.max_relative_error},
                  {"tolerance", r.tolerance},
                  {"passed", r.passed}};
  if (!c.out.empty()) {
    const fs::path out = prepare_out(c, {});
    write_json(out / "grad_check.json", j);
  }
  std::cout << "max relative error " << r.max_relative_error << " over " << o.trials
            << " trials: " << (r.passed ? "pass" : "FAIL") << "\n";
  return r.passed ? kExitOk : kExitFatal;
}

int run(RunConfig& c) {
  std::size_t dims = 768;
  if (c.command == "pag-demo" && !c.classifier.empty() && fs::exists(c.classifier))
    dims = load_model(c.classifier).input_shape().size();
  if (!c.preset.empty() && c.eps < 0 && !c.input.empty() && fs::exists(c.input)) {
    const io::Manifest m = io::read_manifest(c.input);
    detail::require(!m.images.empty(), "input manifest is empty");
    const io::PngImage first = io::read_png(m.root / m.images.front().file, m.pixel_range);
    c.eps = preset_epsilon(c.preset, first.shape, m.pixel_range);
  }
  resolve(c, dims);
  if (c.command == "make-dataset") return cmd_make_dataset(c);
  if (c.command == "train-robust") return cmd_train_robust(c);
  if (c.command == "sample-vae") return cmd_sample_vae(c);
  if (c.command == "refine") return cmd_refine(c);
  if (c.command == "evaluate") return cmd_evaluate(c);
  if (c.command == "pag-demo") return cmd_pag_demo(c);
  if (c.command == "ablate") return cmd_ablate(c);
  if (c.command == "interpolate") return cmd_interpolate(c);
  return cmd_check_gradients(c);
}

// --config has to be read before the other flags so that flags override it.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  std::string config_path;
  try {
    config_path = find_config_arg(argc, argv);
    if (!config_path.empty()) cfg = load_run_config(config_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }

  CLI::App app{"Robust-classifier refinement of generated images"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", config_path, "RunConfig JSON file; flags override its fields");
  app.add_option("--seed", cfg.seed, "Random seed");
  app.add_option("--out", cfg.out, "Output directory");
  app.add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto threat = [&](CLI::App* s) {
    s->add_option("--norm", cfg.norm, "Threat-model norm: l2 or linf");
    s->add_option("--eps", cfg.eps, "Threat-model radius");
    s->add_option("--steps", cfg.steps, "PGD steps");
    s->add_option("--alpha", cfg.alpha, "PGD step size");
    s->add_option("--step-rule", cfg.step_rule, "auto, raw, normalized or sign");
    s->add_flag("--return-best", cfg.return_best, "Return the best PGD iterate instead of the last");
  };
  auto metrics = [&](CLI::App* s) {
    s->add_option("--extractor", cfg.extractor, "Feature-extractor checkpoint (default: --standard)");
    s->add_option("--standard", cfg.standard, "Standard checkpoint");
    s->add_option("--is-splits", cfg.is_splits, "Inception-score splits");
    s->add_option("--fid-repeats", cfg.fid_repeats, "Bootstrap repeats for proxy-FID spread");
    s->add_option("--feature-scale", cfg.feature_scale, "Extractor scale used for proxy-FID");
  };
  auto data = [&](CLI::App* s) {
    s->add_option("--input", cfg.input, "Labelled training manifest (default: built-in dataset)");
    s->add_option("--dataset", cfg.dataset, "Built-in dataset name");
    s->add_option("--count", cfg.count, "Built-in dataset size");
    s->add_option("--dataset-seed", cfg.dataset_seed, "Built-in dataset seed");
  };
  auto preset = [&](CLI::App* s) {
    s->add_option("--preset", cfg.preset, "Epsilon preset dataset/generator, rescaled to the input images");
  };
  auto no_debias = [&](CLI::App* s) {
    s->add_option("--calib", cfg.calib, "Calibration manifest for the debias vector");
    s->add_flag("--no-debias{false}", cfg.debias, "Use plain argmax pseudo-labels");
    s->add_option("--debias-a", cfg.debias_a, "Calibration target a");
  };

  auto* mk = app.add_subcommand("make-dataset", "Write the built-in labelled dataset as PNGs");
  mk->add_option("--dataset", cfg.dataset, "Built-in dataset name");
  mk->add_option("--count", cfg.count, "Number of images");
  mk->add_option("--dataset-seed", cfg.dataset_seed, "Dataset seed");

  auto* tr = app.add_subcommand("train-robust", "Adversarially train a classifier (--eps 0: standard)");
  data(tr);
  threat(tr);
  tr->add_option("--epochs", cfg.epochs, "Training epochs");
  tr->add_option("--batch-size", cfg.batch_size, "Minibatch size");
  tr->add_option("--lr", cfg.learning_rate, "Peak learning rate");
  tr->add_option("--width", cfg.width, "Base channel width");

  auto* sv = app.add_subcommand("sample-vae", "Train the tiny VAE and write generated + calibration sets");
  data(sv);
  sv->add_option("--vae-epochs", cfg.vae_epochs, "VAE training epochs");
  sv->add_option("--samples", cfg.samples, "Generated images");
  sv->add_option("--calib-size", cfg.calib_size, "Calibration images (0: none)");

  auto* rf = app.add_subcommand("refine", "Refine a manifest of images with a robust classifier");
  rf->add_option("--classifier", cfg.classifier, "Robust checkpoint");
  rf->add_option("--input", cfg.input, "Manifest of images to refine");
  threat(rf);
  preset(rf);
  no_debias(rf);

  auto* ev = app.add_subcommand("evaluate", "Proxy-FID / IS of generated and boosted sets");
  metrics(ev);
  ev->add_option("--real", cfg.real, "Real-image manifest");
  ev->add_option("--generated", cfg.generated, "Generated-image manifest");
  ev->add_option("--boosted", cfg.boosted, "Boosted-image manifest");

  auto* pg = app.add_subcommand("pag-demo", "Targeted PGD toward every class under robust and standard models");
  pg->add_option("--classifier", cfg.classifier, "Robust checkpoint");
  pg->add_option("--standard", cfg.standard, "Standard checkpoint");
  pg->add_option("--input", cfg.input, "Manifest holding the source image");
  pg->add_option("--image", cfg.image, "Index of the source image");
  pg->add_option("--targets", cfg.targets, "Target classes (default: all)")->delimiter(',');
  threat(pg);

  auto* ab = app.add_subcommand("ablate", "Refinement metrics across one axis");
  ab->add_option("--classifier", cfg.classifier, "Robust checkpoint");
  ab->add_option("--classifiers", cfg.classifiers, "Checkpoints for the classifier-eps axis")->delimiter(',');
  ab->add_option("--input", cfg.input, "Generated-image manifest");
  ab->add_option("--real", cfg.real, "Real-image manifest");
  ab->add_option("--axis", cfg.axis, "steps, eps, classifier-eps or norm");
  ab->add_option("--values", cfg.values, "Axis values")->delimiter(',');
  threat(ab);
  preset(ab);
  metrics(ab);
  no_debias(ab);

  auto* ip = app.add_subcommand("interpolate", "Feature-matching interpolation strip");
  ip->add_option("--classifier", cfg.classifier, "Robust checkpoint");
  ip->add_option("--input", cfg.input, "Manifest holding source and target");
  ip->add_option("--source-index", cfg.source_index, "Source image index");
  ip->add_option("--target-index", cfg.target_index, "Target image index");
  ip->add_option("--source", cfg.source, "Source PNG (instead of a manifest)");
  ip->add_option("--target", cfg.target, "Target PNG (instead of a manifest)");
  ip->add_option("--schedule", cfg.schedule, "Radius fractions c")->delimiter(',');
  ip->add_option("--steps", cfg.steps, "PGD steps per schedule point");

  auto* gc = app.add_subcommand("check-gradients", "Input gradients vs central finite differences");
  gc->add_option("--classifier", cfg.classifier, "Checkpoint");
  gc->add_option("--trials", cfg.trials, "Random trials");
  gc->add_option("--tolerance", cfg.tolerance, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFatal;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  try {
    return run(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}
