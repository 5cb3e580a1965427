#pragma once

// In-memory experiment drivers shared by the command-line tool and the
// acceptance harness: PAG demonstration, refine-and-score and ablation axes.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bigroc/metrics.hpp"
#include "bigroc/refiner.hpp"

namespace bigroc {

/// Linear-interpolation quantile of `v` (q in [0, 1]).
inline double quantile(std::vector<double> v, double q) {
  detail::require(!v.empty(), "quantile: empty input");
  detail::require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---- PAG demonstration ------------------------------------------------------

struct PagCell {
  int target = 0;
  double p = 0.0;     // final target probability
  double norm = 0.0;  // achieved ||delta||_2
  bool aborted = false;
  Vec<float> image;
};

struct PagDemoResult {
  ThreatModel threat_model;
  PGDConfig pgd;
  std::vector<PagCell> robust;
  std::vector<PagCell> standard;  // empty when no standard model was given

  static nn::json cells_json(const std::vector<PagCell>& cells) {
    nn::json a = nn::json::array();
    for (const auto& c : cells)
      a.push_back({{"target", c.target}, {"p", c.p}, {"norm", c.norm}, {"aborted", c.aborted}});
    return a;
  }

  double min_robust_p() const {
    double m = 1.0;
    for (const auto& c : robust) m = std::min(m, c.p);
    return m;
  }
  double mean_standard_norm() const {
    double s = 0.0;
    for (const auto& c : standard) s += c.norm / standard.size();
    return s;
  }

  nn::json to_json() const {
    nn::json j = {{"epsilon", threat_model.epsilon},
                  {"norm", std::string(to_string(threat_model.norm))},
                  {"steps", pgd.steps},
                  {"alpha", pgd.alpha},
                  {"step_rule", to_string(pgd.resolved_rule(threat_model.norm))},
                  {"robust", cells_json(robust)},
                  {"min_robust_p", min_robust_p()}};
    if (!standard.empty()) {
      j["standard"] = cells_json(standard);
      j["mean_standard_norm"] = mean_standard_norm();
    }
    return j;
  }
};

/// Targeted PGD from `x` toward each target class, under the robust model and
/// (when given) the standard one.
inline PagDemoResult pag_demo(const Classifier<float>& robust, const Classifier<float>* standard,
                              const Vec<float>& x, const std::vector<int>& targets,
                              const ThreatModel& tm, const PGDConfig& cfg, int workers = 1) {
  detail::require(!targets.empty(), "pag_demo: no target classes");
  PagDemoResult res;
  res.threat_model = tm;
  res.pgd = cfg;
  auto run = [&](const Classifier<float>& clf, std::vector<PagCell>& out) {
    out.resize(targets.size());
    for (int t : targets) clf.check_label(t);
    parallel_for(static_cast<int>(targets.size()), workers, [&](int k) {
      auto [xo, tr] = targeted_pgd(clf, x, targets[k], tm, cfg);
      out[k] = {targets[k], nn::softmax(clf.logits(xo))[targets[k]], tr.final_norm, tr.aborted,
                std::move(xo)};
    });
  };
  run(robust, res.robust);
  if (standard) run(*standard, res.standard);
  return res;
}

// ---- refine and score -------------------------------------------------------

struct AblationRow {
  std::string axis;
  std::string value;
  std::string norm;
  double epsilon = 0.0;
  int steps = 0;
  double alpha = 0.0;
  double classifier_epsilon = 0.0;
  MetricsReport metrics;
  double mean_p_before = 0.0;
  double mean_p_after = 0.0;
  double max_norm = 0.0;
  int failures = 0;
  std::optional<ImageBatch<float>> images;  // kept only when requested

  nn::json to_json() const {
    return {{"axis", axis},
            {"value", value},
            {"norm", norm},
            {"epsilon", epsilon},
            {"steps", steps},
            {"alpha", alpha},
            {"classifier_epsilon", classifier_epsilon},
            {"fid", metrics.fid},
            {"fid_std", metrics.fid_std},
            {"is_mean", metrics.is_mean},
            {"is_std", metrics.is_std},
            {"chi_square", metrics.chi_square},
            {"mean_p_before", mean_p_before},
            {"mean_p_after", mean_p_after},
            {"max_norm", max_norm},
            {"failures", failures}};
  }
};

/// Everything a refinement sweep holds fixed.
struct RefineSetup {
  const Classifier<float>* classifier = nullptr;
  const Classifier<float>* extractor = nullptr;
  FeatureSet real;                          // extractor features of the real set
  const ImageBatch<float>* generated = nullptr;
  const ImageBatch<float>* calibration = nullptr;  // null: no debiasing
  double debias_a = 1.0;
  ThreatModel threat_model{Norm::L2, 1.0};
  int steps = 7;
  double alpha = 0.0;                       // 0: refinement schedule 1.5 * eps / steps
  StepRule step_rule = StepRule::Auto;
  EvalOptions eval;
  int workers = 1;
  bool keep_images = false;
};

inline PGDConfig refine_pgd(double eps, int steps, double alpha, StepRule rule) {
  PGDConfig c = alpha > 0.0 ? PGDConfig{} : PGDConfig::refinement_schedule(eps, steps);
  if (alpha > 0.0) {
    c.steps = steps;
    c.alpha = alpha;
  }
  c.step_rule = rule;
  return c;
}

/// Metrics of the unrefined generated set, as an axis baseline row.
inline AblationRow score_generated(const RefineSetup& s, const std::string& axis) {
  AblationRow row;
  row.axis = axis;
  row.value = "generated";
  row.metrics = evaluate_against(
      s.real, extract_eval_features(*s.extractor, *s.generated, s.real.scale, s.workers), s.eval);
  return row;
}

/// Refines the generated set with the given classifier / threat model / steps
/// and scores the result against the real set.
inline AblationRow refine_and_score(const RefineSetup& s, const Classifier<float>& clf,
                                    const ThreatModel& tm, int steps, double alpha,
                                    std::vector<double>* linf_norms = nullptr) {
  detail::require(s.extractor && s.generated, "refine_and_score: incomplete setup");
  std::optional<DebiasVector> d;
  if (s.calibration)
    d = compute_debias_vector(clf, *s.calibration, s.debias_a, s.workers);
  const PGDConfig cfg = refine_pgd(tm.epsilon, steps, alpha, s.step_rule);
  auto b = boost(clf, *s.generated, nullptr, tm, cfg, d ? &*d : nullptr, s.workers);
  AblationRow row;
  row.norm = std::string(to_string(tm.norm));
  row.epsilon = tm.epsilon;
  row.steps = cfg.steps;
  row.alpha = cfg.alpha;
  if (clf.training_threat_model()) row.classifier_epsilon = clf.training_threat_model()->epsilon;
  row.metrics = evaluate_against(
      s.real, extract_eval_features(*s.extractor, b.images, s.real.scale, s.workers), s.eval);
  row.mean_p_before = b.report.mean_p_before;
  row.mean_p_after = b.report.mean_p_after;
  row.max_norm = b.report.max_norm;
  row.failures = b.report.failures;
  if (linf_norms) {
    linf_norms->resize(b.images.size());
    for (int i = 0; i < b.images.size(); ++i) {
      const Vec<float> delta = b.images.image(i) - s.generated->image(i);
      (*linf_norms)[i] = linf_norm<float>(nn::as_span(delta));
    }
  }
  if (s.keep_images) row.images = std::move(b.images);
  return row;
}

/// Quantile of per-image linf perturbation norms used to match an linf budget
/// to an l2 refinement.
inline constexpr double kMatchedBudgetQuantile = 0.7;

/// One refinement per axis value, preceded by the unrefined baseline row.
///   steps:          values are step counts T (alpha follows 1.5 * eps / T)
///   eps:            values are l2 / linf radii
///   classifier-eps: values index `classifiers` (row reports each sidecar epsilon)
///   norm:           values "l2" / "linf"; the linf radius is the 0.7 quantile of
///                   the per-image linf norms of the l2 refinement
inline std::vector<AblationRow> ablate(const RefineSetup& s, const std::string& axis,
                                       const std::vector<std::string>& values,
                                       const std::vector<const Classifier<float>*>& classifiers = {}) {
  detail::require(s.classifier || !classifiers.empty(), "ablate: no classifier");
  detail::require(!values.empty(), "ablate: no axis values");
  std::vector<AblationRow> rows{score_generated(s, axis)};
  auto num = [](const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("ablate: axis value '" + v + "' is not a number");
  };
  if (axis == "steps") {
    for (const auto& v : values) {
      const double t = num(v);
      detail::require(t >= 1 && t == std::floor(t), "ablate: steps values must be integers >= 1");
      rows.push_back(refine_and_score(s, *s.classifier, s.threat_model, static_cast<int>(t), 0.0));
    }
  } else if (axis == "eps") {
    for (const auto& v : values)
      rows.push_back(refine_and_score(s, *s.classifier, ThreatModel(s.threat_model.norm, num(v)),
                                      s.steps, 0.0));
  } else if (axis == "classifier-eps") {
    for (const auto& v : values) {
      const double k = num(v);
      detail::require(k >= 0 && k < static_cast<double>(classifiers.size()) && k == std::floor(k),
                      "ablate: classifier-eps values index the supplied classifiers");
      rows.push_back(refine_and_score(s, *classifiers[static_cast<std::size_t>(k)], s.threat_model,
                                      s.steps, s.alpha));
    }
  } else if (axis == "norm") {
    std::vector<double> linf;
    AblationRow l2 = refine_and_score(s, *s.classifier, ThreatModel(Norm::L2, s.threat_model.epsilon),
                                      s.steps, s.alpha, &linf);
    const double budget = quantile(linf, kMatchedBudgetQuantile);
    for (const auto& v : values) {
      const Norm n = parse_norm(v);
      if (n == Norm::L2) {
        rows.push_back(l2);
      } else {
        rows.push_back(refine_and_score(s, *s.classifier, ThreatModel(Norm::Linf, budget), s.steps,
                                        s.alpha > 0.0 ? s.alpha * budget / s.threat_model.epsilon : 0.0));
      }
    }
  } else {
    throw InvalidArgument("ablate: unknown axis '" + axis +
                          "' (expected steps, eps, classifier-eps or norm)");
  }
  for (auto& r : rows) r.axis = axis;
  for (std::size_t i = 1; i < rows.size(); ++i) rows[i].value = values[i - 1];
  return rows;
}

}  // namespace bigroc
