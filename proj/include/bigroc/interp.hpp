#pragma once

// Interpolation between two images by matching the target's multi-scale
// classifier features inside growing l2 balls around the source.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bigroc/classifier.hpp"
#include "bigroc/pgd.hpp"

namespace bigroc {

struct InterpConfig {
  std::vector<std::string> scales;   // empty: every declared network scale
  std::vector<double> weights;       // empty: uniform 1/k
  std::vector<double> c_schedule{0.25, 0.5, 1.0};
  int steps = 30;
  double alpha_factor = 2.5;         // alpha = alpha_factor * epsilon / steps
  StepRule step_rule = StepRule::Normalized;
  bool warm_start = true;

  void validate() const {
    detail::require(!c_schedule.empty(), "interpolate: empty c schedule");
    for (std::size_t i = 0; i < c_schedule.size(); ++i) {
      detail::require(c_schedule[i] > 0.0 && c_schedule[i] <= 1.0,
                      "interpolate: schedule values must lie in (0, 1]");
      if (i > 0)
        detail::require(c_schedule[i] > c_schedule[i - 1],
                        "interpolate: schedule must be strictly increasing");
    }
    detail::require(steps >= 0, "interpolate: steps must be >= 0");
    detail::require(alpha_factor > 0.0, "interpolate: alpha_factor must be positive");
  }
};

/// Resolved scale list and weights for `clf` (defaults filled in, checked).
template <class T>
std::pair<std::vector<std::string>, std::vector<double>> resolve_feature_weights(
    const Classifier<T>& clf, const std::vector<std::string>& scales,
    const std::vector<double>& weights) {
  std::vector<std::string> s = scales.empty() ? clf.network().scale_names() : scales;
  detail::require(!s.empty(), "feature objective: classifier declares no feature scales");
  for (const auto& name : s) clf.act_index(name);
  std::vector<double> w = weights;
  if (w.empty()) w.assign(s.size(), 1.0 / static_cast<double>(s.size()));
  detail::require(w.size() == s.size(), "feature objective: " + std::to_string(w.size()) +
                                            " weights for " + std::to_string(s.size()) + " scales");
  for (double v : w)
    detail::require(std::isfinite(v) && v >= 0.0, "feature objective: weights must be >= 0");
  return {s, w};
}

/// sum_i w_i * ||F_i(x) - F_i(x_t)||_2 over the given scales.
template <class T>
double feature_objective(const Classifier<T>& clf, const Vec<T>& x, const Vec<T>& x_t,
                         const std::vector<double>& weights,
                         const std::vector<std::string>& scales = {}) {
  auto [s, w] = resolve_feature_weights(clf, scales, weights);
  const auto fx = clf.extract_features(x, s);
  const auto ft = clf.extract_features(x_t, s);
  double v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    v += w[i] * (fx.features[i] - ft.features[i]).template cast<double>().norm();
  return v;
}

namespace detail {

// Objective with its input gradient: gradients w_i (F_i - t_i) / ||F_i - t_i||
// are injected at each scale's activation and pulled back in one VJP.
template <class T>
Objective<T> feature_matching_objective(const Classifier<T>& clf, const std::vector<std::string>& s,
                                        const std::vector<double>& w, const Vec<T>& x_t) {
  std::vector<std::size_t> idx;
  for (const auto& name : s) idx.push_back(clf.act_index(name));
  const FeatureStack<T> target = clf.extract_features(x_t, s);
  return [&clf, idx, w, target](const Vec<T>& x, Vec<T>* grad) {
    nn::Tape<T> tape;
    clf.forward_tape(x, tape, grad ? nn::Pass::InputGrad : nn::Pass::Inference);
    double v = 0.0;
    std::vector<Vec<T>> inject(tape.acts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Vec<T> diff = tape.acts[idx[i]] - target.features[i];
      const double n = diff.template cast<double>().norm();
      v += w[i] * n;
      if (grad && n > 0.0 && w[i] > 0.0) {
        Vec<T> g = diff * static_cast<T>(w[i] / n);
        if (inject[idx[i]].size() == 0)
          inject[idx[i]] = std::move(g);
        else
          inject[idx[i]] += g;
      }
    }
    if (grad) *grad = clf.network().vjp(tape, inject);
    return v;
  };
}

}  // namespace detail

struct InterpFrame {
  double c = 0.0;
  double epsilon = 0.0;
  double objective = 0.0;
  double norm = 0.0;  // ||frame - x_s||_2
  PGDTrace trace;
};

template <class T>
struct InterpResult {
  std::vector<Vec<T>> frames;  // one per schedule point
  std::vector<InterpFrame> info;
  double start_objective = 0.0;  // objective at x_s
  int flagged = 0;

  nn::json to_json() const {
    nn::json pts = nn::json::array();
    for (const auto& f : info)
      pts.push_back({{"c", f.c},
                     {"epsilon", f.epsilon},
                     {"objective", f.objective},
                     {"norm", f.norm},
                     {"aborted", f.trace.aborted},
                     {"returned_iterate", f.trace.returned_iterate}});
    return {{"start_objective", start_objective}, {"points", pts}, {"flagged", flagged}};
  }
};

/// For each c in the schedule, minimises the feature objective toward x_t
/// within the l2 ball of radius c * ||x_t - x_s|| around x_s, keeping the best
/// iterate. In warm-start mode each point starts from the previous solution.
template <class T>
InterpResult<T> interpolate(const Classifier<T>& clf, const Vec<T>& x_s, const Vec<T>& x_t,
                            const InterpConfig& cfg) {
  cfg.validate();
  clf.check_input(x_s);
  clf.check_input(x_t);
  auto [s, w] = resolve_feature_weights(clf, cfg.scales, cfg.weights);
  detail::require(std::any_of(w.begin(), w.end(), [](double v) { return v > 0.0; }),
                  "interpolate: at least one weight must be positive");
  const Objective<T> f = detail::feature_matching_objective(clf, s, w, x_t);
  const double dist = static_cast<double>((x_t - x_s).template cast<double>().norm());

  InterpResult<T> res;
  res.start_objective = f(x_s, nullptr);
  Vec<T> warm = Vec<T>::Zero(x_s.size());
  for (double c : cfg.c_schedule) {
    InterpFrame fr;
    fr.c = c;
    fr.epsilon = c * dist;
    PGDConfig pc;
    pc.steps = cfg.steps;
    pc.alpha = cfg.steps > 0 && fr.epsilon > 0 ? cfg.alpha_factor * fr.epsilon / cfg.steps : 0.0;
    if (pc.steps > 0 && pc.alpha == 0.0) pc.steps = 0;
    pc.return_best_iterate = true;
    pc.step_rule = cfg.step_rule;
    const ThreatModel tm(Norm::L2, fr.epsilon);
    auto [out, tr] = pgd_minimize<T>(f, x_s, tm, clf.pixel_range(), pc,
                                     cfg.warm_start ? &warm : nullptr);
    fr.objective = tr.losses.empty() ? f(out, nullptr) : tr.losses[tr.returned_iterate];
    // The previous frame lies inside this larger ball. Re-adding its delta to
    // x_s can round to a slightly worse image, so keep the frame itself then.
    if (cfg.warm_start && !res.frames.empty() && fr.objective > res.info.back().objective) {
      out = res.frames.back();
      fr.objective = res.info.back().objective;
    }
    const Vec<T> delta = out - x_s;
    fr.norm = l2_norm<T>(nn::as_span(delta));
    fr.trace = std::move(tr);
    res.flagged += fr.trace.aborted;
    if (cfg.warm_start) warm = delta;
    res.frames.push_back(std::move(out));
    res.info.push_back(std::move(fr));
  }
  return res;
}

}  // namespace bigroc
