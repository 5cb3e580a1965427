#pragma once

// Projected gradient descent over a threat model: the targeted attack used for
// refinement and the untargeted one used as the adversarial-training inner
// maximiser. Both reduce to pgd_minimize over a differentiable objective.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bigroc/classifier.hpp"
#include "bigroc/parallel.hpp"

namespace bigroc {

enum class PGDInit { Zero, UniformBall };

/// How a gradient becomes a step direction.
///   Raw:        delta -= alpha * g
///   Normalized: delta -= alpha * g / ||g||_2
///   Sign:       delta -= alpha * sign(g)
/// Auto picks Raw for l2 and Sign for linf.
enum class StepRule { Auto, Raw, Normalized, Sign };

inline std::string to_string(StepRule r) {
  switch (r) {
    case StepRule::Auto: return "auto";
    case StepRule::Raw: return "raw";
    case StepRule::Normalized: return "normalized";
    case StepRule::Sign: return "sign";
  }
  return "?";
}

inline StepRule parse_step_rule(const std::string& s) {
  if (s == "auto") return StepRule::Auto;
  if (s == "raw") return StepRule::Raw;
  if (s == "normalized") return StepRule::Normalized;
  if (s == "sign") return StepRule::Sign;
  throw InvalidArgument("unknown step rule '" + s + "'");
}

struct PGDConfig {
  double alpha = 0.0;
  int steps = 7;
  PGDInit init = PGDInit::Zero;
  bool return_best_iterate = false;
  std::uint64_t seed = 0;
  StepRule step_rule = StepRule::Auto;

  /// alpha = 1.5 * epsilon / steps.
  static PGDConfig refinement_schedule(double epsilon, int steps = 7) {
    PGDConfig c;
    c.steps = steps;
    c.alpha = steps > 0 ? 1.5 * epsilon / steps : 0.0;
    return c;
  }

  void validate() const {
    detail::require(steps >= 0, "PGD steps must be >= 0");
    detail::require(std::isfinite(alpha) && (steps == 0 || alpha > 0.0),
                    "PGD step size alpha must be > 0 when steps > 0");
  }

  StepRule resolved_rule(Norm n) const {
    if (step_rule != StepRule::Auto) return step_rule;
    return n == Norm::L2 ? StepRule::Raw : StepRule::Sign;
  }
};

struct PGDTrace {
  std::vector<double> losses;  // objective at iterates 0..T (T + 1 entries unless aborted)
  std::vector<double> norms;   // ||delta_t|| in the threat-model norm, same indexing
  double final_norm = 0.0;     // norm of (returned image - input)
  int returned_iterate = 0;
  bool aborted = false;
  std::string message;
};

/// Minimised objective: returns f(x) and, when grad is non-null, writes df/dx.
template <class T>
using Objective = std::function<double(const Vec<T>& x, Vec<T>* grad)>;

namespace detail {

template <class T>
void apply_step(StepRule rule, double alpha, const Vec<T>& g, Vec<T>& delta) {
  switch (rule) {
    case StepRule::Raw:
      delta -= static_cast<T>(alpha) * g;
      break;
    case StepRule::Normalized: {
      // Rescale by the largest entry first so tiny gradients do not underflow.
      const double m = static_cast<double>(g.cwiseAbs().maxCoeff());
      if (m == 0.0) break;
      const Eigen::VectorXd u = g.template cast<double>() / m;
      delta -= (alpha / u.norm() * u).template cast<T>();
      break;
    }
    case StepRule::Sign:
      delta -= static_cast<T>(alpha) * g.unaryExpr([](T v) { return T((v > 0) - (v < 0)); });
      break;
    case StepRule::Auto:
      throw InvalidArgument("unresolved step rule");
  }
}

template <class T>
Vec<T> random_in_ball(const ThreatModel& tm, Eigen::Index d, std::mt19937_64& rng) {
  Vec<T> v(d);
  if (tm.norm == Norm::Linf) {
    std::uniform_real_distribution<double> u(-tm.epsilon, tm.epsilon);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = static_cast<T>(u(rng));
    return v;
  }
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = static_cast<T>(nd(rng));
  const double n = v.template cast<double>().norm();
  const double r = tm.epsilon * std::pow(u(rng), 1.0 / static_cast<double>(d));
  if (n > 0.0) v *= static_cast<T>(r / n);
  return v;
}

// delta <- clamp(x + delta) - x, i.e. the perturbation that is actually applied.
template <class T>
Vec<T> apply_clamped(const Vec<T>& x, Vec<T>& delta, const PixelRange& range) {
  Vec<T> xt = x + delta;
  clamp_to_range_inplace<T>(nn::as_span(xt), range);
  delta = xt - x;
  return xt;
}

}  // namespace detail

/// Projected gradient descent on `f` starting from x + delta0 (zero or random,
/// or `warm_start` when given). Every iterate is projected onto the threat
/// model and then clamped to the pixel range.
template <class T>
std::pair<Vec<T>, PGDTrace> pgd_minimize(const Objective<T>& f, const Vec<T>& x,
                                         const ThreatModel& tm, const PixelRange& range,
                                         const PGDConfig& cfg_in, const Vec<T>* warm_start = nullptr) {
  // An epsilon-0 ball is a single point: nothing to iterate, so alpha is moot.
  PGDConfig cfg = cfg_in;
  if (tm.epsilon == 0.0) cfg.steps = 0;
  cfg.validate();
  bigroc::detail::require_finite<T>(nn::as_span(x), "pgd input");
  const StepRule rule = cfg.resolved_rule(tm.norm);
  PGDTrace trace;

  Vec<T> delta = Vec<T>::Zero(x.size());
  if (warm_start) {
    bigroc::detail::require(warm_start->size() == x.size(), "warm start has the wrong size");
    delta = *warm_start;
  } else if (cfg.init == PGDInit::UniformBall && tm.epsilon > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    delta = detail::random_in_ball<T>(tm, x.size(), rng);
  }
  project_inplace<T>(tm, nn::as_span(delta));
  Vec<T> xt = detail::apply_clamped(x, delta, range);

  Vec<T> best_x = xt;
  double best_loss = std::numeric_limits<double>::infinity();
  Vec<T> last_good = xt;
  int last_good_iter = 0;
  Vec<T> grad;

  auto record = [&](int t, double loss) {
    trace.losses.push_back(loss);
    trace.norms.push_back(norm_of<T>(tm.norm, nn::as_span(delta)));
    last_good = xt;
    last_good_iter = t;
    if (loss < best_loss) {
      best_loss = loss;
      best_x = xt;
      trace.returned_iterate = t;
    }
  };

  for (int t = 0; t <= cfg.steps; ++t) {
    const bool need_grad = t < cfg.steps;
    double loss;
    try {
      loss = f(xt, need_grad ? &grad : nullptr);
      if (!std::isfinite(loss)) throw NonFiniteError("non-finite objective", -1);
      if (need_grad && !grad.allFinite()) throw NonFiniteError("non-finite gradient", -1);
    } catch (const NonFiniteError& e) {
      trace.aborted = true;
      trace.message = "iteration " + std::to_string(t) + ": " + e.what();
      break;
    }
    record(t, loss);
    if (!need_grad) break;
    detail::apply_step(rule, cfg.alpha, grad, delta);
    if (!delta.allFinite()) {
      trace.aborted = true;
      trace.message = "iteration " + std::to_string(t) + ": step produced a non-finite perturbation";
      break;
    }
    project_inplace<T>(tm, nn::as_span(delta));
    xt = detail::apply_clamped(x, delta, range);
  }

  Vec<T> out;
  if (trace.aborted) {
    out = last_good;
    trace.returned_iterate = last_good_iter;
  } else if (cfg.return_best_iterate) {
    out = best_x;
  } else {
    out = last_good;
    trace.returned_iterate = cfg.steps;
  }
  const Vec<T> applied = out - x;
  trace.final_norm = norm_of<T>(tm.norm, nn::as_span(applied));
  return {std::move(out), std::move(trace)};
}

/// Descent on the cross-entropy of class `target` (= ascent on its probability).
template <class T>
std::pair<Vec<T>, PGDTrace> targeted_pgd(const Classifier<T>& clf, const Vec<T>& x, int target,
                                         const ThreatModel& tm, const PGDConfig& cfg) {
  clf.check_input(x);
  clf.check_label(target);
  Objective<T> f = [&](const Vec<T>& xi, Vec<T>* g) {
    if (g) return clf.loss_and_input_gradient(xi, target, *g);
    return nn::cross_entropy(clf.logits(xi), target);
  };
  return pgd_minimize<T>(f, x, tm, clf.pixel_range(), cfg);
}

/// Ascent on the cross-entropy of the true class. Trace losses hold that
/// cross-entropy (so they increase); the best iterate is the one maximising it.
template <class T>
std::pair<Vec<T>, PGDTrace> untargeted_pgd(const Classifier<T>& clf, const Vec<T>& x, int y_true,
                                           const ThreatModel& tm, const PGDConfig& cfg) {
  clf.check_input(x);
  clf.check_label(y_true);
  Objective<T> f = [&](const Vec<T>& xi, Vec<T>* g) {
    if (g) {
      const double l = clf.loss_and_input_gradient(xi, y_true, *g);
      *g = -*g;
      return -l;
    }
    return -nn::cross_entropy(clf.logits(xi), y_true);
  };
  auto res = pgd_minimize<T>(f, x, tm, clf.pixel_range(), cfg);
  for (double& l : res.second.losses) l = -l;
  return res;
}

/// Per-image seed derived from a base seed, independent of batch partitioning.
inline std::uint64_t image_seed(std::uint64_t base, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

template <class T>
struct BatchAttackResult {
  ImageBatch<T> images;
  std::vector<PGDTrace> traces;
};

namespace detail {

template <class T, class Attack>
BatchAttackResult<T> attack_batch(const ImageBatch<T>& batch, const std::vector<int>& labels,
                                  const PGDConfig& cfg, int workers, Attack&& attack) {
  bigroc::detail::require(static_cast<int>(labels.size()) == batch.size(),
                          "attack: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(batch.size()) + " images");
  BatchAttackResult<T> res{batch, std::vector<PGDTrace>(batch.size())};
  parallel_for(batch.size(), workers, [&](int i) {
    PGDConfig c = cfg;
    c.seed = image_seed(cfg.seed, i);
    auto [xo, tr] = attack(batch.image(i), labels[i], c);
    res.images.pixels.col(i) = xo;
    res.traces[i] = std::move(tr);
  });
  return res;
}

}  // namespace detail

template <class T>
BatchAttackResult<T> targeted_pgd_batch(const Classifier<T>& clf, const ImageBatch<T>& batch,
                                        const std::vector<int>& targets, const ThreatModel& tm,
                                        const PGDConfig& cfg, int workers = 1) {
  return detail::attack_batch(batch, targets, cfg, workers,
                              [&](const Vec<T>& x, int y, const PGDConfig& c) {
                                return targeted_pgd(clf, x, y, tm, c);
                              });
}

template <class T>
BatchAttackResult<T> untargeted_pgd_batch(const Classifier<T>& clf, const ImageBatch<T>& batch,
                                          const std::vector<int>& labels, const ThreatModel& tm,
                                          const PGDConfig& cfg, int workers = 1) {
  return detail::attack_batch(batch, labels, cfg, workers,
                              [&](const Vec<T>& x, int y, const PGDConfig& c) {
                                return untargeted_pgd(clf, x, y, tm, c);
                              });
}

}  // namespace bigroc
