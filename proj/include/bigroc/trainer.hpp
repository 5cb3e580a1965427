#pragma once

// Adversarial training (min over parameters of the loss at the worst-case
// perturbation found by untargeted PGD) and robustness measurement.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bigroc/classifier.hpp"
#include "bigroc/parallel.hpp"
#include "bigroc/pgd.hpp"

namespace bigroc {

struct OptimizerConfig {
  std::string kind = "adam";         // "adam" or "sgd" (momentum 0.9)
  double learning_rate = 2e-3;
  std::string schedule = "cosine";   // "cosine" or "constant"
  double weight_decay = 0.0;

  void validate() const {
    detail::require(kind == "adam" || kind == "sgd", "optimizer kind must be adam or sgd");
    detail::require(schedule == "cosine" || schedule == "constant",
                    "learning-rate schedule must be cosine or constant");
    detail::require(learning_rate > 0.0 && std::isfinite(learning_rate),
                    "learning rate must be positive");
  }
};

struct TrainConfig {
  std::string dataset = "shapes10";
  int epochs = 10;
  int batch_size = 64;
  OptimizerConfig optimizer;
  ThreatModel attack{Norm::L2, 0.0};
  PGDConfig attack_pgd;   // inner maximisation; steps = 7 by default
  std::uint64_t seed = 0;
  int workers = 1;

  /// Inner attack with step 0.2 * epsilon and normalised l2 (sign linf) steps.
  static PGDConfig default_inner_attack(const ThreatModel& tm, int steps = 7) {
    PGDConfig c;
    c.steps = steps;
    c.alpha = tm.epsilon > 0.0 ? 0.2 * tm.epsilon : 0.0;
    c.step_rule = tm.norm == Norm::L2 ? StepRule::Normalized : StepRule::Sign;
    return c;
  }

  bool attack_active() const { return attack.epsilon > 0.0 && attack_pgd.steps > 0; }

  void validate() const {
    detail::require(epochs >= 1, "epochs must be >= 1");
    detail::require(batch_size >= 1, "batch size must be >= 1");
    optimizer.validate();
    if (attack_active()) attack_pgd.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;       // mean training loss on (attacked) minibatch inputs
  double clean_acc = 0.0;  // on the clean minibatch inputs, before the update
  double adv_acc = 0.0;    // on the attacked minibatch inputs, before the update
  int inner_steps_min = 0;
  int inner_steps_max = 0;

  nn::json to_json() const {
    return {{"epoch", epoch},         {"loss", loss},
            {"clean_acc", clean_acc}, {"adv_acc", adv_acc},
            {"inner_steps_min", inner_steps_min}, {"inner_steps_max", inner_steps_max}};
  }
};

struct TrainResult {
  Classifier<float> classifier;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string message;
};

namespace detail {

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& c, std::size_t n) : c_(c), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<float>& p, const std::vector<double>& g, double lr) {
    ++t_;
    if (c_.kind == "adam") {
      const double b1 = 0.9, b2 = 0.999, e = 1e-8;
      const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + c_.weight_decay * p[i];
        m_[i] = b1 * m_[i] + (1 - b1) * gi;
        v_[i] = b2 * v_[i] + (1 - b2) * gi * gi;
        p[i] = static_cast<float>(p[i] - lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + e));
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + c_.weight_decay * p[i];
        m_[i] = 0.9 * m_[i] + gi;
        p[i] = static_cast<float>(p[i] - lr * m_[i]);
      }
    }
  }

 private:
  OptimizerConfig c_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

inline double scheduled_lr(const OptimizerConfig& c, long step, long total) {
  if (c.schedule == "constant" || total <= 1) return c.learning_rate;
  return 0.5 * c.learning_rate * (1.0 + std::cos(M_PI * static_cast<double>(step) / total));
}

}  // namespace detail

/// Cross-entropy at x and its gradient w.r.t. the parameters (accumulated into gparams).
template <class T>
double loss_and_param_gradient(const Classifier<T>& clf, const Vec<T>& x, int y, T* gparams,
                               int* predicted = nullptr) {
  nn::Tape<T> tape;
  clf.forward_tape(x, tape, nn::Pass::ParamGrad);
  if (!tape.output().allFinite()) throw NonFiniteError("non-finite logits during training", -1);
  if (predicted) *predicted = nn::argmax(tape.output());
  Vec<T> gz;
  const double loss = nn::cross_entropy_grad(tape.output(), y, gz);
  clf.network().backward(tape, gz, gparams);
  return loss;
}

/// Trains `init` on labelled `data`. Every minibatch loss is taken at the
/// untargeted-PGD perturbation of its inputs (skipped when epsilon or steps is
/// zero, which is exactly standard training). Per-image gradients are summed in
/// index order, so results do not depend on the worker count.
///
/// When `out_dir` is given, a checkpoint is written after every epoch and the
/// per-epoch log is appended to train_log.jsonl. On divergence training stops
/// and the parameters of the last completed epoch are kept.
inline TrainResult adversarial_train(Classifier<float> init, const ImageBatch<float>& data,
                                     const TrainConfig& cfg,
                                     const std::optional<std::filesystem::path>& out_dir = {}) {
  cfg.validate();
  data.validate();
  detail::require(data.has_labels(), "adversarial_train: data must be labelled");
  detail::require(data.shape == init.input_shape(), "adversarial_train: data shape " +
                                                        data.shape.str() + " does not match " +
                                                        init.input_shape().str());
  {
    std::vector<int> seen(init.class_count(), 0);
    for (int y : data.labels) {
      init.check_label(y);
      seen[y] = 1;
    }
    detail::require(std::accumulate(seen.begin(), seen.end(), 0) >= 2,
                    "adversarial_train: need at least two classes in the data");
  }

  TrainResult res{std::move(init), {}, false, {}};
  Classifier<float>& clf = res.classifier;
  clf.set_training_threat_model(cfg.attack);
  auto& params = clf.network().params();
  const std::size_t np = params.size();
  detail::Optimizer opt(cfg.optimizer, np);
  std::vector<float> last_good = params;

  std::ofstream log_file;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log_file.open(*out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (*out_dir / "train_log.jsonl").string());
  }

  const int n = data.size();
  const int bs = std::min(cfg.batch_size, n);
  const long batches_per_epoch = (n + bs - 1) / bs;
  const long total_steps = batches_per_epoch * cfg.epochs;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> per_image(bs, std::vector<float>(np));
  std::vector<double> loss_i(bs), gsum(np);
  std::vector<int> clean_ok(bs), adv_ok(bs), steps_run(bs);
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.inner_steps_min = std::numeric_limits<int>::max();
    double loss_sum = 0.0;
    long clean_sum = 0, adv_sum = 0;
    for (long b = 0; b < batches_per_epoch && !res.diverged; ++b, ++step) {
      const int begin = static_cast<int>(b * bs);
      const int m = std::min(bs, n - begin);
      try {
        parallel_for(m, cfg.workers, [&](int k) {
          const int idx = order[begin + k];
          const Vec<float> x = data.image(idx);
          const int y = data.labels[idx];
          Vec<float> xa = x;
          steps_run[k] = 0;
          if (cfg.attack_active()) {
            PGDConfig c = cfg.attack_pgd;
            c.seed = image_seed(cfg.seed ^ static_cast<std::uint64_t>(step), k);
            auto [adv, tr] = untargeted_pgd(clf, x, y, cfg.attack, c);
            if (tr.aborted) throw NonFiniteError("inner attack aborted: " + tr.message, idx);
            xa = std::move(adv);
            steps_run[k] = static_cast<int>(tr.losses.size()) - 1;
            clean_ok[k] = nn::argmax(clf.logits(x)) == y;
          }
          std::fill(per_image[k].begin(), per_image[k].end(), 0.0f);
          int pred = -1;
          loss_i[k] = loss_and_param_gradient(clf, xa, y, per_image[k].data(), &pred);
          adv_ok[k] = pred == y;
          if (!cfg.attack_active()) clean_ok[k] = adv_ok[k];
        });
      } catch (const NonFiniteError& e) {
        res.diverged = true;
        res.message = "epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b) + ": " +
                      e.what();
        break;
      }
      std::fill(gsum.begin(), gsum.end(), 0.0);
      double bl = 0.0;
      for (int k = 0; k < m; ++k) {
        bl += loss_i[k];
        clean_sum += clean_ok[k];
        adv_sum += adv_ok[k];
        rec.inner_steps_min = std::min(rec.inner_steps_min, steps_run[k]);
        rec.inner_steps_max = std::max(rec.inner_steps_max, steps_run[k]);
        for (std::size_t i = 0; i < np; ++i) gsum[i] += per_image[k][i];
      }
      if (!std::isfinite(bl)) {
        res.diverged = true;
        res.message = "epoch " + std::to_string(epoch + 1) + ": non-finite loss";
        break;
      }
      for (double& g : gsum) g /= m;
      loss_sum += bl;
      opt.step(params, gsum, detail::scheduled_lr(cfg.optimizer, step, total_steps));
      if (!std::all_of(params.begin(), params.end(), [](float v) { return std::isfinite(v); })) {
        res.diverged = true;
        res.message = "epoch " + std::to_string(epoch + 1) + ": parameters became non-finite";
      }
    }
    if (res.diverged) break;
    rec.loss = loss_sum / n;
    rec.clean_acc = static_cast<double>(clean_sum) / n;
    rec.adv_acc = static_cast<double>(adv_sum) / n;
    res.log.push_back(rec);
    last_good = params;
    if (out_dir) {
      log_file << rec.to_json().dump() << "\n" << std::flush;
      save_checkpoint(clf, *out_dir);
    }
  }
  if (res.diverged) {
    params = last_good;
    if (out_dir) {
      log_file << nn::json{{"diverged", true}, {"message", res.message}}.dump() << "\n";
      save_checkpoint(clf, *out_dir);
    }
  }
  return res;
}

struct AccuracyReport {
  double clean_acc = 0.0;
  double adv_acc = 0.0;
  int count = 0;
  ThreatModel threat_model;
  int steps = 0;
  int aborted = 0;

  nn::json to_json() const {
    return {{"clean_acc", clean_acc},
            {"adv_acc", adv_acc},
            {"count", count},
            {"threat_model", {{"norm", std::string(to_string(threat_model.norm))},
                              {"epsilon", threat_model.epsilon}}},
            {"steps", steps},
            {"aborted", aborted}};
  }
};

/// Clean accuracy and accuracy under untargeted PGD.
template <class T>
AccuracyReport attack_evaluate(const Classifier<T>& clf, const ImageBatch<T>& data,
                               const ThreatModel& tm, const PGDConfig& cfg, int workers = 1) {
  detail::require(data.has_labels(), "attack_evaluate: data must be labelled");
  detail::require(!data.empty(), "attack_evaluate: empty data");
  const int n = data.size();
  std::vector<int> clean(n), adv(n), aborted(n);
  parallel_for(n, workers, [&](int i) {
    const Vec<T> x = data.image(i);
    const int y = data.labels[i];
    clean[i] = nn::argmax(clf.logits(x)) == y;
    if (tm.epsilon == 0.0 || cfg.steps == 0) {
      adv[i] = clean[i];
      return;
    }
    PGDConfig c = cfg;
    c.seed = image_seed(cfg.seed, i);
    auto [xa, tr] = untargeted_pgd(clf, x, y, tm, c);
    aborted[i] = tr.aborted;
    adv[i] = nn::argmax(clf.logits(xa)) == y;
  });
  AccuracyReport r;
  r.count = n;
  r.threat_model = tm;
  r.steps = cfg.steps;
  r.clean_acc = std::accumulate(clean.begin(), clean.end(), 0.0) / n;
  r.adv_acc = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  r.aborted = std::accumulate(aborted.begin(), aborted.end(), 0);
  return r;
}

}  // namespace bigroc
