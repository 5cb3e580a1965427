#pragma once

// Refinement of generated images by targeted PGD on a robust classifier, with
// either given labels or pseudo-labels from debiased logits.

#include <optional>
#include <string>
#include <vector>

#include "bigroc/classifier.hpp"
#include "bigroc/label_stats.hpp"
#include "bigroc/parallel.hpp"
#include "bigroc/pgd.hpp"

namespace bigroc {

inline constexpr int kDefaultCalibrationSize = 1024;

/// Published per-generator l2 refinement radii, each valid for the listed
/// image size and pixel range.
struct EpsilonPreset {
  const char* dataset;
  const char* generator;
  int resolution;  // square images with 3 channels
  double epsilon;
  PixelRange range;
};

inline const std::vector<EpsilonPreset>& epsilon_presets() {
  static const PixelRange sym(-1.0, 1.0), unit(0.0, 1.0);
  static const std::vector<EpsilonPreset> p = {
      {"cifar10", "vae", 32, 25.0, sym},
      {"cifar10", "dcgan", 32, 5.0, sym},
      {"cifar10", "wgan-gp", 32, 5.0, sym},
      {"cifar10", "sngan", 32, 3.0, sym},
      {"cifar10", "ssgan", 32, 3.0, sym},
      {"cifar10", "cgan", 32, 5.0, sym},
      {"cifar10", "cgan-pd", 32, 2.0, sym},
      {"cifar10", "biggan", 32, 1.0, sym},
      {"cifar10", "diff-biggan", 32, 1.0, sym},
      {"cifar10", "stylegan2-ada", 32, 0.28, sym},
      {"cifar10", "sn-resnet-gan", 32, 1.8, unit},
      {"imagenet128", "sngan", 128, 40.0, sym},
      {"imagenet128", "ssgan", 128, 40.0, sym},
      {"imagenet128", "infomaxgan", 128, 40.0, sym},
      {"imagenet128", "biggan-deep", 128, 5.0, unit},
      {"imagenet128", "guided-diffusion", 128, 1.5, unit},
      {"imagenet256", "biggan-deep", 256, 1.0, unit},
      {"imagenet256", "guided-diffusion", 256, 1.5, unit},
      {"imagenet128", "sn-resnet-gan", 128, 15.0, unit},
  };
  return p;
}

/// Preset "dataset/generator" rescaled to images of `shape` in `range`: the
/// RMS per-pixel change, measured relative to the range width, is preserved.
inline double preset_epsilon(const std::string& name, const nn::Shape& shape, const PixelRange& range) {
  for (const auto& p : epsilon_presets()) {
    if (name != std::string(p.dataset) + "/" + p.generator) continue;
    const double ref_dims = 3.0 * p.resolution * p.resolution;
    return p.epsilon * std::sqrt(static_cast<double>(shape.size()) / ref_dims) *
           (range.width() / p.range.width());
  }
  throw InvalidArgument("unknown epsilon preset '" + name + "'");
}

struct DebiasVector {
  Eigen::VectorXd d;   // per-class additive logit correction
  double a = 1.0;      // calibration target for every class mean
  int calib_size = 0;
  std::string calib_fingerprint;

  nn::json to_json() const {
    return {{"d_c", std::vector<double>(d.data(), d.data() + d.size())},
            {"a", a},
            {"calib_size", calib_size},
            {"calib_fingerprint", calib_fingerprint}};
  }

  static DebiasVector from_json(const nn::json& j) {
    DebiasVector v;
    try {
      const auto d = j.at("d_c").get<std::vector<double>>();
      v.d = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
      v.a = j.at("a").get<double>();
      v.calib_size = j.at("calib_size").get<int>();
      v.calib_fingerprint = j.at("calib_fingerprint").get<std::string>();
    } catch (const nn::json::exception& e) {
      throw InvalidArgument(std::string("malformed debias vector: ") + e.what());
    }
    bigroc::detail::require_finite<double>({v.d.data(), static_cast<std::size_t>(v.d.size())},
                                           "debias vector");
    return v;
  }
};

/// SHA-256 of an image set's pixel values (float64 encoding, image order).
template <class T>
std::string batch_fingerprint(const ImageBatch<T>& b) {
  return io::fingerprint_values<T>({b.pixels.data(), static_cast<std::size_t>(b.pixels.size())});
}

/// d_c = a - (mean logit of class c over `calib`). The mean is summed in image order.
template <class T>
DebiasVector compute_debias_vector(const Classifier<T>& clf, const ImageBatch<T>& calib,
                                   double a = 1.0, int workers = 1) {
  detail::require(!calib.empty(), "compute_debias_vector: empty calibration set");
  detail::require(std::isfinite(a), "compute_debias_vector: a must be finite");
  const Eigen::MatrixXd L = [&] {
    Eigen::MatrixXd out(calib.size(), clf.class_count());
    parallel_for(calib.size(), workers, [&](int i) {
      out.row(i) = clf.logits(calib.image(i)).template cast<double>().transpose();
    });
    return out;
  }();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(L.cols());
  for (Eigen::Index i = 0; i < L.rows(); ++i) mean += L.row(i).transpose();
  mean /= static_cast<double>(L.rows());
  DebiasVector v;
  v.d = Eigen::VectorXd::Constant(L.cols(), a) - mean;
  v.a = a;
  v.calib_size = calib.size();
  v.calib_fingerprint = batch_fingerprint(calib);
  return v;
}

/// Per-row argmax of (logits + d); ties go to the lowest class index.
inline std::vector<int> estimate_labels_from_logits(const Eigen::MatrixXd& logits,
                                                    const DebiasVector* d) {
  if (d)
    detail::require(d->d.size() == logits.cols(),
                    "debias vector has " + std::to_string(d->d.size()) + " entries for " +
                        std::to_string(logits.cols()) + " classes");
  std::vector<int> out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::VectorXd z = logits.row(i).transpose();
    if (d) z += d->d;
    out[i] = nn::argmax(z);
  }
  return out;
}

template <class T>
std::vector<int> estimate_labels(const Classifier<T>& clf, const ImageBatch<T>& x,
                                 const DebiasVector* d) {
  return estimate_labels_from_logits(clf.predict_logits(x), d);
}

struct RefinedImage {
  int index = 0;
  std::string name;
  int label = 0;
  int undebiased_label = 0;
  double norm = 0.0;
  double p_before = 0.0;
  double p_after = 0.0;
  bool failed = false;
  std::string message;

  nn::json to_json() const {
    nn::json j = {{"index", index},       {"label", label},     {"undebiased_label", undebiased_label},
                  {"norm", norm},         {"p_before", p_before}, {"p_after", p_after},
                  {"failed", failed}};
    if (!name.empty()) j["file"] = name;
    if (!message.empty()) j["message"] = message;
    return j;
  }
};

struct RefinementReport {
  std::string mode;  // "gt", "pl" or "pl-debiased"
  ThreatModel threat_model;
  PGDConfig pgd;
  std::vector<RefinedImage> images;
  std::vector<int> histogram_plain;     // argmax labels without debiasing
  std::vector<int> histogram_debiased;  // empty unless a debias vector was used
  std::vector<int> histogram_used;
  double chi_square_plain = 0.0;
  double chi_square_debiased = 0.0;
  double chi_square_used = 0.0;
  double mean_p_before = 0.0;
  double mean_p_after = 0.0;
  double max_norm = 0.0;
  int failures = 0;

  double mean_confidence_delta() const { return mean_p_after - mean_p_before; }

  nn::json to_json() const {
    nn::json imgs = nn::json::array();
    for (const auto& r : images) imgs.push_back(r.to_json());
    nn::json j = {{"mode", mode},
                  {"threat_model", {{"norm", std::string(to_string(threat_model.norm))},
                                    {"epsilon", threat_model.epsilon}}},
                  {"pgd", {{"alpha", pgd.alpha},
                           {"steps", pgd.steps},
                           {"init", pgd.init == PGDInit::Zero ? "zero" : "uniform"},
                           {"return_best_iterate", pgd.return_best_iterate},
                           {"step_rule", to_string(pgd.resolved_rule(threat_model.norm))},
                           {"seed", pgd.seed}}},
                  {"count", images.size()},
                  {"failures", failures},
                  {"histogram_plain", histogram_plain},
                  {"chi_square_plain", chi_square_plain},
                  {"histogram_used", histogram_used},
                  {"chi_square_used", chi_square_used},
                  {"mean_p_before", mean_p_before},
                  {"mean_p_after", mean_p_after},
                  {"mean_confidence_delta", mean_confidence_delta()},
                  {"max_norm", max_norm},
                  {"images", imgs}};
    if (!histogram_debiased.empty()) {
      j["histogram_debiased"] = histogram_debiased;
      j["chi_square_debiased"] = chi_square_debiased;
    }
    return j;
  }
};

template <class T>
struct BoostResult {
  ImageBatch<T> images;
  RefinementReport report;
};

/// Refines every image toward its class by targeted PGD. With `labels` the
/// given labels are used and `d` is ignored; without, labels are the argmax of
/// (logits + d), or of the plain logits when `d` is null. A debias vector
/// calibrated on this very set is rejected.
template <class T>
BoostResult<T> boost(const Classifier<T>& clf, const ImageBatch<T>& x_gen,
                     const std::vector<int>* labels, const ThreatModel& tm, const PGDConfig& cfg,
                     const DebiasVector* d = nullptr, int workers = 1) {
  detail::require(!x_gen.empty(), "boost: empty image set");
  if (tm.epsilon > 0.0) cfg.validate();
  detail::require(x_gen.shape == clf.input_shape(), "boost: image shape " + x_gen.shape.str() +
                                                        " does not match classifier " +
                                                        clf.input_shape().str());
  // Images whose logits cannot be computed are flagged and passed through
  // unchanged; their rows stay zero, so they count toward class 0.
  std::vector<std::string> bad(x_gen.size());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(x_gen.size(), clf.class_count());
  parallel_for(x_gen.size(), workers, [&](int i) {
    try {
      const Vec<T> z = clf.logits(x_gen.image(i));
      detail::require_finite<T>(nn::as_span(z), "logits");
      L.row(i) = z.template cast<double>().transpose();
    } catch (const Error& e) {
      bad[i] = e.what();
    }
  });

  RefinementReport rep;
  rep.threat_model = tm;
  rep.pgd = cfg;
  const std::vector<int> plain = estimate_labels_from_logits(L, nullptr);
  std::vector<int> used;
  if (labels) {
    detail::require(static_cast<int>(labels->size()) == x_gen.size(),
                    "boost: " + std::to_string(labels->size()) + " labels for " +
                        std::to_string(x_gen.size()) + " images");
    for (int y : *labels) clf.check_label(y);
    used = *labels;
    rep.mode = "gt";
  } else if (d) {
    detail::require(d->calib_fingerprint != batch_fingerprint(x_gen),
                    "boost: debias vector was calibrated on the set being refined");
    used = estimate_labels_from_logits(L, d);
    rep.histogram_debiased = label_histogram(used, clf.class_count());
    rep.chi_square_debiased = chi_square_to_uniform(rep.histogram_debiased);
    rep.mode = "pl-debiased";
  } else {
    used = plain;
    rep.mode = "pl";
  }
  rep.histogram_plain = label_histogram(plain, clf.class_count());
  rep.chi_square_plain = chi_square_to_uniform(rep.histogram_plain);
  rep.histogram_used = label_histogram(used, clf.class_count());
  rep.chi_square_used = chi_square_to_uniform(rep.histogram_used);

  BoostResult<T> res{x_gen, std::move(rep)};
  auto& r = res.report;
  r.images.resize(x_gen.size());
  parallel_for(x_gen.size(), workers, [&](int i) {
    RefinedImage& ri = r.images[i];
    ri.index = i;
    if (!x_gen.names.empty()) ri.name = x_gen.names[i];
    ri.label = used[i];
    ri.undebiased_label = plain[i];
    if (!bad[i].empty()) {
      ri.failed = true;
      ri.message = bad[i];
      return;
    }
    const Vec<double> li = L.row(i).transpose();
    ri.p_before = nn::softmax(li)[used[i]];
    PGDConfig c = cfg;
    c.seed = image_seed(cfg.seed, i);
    auto [xo, tr] = targeted_pgd(clf, x_gen.image(i), used[i], tm, c);
    ri.failed = tr.aborted;
    ri.message = tr.message;
    ri.norm = tr.final_norm;
    ri.p_after = nn::softmax(clf.logits(xo))[used[i]];
    res.images.pixels.col(i) = xo;
  });
  for (const auto& ri : r.images) {
    r.mean_p_before += ri.p_before / r.images.size();
    r.mean_p_after += ri.p_after / r.images.size();
    r.max_norm = std::max(r.max_norm, ri.norm);
    r.failures += ri.failed;
  }
  res.images.labels = used;
  return res;
}

}  // namespace bigroc
