#pragma once

// Proxy-FID (Frechet distance between Gaussian fits of extractor features),
// Inception-style score, label balance, and an on-disk feature cache.

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bigroc/classifier.hpp"
#include "bigroc/label_stats.hpp"
#include "bigroc/parallel.hpp"

namespace bigroc {

struct FeatureGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long count = 0;
};

/// Mean and unbiased covariance of the rows of `features`.
inline FeatureGaussian fit_feature_gaussian(const Eigen::MatrixXd& features) {
  detail::require(features.rows() >= 2, "fit_feature_gaussian: need at least 2 samples, got " +
                                            std::to_string(features.rows()));
  detail::require(features.cols() >= 1, "fit_feature_gaussian: feature dimension must be >= 1");
  detail::require(features.allFinite(), "fit_feature_gaussian: non-finite features");
  FeatureGaussian g;
  g.count = features.rows();
  g.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd c = features.rowwise() - g.mean.transpose();
  g.cov = (c.transpose() * c) / static_cast<double>(g.count - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
  return g;
}

/// Thrown when a covariance has an eigenvalue below the PSD tolerance.
class NotPsdError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline constexpr double kPsdTolerance = 1e-6;

/// Symmetric PSD square root. Eigenvalues in [-tol, 0) are clipped to zero;
/// below -tol (relative to max(1, largest eigenvalue)) is an error.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s, int* clipped = nullptr) {
  detail::require(s.rows() == s.cols(), "sqrtm_psd: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw Error("sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = kPsdTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
  int nclip = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol)
      throw NotPsdError("matrix is not positive semi-definite: eigenvalue " + std::to_string(ev[i]));
    if (ev[i] < 0.0) {
      ev[i] = 0.0;
      ++nclip;
    }
  }
  if (clipped) *clipped = nclip;
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

struct FrechetDiagnostics {
  bool clipped_result = false;  // a tiny negative distance was reported as 0
  double raw = 0.0;
};

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), with Tr((S1 S2)^{1/2}) taken
/// as the trace of the square root of S1^{1/2} S2 S1^{1/2} (same eigenvalues,
/// but symmetric).
inline double frechet_distance(const FeatureGaussian& g1, const FeatureGaussian& g2,
                               FrechetDiagnostics* diag = nullptr) {
  detail::require(g1.mean.size() == g2.mean.size() && g1.cov.rows() == g2.cov.rows(),
                  "frechet_distance: dimension mismatch (" + std::to_string(g1.mean.size()) +
                      " vs " + std::to_string(g2.mean.size()) + ")");
  const Eigen::MatrixXd r1 = sqrtm_psd(g1.cov);
  sqrtm_psd(g2.cov);  // PSD check only
  // The trace terms of identical inputs only cancel up to rounding.
  if (g1.mean == g2.mean && g1.cov == g2.cov) {
    if (diag) *diag = {};
    return 0.0;
  }
  const Eigen::MatrixXd m = r1 * g2.cov * r1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double tol = kPsdTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff());
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) throw NotPsdError("frechet_distance: product has eigenvalue " + std::to_string(ev[i]));
    tr_sqrt += std::sqrt(std::max(ev[i], 0.0));
  }
  const double raw =
      (g1.mean - g2.mean).squaredNorm() + g1.cov.trace() + g2.cov.trace() - 2.0 * tr_sqrt;
  if (raw < -kPsdTolerance) throw Error("frechet_distance: negative result " + std::to_string(raw));
  if (diag) {
    diag->raw = raw;
    diag->clipped_result = raw < 0.0;
  }
  return std::max(raw, 0.0);
}

/// Mean and (population) std over `splits` contiguous near-equal blocks of
/// exp(mean_x KL(p(y|x) || p(y))), p(y) being each block's marginal.
inline std::pair<double, double> inception_score(const Eigen::MatrixXd& probs, int splits = 10) {
  detail::require(splits >= 1, "inception_score: splits must be >= 1");
  detail::require(probs.rows() >= splits, "inception_score: fewer rows (" +
                                              std::to_string(probs.rows()) + ") than splits (" +
                                              std::to_string(splits) + ")");
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double s = probs.row(i).sum();
    if (!probs.row(i).allFinite() || (probs.row(i).array() < 0.0).any() || std::abs(s - 1.0) > 1e-5)
      throw InvalidArgument("inception_score: row " + std::to_string(i) +
                            " is not a probability vector (sum " + std::to_string(s) + ")");
  }
  const Eigen::Index n = probs.rows();
  std::vector<double> scores;
  for (int k = 0; k < splits; ++k) {
    const Eigen::Index a = n * k / splits, b = n * (k + 1) / splits;
    const Eigen::MatrixXd block = probs.middleRows(a, b - a);
    // Column sums in long double: the marginal of identical rows then rounds
    // back to the row itself, so uniform rows score exactly 1.
    Eigen::RowVectorXd py(block.cols());
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      long double acc = 0.0L;
      for (Eigen::Index i = 0; i < block.rows(); ++i) acc += block(i, j);
      py[j] = static_cast<double>(acc / static_cast<long double>(block.rows()));
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        const double p = block(i, j);
        if (p > 0.0) kl += p * (std::log(p) - std::log(py[j]));
      }
    scores.push_back(std::exp(std::max(kl, 0.0) / static_cast<double>(block.rows())));
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= splits;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  return {mean, std::sqrt(var / splits)};
}

// ---- extractor features -----------------------------------------------------

/// Extractor outputs for one image set: embedding rows and softmax rows.
struct FeatureSet {
  Eigen::MatrixXd features;
  Eigen::MatrixXd probs;
  std::string extractor_fingerprint;
  std::string scale;
};

template <class T>
FeatureSet extract_eval_features(const Classifier<T>& extractor, const ImageBatch<T>& batch,
                                 const std::string& scale = "emb", int workers = 1) {
  detail::require(!batch.empty(), "extract_eval_features: empty image set");
  detail::require(batch.shape == extractor.input_shape(),
                  "extract_eval_features: image shape " + batch.shape.str() +
                      " does not match extractor input " + extractor.input_shape().str());
  const std::size_t fi = extractor.act_index(scale);
  const std::size_t li = extractor.act_index(kLogitsScale);
  std::vector<Eigen::VectorXd> f(batch.size()), p(batch.size());
  parallel_for(batch.size(), workers, [&](int i) {
    nn::Tape<T> tape;
    extractor.forward_tape(batch.image(i), tape, nn::Pass::Inference);
    f[i] = tape.acts[fi].template cast<double>();
    p[i] = nn::softmax(tape.acts[li]);
  });
  FeatureSet out;
  out.features.resize(batch.size(), f[0].size());
  out.probs.resize(batch.size(), p[0].size());
  for (int i = 0; i < batch.size(); ++i) {
    out.features.row(i) = f[i].transpose();
    out.probs.row(i) = p[i].transpose();
  }
  out.extractor_fingerprint = extractor.fingerprint();
  out.scale = scale;
  return out;
}

struct MetricsReport {
  double fid = 0.0;       // on the full sets
  double fid_mean = 0.0;  // over bootstrap repeats of the evaluated set
  double fid_std = 0.0;
  std::vector<double> fid_repeats;
  double is_mean = 0.0;
  double is_std = 0.0;
  std::vector<int> label_histogram;
  double chi_square = 0.0;
  double mean_confidence = 0.0;  // mean max-probability under the extractor
  long count = 0;

  nn::json to_json() const {
    return {{"fid", fid},         {"fid_mean", fid_mean},     {"fid_std", fid_std},
            {"fid_repeats", fid_repeats}, {"is_mean", is_mean}, {"is_std", is_std},
            {"label_histogram", label_histogram}, {"chi_square", chi_square},
            {"mean_confidence", mean_confidence}, {"count", count}};
  }
};

struct EvalOptions {
  int is_splits = 10;
  int fid_repeats = 3;
  std::uint64_t seed = 0;
};

/// Metrics of `evaluated` against `real`. Both feature sets must come from
/// the same extractor and scale.
inline MetricsReport evaluate_against(const FeatureSet& real, const FeatureSet& evaluated,
                                      const EvalOptions& opt) {
  detail::require(real.extractor_fingerprint == evaluated.extractor_fingerprint &&
                      real.scale == evaluated.scale,
                  "evaluate: feature sets come from different extractors");
  detail::require(opt.fid_repeats >= 0, "evaluate: fid_repeats must be >= 0");
  MetricsReport r;
  r.count = evaluated.features.rows();
  const FeatureGaussian gr = fit_feature_gaussian(real.features);
  r.fid = frechet_distance(gr, fit_feature_gaussian(evaluated.features));
  const Eigen::Index n = evaluated.features.rows();
  for (int k = 0; k < opt.fid_repeats; ++k) {
    std::mt19937_64 rng(opt.seed + 1000003ull * (k + 1));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::MatrixXd boot(n, evaluated.features.cols());
    for (Eigen::Index i = 0; i < n; ++i) boot.row(i) = evaluated.features.row(pick(rng));
    r.fid_repeats.push_back(frechet_distance(gr, fit_feature_gaussian(boot)));
  }
  if (!r.fid_repeats.empty()) {
    for (double v : r.fid_repeats) r.fid_mean += v / r.fid_repeats.size();
    for (double v : r.fid_repeats) r.fid_std += (v - r.fid_mean) * (v - r.fid_mean);
    r.fid_std = std::sqrt(r.fid_std / r.fid_repeats.size());
  }
  const int splits = static_cast<int>(std::min<Eigen::Index>(opt.is_splits, n));
  std::tie(r.is_mean, r.is_std) = inception_score(evaluated.probs, splits);
  std::vector<int> labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels[i] = nn::argmax(evaluated.probs.row(i).transpose());
    r.mean_confidence += evaluated.probs.row(i).maxCoeff() / static_cast<double>(n);
  }
  r.label_histogram = label_histogram(labels, static_cast<int>(evaluated.probs.cols()));
  r.chi_square = chi_square_to_uniform(r.label_histogram);
  return r;
}

/// Proxy-FID, IS and label statistics of the generated and boosted sets
/// against the real set, all through one extractor.
inline std::pair<MetricsReport, MetricsReport> evaluate_sets(const FeatureSet& real,
                                                             const FeatureSet& generated,
                                                             const FeatureSet& boosted,
                                                             const EvalOptions& opt = {}) {
  detail::require(generated.extractor_fingerprint == boosted.extractor_fingerprint,
                  "evaluate: generated and boosted features come from different extractors");
  return {evaluate_against(real, generated, opt), evaluate_against(real, boosted, opt)};
}

template <class T>
std::pair<MetricsReport, MetricsReport> evaluate_sets(const Classifier<T>& extractor,
                                                      const ImageBatch<T>& real,
                                                      const ImageBatch<T>& generated,
                                                      const ImageBatch<T>& boosted,
                                                      const EvalOptions& opt = {}, int workers = 1) {
  return evaluate_sets(extract_eval_features(extractor, real, "emb", workers),
                       extract_eval_features(extractor, generated, "emb", workers),
                       extract_eval_features(extractor, boosted, "emb", workers), opt);
}

// ---- feature cache ------------------------------------------------------------
// Layout: "BIGROCF1", uint64 LE header length, JSON header, then float64 LE
// values of `features` followed by `probs`, both row-major.

inline void write_feature_cache(const FeatureSet& fs, const std::filesystem::path& file) {
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write feature cache " + file.string());
  const std::string header = nn::json{{"rows", fs.features.rows()},
                                      {"dims", fs.features.cols()},
                                      {"classes", fs.probs.cols()},
                                      {"dtype", "float64-le"},
                                      {"scale", fs.scale},
                                      {"extractor_fingerprint", fs.extractor_fingerprint}}
                                 .dump();
  auto put_u64 = [&](std::uint64_t u) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
  };
  f.write("BIGROCF1", 8);
  put_u64(header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Eigen::MatrixXd* m : {&fs.features, &fs.probs})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        std::uint64_t u;
        const double v = (*m)(i, j);
        std::memcpy(&u, &v, 8);
        put_u64(u);
      }
  if (!f) throw IoError("short write to feature cache " + file.string());
}

inline FeatureSet read_feature_cache(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot read feature cache " + file.string());
  auto get_u64 = [&] {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return u;
  };
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "BIGROCF1", 8) != 0) throw IoError("not a feature cache: " + file.string());
  const std::uint64_t hl = get_u64();
  if (!f || hl > (1u << 20)) throw IoError("corrupt feature cache header: " + file.string());
  std::string header(hl, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hl));
  nn::json h;
  try {
    h = nn::json::parse(header);
  } catch (const nn::json::exception& e) {
    throw IoError("corrupt feature cache header: " + std::string(e.what()));
  }
  FeatureSet fs;
  fs.scale = h.at("scale").get<std::string>();
  fs.extractor_fingerprint = h.at("extractor_fingerprint").get<std::string>();
  fs.features.resize(h.at("rows").get<Eigen::Index>(), h.at("dims").get<Eigen::Index>());
  fs.probs.resize(h.at("rows").get<Eigen::Index>(), h.at("classes").get<Eigen::Index>());
  for (Eigen::MatrixXd* m : {&fs.features, &fs.probs})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        const std::uint64_t u = get_u64();
        std::memcpy(&(*m)(i, j), &u, 8);
      }
  if (!f) throw IoError("truncated feature cache " + file.string());
  return fs;
}

}  // namespace bigroc
