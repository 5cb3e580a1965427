#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <type_traits>
#include <vector>

#include "bigroc/classifier.hpp"

namespace bigroc {

struct GradCheckOptions {
  int trials = 20;
  double tolerance = 1e-4;
  double step = 1e-5;  // central-difference half width, in pixel units
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::vector<double> trial_errors;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares input_gradient against central finite differences of the
/// cross-entropy loss on random (x, y) pairs. The per-trial error is
/// ||g - g_fd||_2 / max(||g||_2, ||g_fd||_2, 1e-30), using every input coordinate.
/// `tamper`, when set, is applied to each analytic gradient before comparison.
template <class T>
GradCheckReport check_gradients(const Classifier<T>& clf, const GradCheckOptions& opt,
                                const std::type_identity_t<std::function<void(Vec<T>&)>>& tamper = {}) {
  detail::require(opt.trials >= 1, "check_gradients: trials must be >= 1");
  detail::require(opt.step > 0.0, "check_gradients: step must be positive");
  const PixelRange r = clf.pixel_range();
  detail::require(2 * opt.step < r.width(), "check_gradients: step too large for pixel range");

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> pix(r.lo + opt.step, r.hi - opt.step);
  std::uniform_int_distribution<int> cls(0, clf.class_count() - 1);
  const Eigen::Index d = static_cast<Eigen::Index>(clf.input_shape().size());

  GradCheckReport rep;
  rep.tolerance = opt.tolerance;
  for (int t = 0; t < opt.trials; ++t) {
    Vec<T> x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = static_cast<T>(pix(rng));
    const int y = cls(rng);
    Vec<T> g = clf.input_gradient(x, y);
    if (tamper) tamper(g);

    Eigen::VectorXd fd(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      Vec<T> xp = x, xm = x;
      xp[i] += static_cast<T>(opt.step);
      xm[i] -= static_cast<T>(opt.step);
      const double h = static_cast<double>(xp[i]) - static_cast<double>(xm[i]);
      fd[i] = (nn::cross_entropy(clf.logits(xp), y) - nn::cross_entropy(clf.logits(xm), y)) / h;
    }
    const Eigen::VectorXd ga = g.template cast<double>();
    const double denom = std::max({ga.norm(), fd.norm(), 1e-30});
    rep.trial_errors.push_back((ga - fd).norm() / denom);
  }
  rep.max_relative_error = *std::max_element(rep.trial_errors.begin(), rep.trial_errors.end());
  rep.passed = rep.max_relative_error < opt.tolerance;
  return rep;
}

}  // namespace bigroc
