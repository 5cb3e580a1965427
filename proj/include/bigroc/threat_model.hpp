#pragma once

// Perturbation sets (l2 / linf balls) and valid-pixel-range enforcement.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bigroc/error.hpp"

namespace bigroc {

enum class Norm { L2, Linf };

inline std::string_view to_string(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

inline Norm parse_norm(std::string_view s) {
  if (s == "l2" || s == "L2") return Norm::L2;
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::Linf;
  throw InvalidArgument("unknown norm '" + std::string(s) + "' (expected l2 or linf)");
}

struct ThreatModel {
  Norm norm = Norm::L2;
  double epsilon = 0.0;

  ThreatModel() = default;
  ThreatModel(Norm n, double eps) : norm(n), epsilon(eps) {
    detail::require(std::isfinite(eps) && eps >= 0.0,
                    "threat model epsilon must be finite and >= 0, got " + std::to_string(eps));
  }

  friend bool operator==(const ThreatModel&, const ThreatModel&) = default;
};

struct PixelRange {
  double lo = -1.0;
  double hi = 1.0;

  PixelRange() = default;
  PixelRange(double l, double h) : lo(l), hi(h) {
    detail::require(std::isfinite(l) && std::isfinite(h) && l < h,
                    "pixel range requires lo < hi, got [" + std::to_string(l) + ", " +
                        std::to_string(h) + "]");
  }

  bool contains(double v) const { return v >= lo && v <= hi; }
  double width() const { return hi - lo; }

  friend bool operator==(const PixelRange&, const PixelRange&) = default;
};

/// Euclidean norm accumulated in double regardless of storage type.
template <class T>
double l2_norm(std::span<const T> v) {
  double s = 0.0;
  for (const T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <class T>
double linf_norm(std::span<const T> v) {
  double m = 0.0;
  for (const T x : v) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

template <class T>
double norm_of(Norm n, std::span<const T> v) {
  return n == Norm::L2 ? l2_norm(v) : linf_norm(v);
}

/// In-place projection onto the closed l2 ball of radius epsilon.
template <class T>
void project_l2_inplace(std::span<T> delta, double epsilon) {
  detail::require(epsilon >= 0.0, "project_l2: epsilon must be >= 0");
  detail::require_finite<T>(delta, "project_l2");
  if (epsilon == 0.0) {
    std::fill(delta.begin(), delta.end(), T(0));
    return;
  }
  const double n = l2_norm<T>(delta);
  if (n <= epsilon) return;
  const double scale = epsilon / n;
  for (T& x : delta) x = static_cast<T>(static_cast<double>(x) * scale);
}

/// In-place coordinate-wise clamp to [-epsilon, epsilon].
template <class T>
void project_linf_inplace(std::span<T> delta, double epsilon) {
  detail::require(epsilon >= 0.0, "project_linf: epsilon must be >= 0");
  detail::require_finite<T>(delta, "project_linf");
  const T e = static_cast<T>(epsilon);
  for (T& x : delta) x = std::clamp(x, -e, e);
}

template <class T>
void project_inplace(const ThreatModel& tm, std::span<T> delta) {
  if (tm.norm == Norm::L2)
    project_l2_inplace(delta, tm.epsilon);
  else
    project_linf_inplace(delta, tm.epsilon);
}

template <class T>
std::vector<T> project_l2(std::span<const T> delta, double epsilon) {
  std::vector<T> out(delta.begin(), delta.end());
  project_l2_inplace<T>(out, epsilon);
  return out;
}

template <class T>
std::vector<T> project_linf(std::span<const T> delta, double epsilon) {
  std::vector<T> out(delta.begin(), delta.end());
  project_linf_inplace<T>(out, epsilon);
  return out;
}

template <class T>
std::vector<T> project(const ThreatModel& tm, std::span<const T> delta) {
  std::vector<T> out(delta.begin(), delta.end());
  project_inplace<T>(tm, out);
  return out;
}

template <class T>
void clamp_to_range_inplace(std::span<T> x, const PixelRange& range) {
  detail::require_finite<T>(x, "clamp_to_range");
  const T lo = static_cast<T>(range.lo);
  const T hi = static_cast<T>(range.hi);
  for (T& v : x) v = std::clamp(v, lo, hi);
}

template <class T>
std::vector<T> clamp_to_range(std::span<const T> x, const PixelRange& range) {
  std::vector<T> out(x.begin(), x.end());
  clamp_to_range_inplace<T>(out, range);
  return out;
}

}  // namespace bigroc
