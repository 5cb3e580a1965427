#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bigroc/error.hpp"

namespace bigroc::nn {

/// Channel-major image / activation shape. Flat storage order is CHW, which is
/// also the column-major layout of an (H*W) x C matrix.
struct Shape {
  int c = 0;
  int h = 1;
  int w = 1;

  int hw() const { return h * w; }
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

template <class T>
std::span<const T> as_span(const Vec<T>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
template <class T>
std::span<T> as_span(Vec<T>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

template <class T>
Vec<T> to_vec(std::span<const T> s) {
  Vec<T> v(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) v[static_cast<Eigen::Index>(i)] = s[i];
  return v;
}

}  // namespace bigroc::nn
