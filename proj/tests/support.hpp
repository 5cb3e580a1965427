#pragma once

#include <random>
#include <vector>

#include "bigroc/classifier.hpp"

namespace bigroc::testing {

/// A few-layer CNN exercising every layer type, on 3x8x8 inputs in [-1, 1].
template <class T>
Classifier<T> small_cnn(std::uint64_t seed, int classes = 5) {
  nn::Network<T> net(nn::Shape{3, 8, 8});
  net.normalize({0.1, -0.2, 0.0}, {0.5, 0.6, 0.4})
      .conv(4)
      .act(nn::ActFn::SiLU)
      .avgpool()
      .resblock(nn::ActFn::SiLU)
      .mark_scale("s1")
      .conv(6)
      .act(nn::ActFn::Tanh)
      .gap()
      .mark_scale("emb")
      .linear(classes);
  net.init_params(seed);
  return Classifier<T>(std::move(net), PixelRange(-1.0, 1.0));
}

/// logits = W x + b for a flat input of length W.cols().
template <class T>
Classifier<T> linear_classifier(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                                PixelRange range = PixelRange(-1.0, 1.0)) {
  nn::Network<T> net(nn::Shape{static_cast<int>(W.cols()), 1, 1});
  net.linear(static_cast<int>(W.rows()));
  auto& p = net.params();
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    for (Eigen::Index i = 0; i < W.rows(); ++i) p[i + W.rows() * j] = static_cast<T>(W(i, j));
  for (Eigen::Index i = 0; i < b.size(); ++i) p[W.size() + i] = static_cast<T>(b[i]);
  return Classifier<T>(std::move(net), range);
}

template <class T>
Vec<T> random_image(std::size_t d, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec<T> x(static_cast<Eigen::Index>(d));
  for (auto& v : x) v = static_cast<T>(u(rng));
  return x;
}

}  // namespace bigroc::testing
