#pragma once

#include <vector>

#include "bigroc/classifier.hpp"

namespace bigroc::desk {

/// Small residual CNN with scales "s1" (after the first stage), "s2" (after the
/// second stage) and "emb" (global-average-pooled embedding).
template <class T>
nn::Network<T> residual_cnn(nn::Shape input, int classes, int width = 16,
                            nn::ActFn act = nn::ActFn::SiLU) {
  nn::Network<T> net(input);
  net.normalize(std::vector<double>(input.c, 0.0), std::vector<double>(input.c, 0.5))
      .conv(width)
      .act(act)
      .avgpool()
      .resblock(act)
      .mark_scale("s1")
      .conv(2 * width)
      .act(act)
      .avgpool()
      .resblock(act)
      .mark_scale("s2")
      .gap()
      .mark_scale("emb")
      .linear(classes);
  return net;
}

template <class T>
Classifier<T> desk_classifier(nn::Shape input, int classes, std::uint64_t seed, int width = 16) {
  auto net = residual_cnn<T>(input, classes, width);
  net.init_params(seed);
  return Classifier<T>(std::move(net), PixelRange(-1.0, 1.0));
}

}  // namespace bigroc::desk
