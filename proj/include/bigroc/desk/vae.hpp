#pragma once

// Tiny fully-connected VAE: the desk-scale stand-in for a weak generator
// whose samples get refined.

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "bigroc/image_batch.hpp"
#include "bigroc/nn/network.hpp"
#include "bigroc/parallel.hpp"
#include "bigroc/pgd.hpp"
#include "bigroc/trainer.hpp"

namespace bigroc::desk {

struct VaeConfig {
  int latent = 16;
  int hidden = 256;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double recon_variance = 0.05;  // Gaussian decoder variance, in squared pixel units
  std::uint64_t seed = 0;
  int workers = 1;
};

class TinyVae {
 public:
  TinyVae(nn::Shape image, const VaeConfig& cfg) : image_(image), cfg_(cfg), enc_(image), dec_(nn::Shape{cfg.latent, 1, 1}) {
    enc_.linear(cfg.hidden).act(nn::ActFn::SiLU).linear(2 * cfg.latent);
    dec_.linear(cfg.hidden)
        .act(nn::ActFn::SiLU)
        .linear(static_cast<int>(image.size()))
        .act(nn::ActFn::Tanh)
        .reshape(image);
    enc_.init_params(cfg.seed * 2 + 1);
    dec_.init_params(cfg.seed * 2 + 2);
  }

  /// Maximises the ELBO on `data` (pixels in [-1, 1]). Returns mean loss per epoch.
  std::vector<double> train(const ImageBatch<float>& data) {
    bigroc::detail::require(data.shape == image_, "vae: data shape mismatch");
    const int n = data.size(), L = cfg_.latent, bs = std::min(cfg_.batch_size, n);
    const std::size_t ne = enc_.param_count(), nd = dec_.param_count();
    OptimizerConfig oc;
    oc.learning_rate = cfg_.learning_rate;
    oc.schedule = "constant";
    bigroc::detail::Optimizer oe(oc, ne), od(oc, nd);
    std::mt19937_64 rng(cfg_.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<float>> ge(bs, std::vector<float>(ne)), gd(bs, std::vector<float>(nd));
    std::vector<double> loss(bs), se(ne), sd(nd);
    std::vector<double> history;
    long step = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0.0;
      for (int begin = 0; begin < n; begin += bs, ++step) {
        const int m = std::min(bs, n - begin);
        parallel_for(m, cfg_.workers, [&](int k) {
          std::mt19937_64 r(image_seed(cfg_.seed ^ 0x5eedull, static_cast<int>(step * bs + k)));
          std::normal_distribution<double> nrm;
          std::fill(ge[k].begin(), ge[k].end(), 0.0f);
          std::fill(gd[k].begin(), gd[k].end(), 0.0f);
          const nn::Vec<float> x = data.image(order[begin + k]);
          nn::Tape<float> te, td;
          enc_.forward(x, te, nn::Pass::ParamGrad);
          const nn::Vec<float>& h = te.output();
          nn::Vec<float> eps(L), z(L);
          for (int j = 0; j < L; ++j) {
            eps[j] = static_cast<float>(nrm(r));
            z[j] = h[j] + std::exp(0.5f * h[L + j]) * eps[j];
          }
          dec_.forward(z, td, nn::Pass::ParamGrad);
          const nn::Vec<float> diff = td.output() - x;
          const float inv_var = static_cast<float>(1.0 / cfg_.recon_variance);
          double l = 0.5 * inv_var * diff.squaredNorm();
          for (int j = 0; j < L; ++j)
            l += 0.5 * (h[j] * h[j] + std::exp(h[L + j]) - 1.0 - h[L + j]);
          loss[k] = l;
          const nn::Vec<float> gz = dec_.backward(td, diff * inv_var, gd[k].data());
          nn::Vec<float> gh(2 * L);
          for (int j = 0; j < L; ++j) {
            gh[j] = gz[j] + h[j];
            gh[L + j] = gz[j] * eps[j] * 0.5f * std::exp(0.5f * h[L + j]) +
                        0.5f * (std::exp(h[L + j]) - 1.0f);
          }
          enc_.backward(te, gh, ge[k].data());
        });
        std::fill(se.begin(), se.end(), 0.0);
        std::fill(sd.begin(), sd.end(), 0.0);
        for (int k = 0; k < m; ++k) {
          total += loss[k];
          for (std::size_t i = 0; i < ne; ++i) se[i] += ge[k][i] / m;
          for (std::size_t i = 0; i < nd; ++i) sd[i] += gd[k][i] / m;
        }
        oe.step(enc_.params(), se, cfg_.learning_rate);
        od.step(dec_.params(), sd, cfg_.learning_rate);
      }
      history.push_back(total / n);
    }
    return history;
  }

  nn::Vec<float> decode(const nn::Vec<float>& z) const { return dec_.forward(z); }

  /// Decodes `count` prior samples; image i uses its own seed.
  ImageBatch<float> sample(int count, std::uint64_t seed) const {
    ImageBatch<float> out(image_, PixelRange(-1.0, 1.0), count);
    out.generator = "tiny-vae";
    parallel_for(count, cfg_.workers, [&](int i) {
      std::mt19937_64 r(image_seed(seed, i));
      std::normal_distribution<double> nrm;
      nn::Vec<float> z(cfg_.latent);
      for (auto& v : z) v = static_cast<float>(nrm(r));
      out.pixels.col(i) = decode(z).cwiseMax(-1.0f).cwiseMin(1.0f);
    });
    return out;
  }

 private:
  nn::Shape image_;
  VaeConfig cfg_;
  nn::Network<float> enc_;
  nn::Network<float> dec_;
};

}  // namespace bigroc::desk
