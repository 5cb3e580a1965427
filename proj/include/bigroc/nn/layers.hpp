#pragma once

// Building blocks of the desk-scale networks. Every layer is stateless: its
// parameters live in the owning Network's flat parameter vector and are passed
// in as raw pointers, so layers can be shared between copies of a network.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bigroc/nn/tensor.hpp"
#include "json.hpp"

namespace bigroc::nn {

using nlohmann::json;

/// What the caller intends to do after a forward pass.
enum class Pass {
  Inference,  ///< no backward will follow
  InputGrad,  ///< backward for the input gradient only
  ParamGrad,  ///< backward for input and parameter gradients
};

/// Per-layer scratch kept between forward and backward.
template <class T>
struct Cache {
  std::vector<Vec<T>> v;
  std::vector<Mat<T>> m;
  std::vector<Cache<T>> sub;
};

template <class T>
class Layer {
 public:
  Layer(Shape in, Shape out) : in_(in), out_(out) {}
  virtual ~Layer() = default;

  Shape input_shape() const { return in_; }
  Shape output_shape() const { return out_; }

  virtual std::size_t param_count() const { return 0; }
  virtual void init_params(T* /*params*/, std::mt19937_64& /*rng*/) const {}

  virtual void forward(const T* params, const Vec<T>& in, Vec<T>& out, Cache<T>& cache,
                       Pass pass) const = 0;

  /// Accumulates parameter gradients into `gparams` when non-null and writes the
  /// input gradient into `gin` when non-null.
  virtual void backward(const T* params, const Vec<T>& in, const Vec<T>& out, const Vec<T>& gout,
                        Vec<T>* gin, T* gparams, const Cache<T>& cache) const = 0;

  virtual json descriptor() const = 0;

 protected:
  Shape in_;
  Shape out_;
};

enum class ActFn { ReLU, SiLU, Tanh };

inline std::string to_string(ActFn f) {
  switch (f) {
    case ActFn::ReLU: return "relu";
    case ActFn::SiLU: return "silu";
    case ActFn::Tanh: return "tanh";
  }
  return "?";
}

inline ActFn parse_act(const std::string& s) {
  if (s == "relu") return ActFn::ReLU;
  if (s == "silu") return ActFn::SiLU;
  if (s == "tanh") return ActFn::Tanh;
  throw InvalidArgument("unknown activation '" + s + "'");
}

namespace detail {

template <class T>
void act_forward(ActFn f, const T* in, T* out, Eigen::Index n) {
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> z(in, n);
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> o(out, n);
  switch (f) {
    case ActFn::ReLU: o = z.max(T(0)); break;
    // exp(-z) overflows to inf for very negative z, giving z / inf = -0.
    case ActFn::SiLU: o = z / (T(1) + (-z).exp()); break;
    case ActFn::Tanh: o = z.tanh(); break;
  }
}

// g_in = act'(z) * g_out; `out` is act(z).
template <class T>
void act_backward(ActFn f, const T* z_, const T* out_, const T* gout_, T* gin_, Eigen::Index n) {
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> z(z_, n), out(out_, n), g(gout_, n);
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> gi(gin_, n);
  switch (f) {
    case ActFn::ReLU: gi = (z > T(0)).select(g, T(0)); break;
    case ActFn::SiLU: {
      const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-z).exp());
      gi = g * s * (T(1) + z * (T(1) - s));
      break;
    }
    case ActFn::Tanh: gi = g * (T(1) - out * out); break;
  }
}

}  // namespace detail

template <class T>
class Activation final : public Layer<T> {
 public:
  Activation(Shape s, ActFn f) : Layer<T>(s, s), fn_(f) {}

  void forward(const T*, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override {
    out.resize(in.size());
    detail::act_forward(fn_, in.data(), out.data(), in.size());
  }

  void backward(const T*, const Vec<T>& in, const Vec<T>& out, const Vec<T>& gout, Vec<T>* gin, T*,
                const Cache<T>&) const override {
    if (!gin) return;
    gin->resize(in.size());
    detail::act_backward(fn_, in.data(), out.data(), gout.data(), gin->data(), in.size());
  }

  json descriptor() const override { return {{"type", "act"}, {"fn", to_string(fn_)}}; }
  ActFn fn() const { return fn_; }

 private:
  ActFn fn_;
};

/// Square-kernel convolution, stride 1, "same" zero padding. Implemented as
/// im2col followed by one GEMM per image.
template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(Shape in, int out_channels, int kernel = 3, double init_gain = 1.0)
      : Layer<T>(in, Shape{out_channels, in.h, in.w}), k_(kernel), gain_(init_gain) {
    bigroc::detail::require(kernel % 2 == 1 && kernel >= 1, "conv kernel must be odd");
  }

  int patch() const { return k_ * k_ * this->in_.c; }
  std::size_t param_count() const override {
    return static_cast<std::size_t>(patch()) * this->out_.c + this->out_.c;
  }

  void init_params(T* p, std::mt19937_64& rng) const override {
    std::normal_distribution<double> nd(0.0, gain_ * std::sqrt(2.0 / patch()));
    const std::size_t nw = static_cast<std::size_t>(patch()) * this->out_.c;
    for (std::size_t i = 0; i < nw; ++i) p[i] = static_cast<T>(nd(rng));
    for (int i = 0; i < this->out_.c; ++i) p[nw + i] = T(0);
  }

  void forward(const T* params, const Vec<T>& in, Vec<T>& out, Cache<T>& cache,
               Pass pass) const override {
    const int hw = this->in_.hw();
    Mat<T> col;
    im2col(in.data(), col);
    out.resize(static_cast<Eigen::Index>(this->out_.size()));
    MatMap<T> o(out.data(), hw, this->out_.c);
    o.noalias() = col * weights(params);
    o.rowwise() += bias(params).transpose();
    if (pass == Pass::ParamGrad) {
      cache.m.resize(1);
      cache.m[0] = std::move(col);
    }
  }

  void backward(const T* params, const Vec<T>& in, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin,
                T* gparams, const Cache<T>& cache) const override {
    const int hw = this->in_.hw();
    ConstMatMap<T> g(gout.data(), hw, this->out_.c);
    if (gparams) {
      Mat<T> col_local;
      const Mat<T>* col = nullptr;
      if (!cache.m.empty()) {
        col = &cache.m[0];
      } else {
        im2col(in.data(), col_local);
        col = &col_local;
      }
      MatMap<T> gw(gparams, patch(), this->out_.c);
      gw.noalias() += col->transpose() * g;
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(gparams + patch() * this->out_.c,
                                                         this->out_.c);
      gb += g.colwise().sum().transpose();
    }
    if (gin) {
      Mat<T> dcol = g * weights(params).transpose();
      gin->setZero(static_cast<Eigen::Index>(this->in_.size()));
      col2im(dcol, gin->data());
    }
  }

  json descriptor() const override {
    return {{"type", "conv"}, {"out_channels", this->out_.c}, {"kernel", k_}, {"init_gain", gain_}};
  }

 private:
  ConstMatMap<T> weights(const T* p) const { return ConstMatMap<T>(p, patch(), this->out_.c); }
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(const T* p) const {
    return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(p + patch() * this->out_.c,
                                                                 this->out_.c);
  }

  // col(y*W + x, (ci*K + ky)*K + kx) = in[ci][y + ky - pad][x + kx - pad]
  void im2col(const T* in, Mat<T>& col) const {
    const int H = this->in_.h, W = this->in_.w, C = this->in_.c, pad = k_ / 2;
    col.resize(H * W, patch());
    for (int ci = 0; ci < C; ++ci) {
      const T* plane = in + static_cast<std::size_t>(ci) * H * W;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* dst = col.col((ci * k_ + ky) * k_ + kx).data();
          const int dy = ky - pad, dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int y = 0; y < H; ++y) {
            const int sy = y + dy;
            T* row = dst + y * W;
            if (sy < 0 || sy >= H) {
              std::fill(row, row + W, T(0));
              continue;
            }
            const T* src = plane + sy * W + dx;
            std::fill(row, row + x0, T(0));
            std::copy(src + x0, src + x1, row + x0);
            std::fill(row + x1, row + W, T(0));
          }
        }
      }
    }
  }

  void col2im(const Mat<T>& col, T* out) const {
    const int H = this->in_.h, W = this->in_.w, C = this->in_.c, pad = k_ / 2;
    for (int ci = 0; ci < C; ++ci) {
      T* plane = out + static_cast<std::size_t>(ci) * H * W;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* src = col.col((ci * k_ + ky) * k_ + kx).data();
          const int dy = ky - pad, dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
            T* row = plane + (y + dy) * W + dx;
            const T* s = src + y * W;
            for (int x = x0; x < x1; ++x) row[x] += s[x];
          }
        }
      }
    }
  }

  int k_;
  double gain_;
};

/// 2x2 average pooling with stride 2.
template <class T>
class AvgPool2 final : public Layer<T> {
 public:
  explicit AvgPool2(Shape in) : Layer<T>(in, Shape{in.c, in.h / 2, in.w / 2}) {
    bigroc::detail::require(in.h % 2 == 0 && in.w % 2 == 0,
                            "avgpool needs even spatial dims, got " + in.str());
  }

  void forward(const T*, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override {
    const int H = this->in_.h, W = this->in_.w, oh = H / 2, ow = W / 2;
    out.resize(static_cast<Eigen::Index>(this->out_.size()));
    for (int c = 0; c < this->in_.c; ++c) {
      const T* p = in.data() + static_cast<std::size_t>(c) * H * W;
      T* q = out.data() + static_cast<std::size_t>(c) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          q[y * ow + x] = T(0.25) * (p[2 * y * W + 2 * x] + p[2 * y * W + 2 * x + 1] +
                                     p[(2 * y + 1) * W + 2 * x] + p[(2 * y + 1) * W + 2 * x + 1]);
    }
  }

  void backward(const T*, const Vec<T>&, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin, T*,
                const Cache<T>&) const override {
    if (!gin) return;
    const int H = this->in_.h, W = this->in_.w, oh = H / 2, ow = W / 2;
    gin->resize(static_cast<Eigen::Index>(this->in_.size()));
    for (int c = 0; c < this->in_.c; ++c) {
      T* p = gin->data() + static_cast<std::size_t>(c) * H * W;
      const T* q = gout.data() + static_cast<std::size_t>(c) * oh * ow;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) p[y * W + x] = T(0.25) * q[(y / 2) * ow + x / 2];
    }
  }

  json descriptor() const override { return {{"type", "avgpool"}}; }
};

/// Mean over spatial positions: [C,H,W] -> [C,1,1].
template <class T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(Shape in) : Layer<T>(in, Shape{in.c, 1, 1}) {}

  void forward(const T*, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override {
    ConstMatMap<T> x(in.data(), this->in_.hw(), this->in_.c);
    out = x.colwise().mean().transpose();
  }

  void backward(const T*, const Vec<T>&, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin, T*,
                const Cache<T>&) const override {
    if (!gin) return;
    const int hw = this->in_.hw();
    gin->resize(static_cast<Eigen::Index>(this->in_.size()));
    MatMap<T> g(gin->data(), hw, this->in_.c);
    for (int c = 0; c < this->in_.c; ++c) g.col(c).setConstant(gout[c] / T(hw));
  }

  json descriptor() const override { return {{"type", "gap"}}; }
};

/// Dense layer over the flattened input.
template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(Shape in, int out_features, double init_gain = 1.0)
      : Layer<T>(in, Shape{out_features, 1, 1}), gain_(init_gain) {}

  int fan_in() const { return static_cast<int>(this->in_.size()); }
  std::size_t param_count() const override {
    return static_cast<std::size_t>(fan_in()) * this->out_.c + this->out_.c;
  }

  void init_params(T* p, std::mt19937_64& rng) const override {
    std::normal_distribution<double> nd(0.0, gain_ * std::sqrt(1.0 / fan_in()));
    const std::size_t nw = static_cast<std::size_t>(fan_in()) * this->out_.c;
    for (std::size_t i = 0; i < nw; ++i) p[i] = static_cast<T>(nd(rng));
    for (int i = 0; i < this->out_.c; ++i) p[nw + i] = T(0);
  }

  void forward(const T* params, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override {
    out.noalias() = weights(params) * in;
    out += bias(params);
  }

  void backward(const T* params, const Vec<T>& in, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin,
                T* gparams, const Cache<T>&) const override {
    if (gparams) {
      MatMap<T> gw(gparams, this->out_.c, fan_in());
      gw.noalias() += gout * in.transpose();
      Eigen::Map<Vec<T>> gb(gparams + static_cast<std::size_t>(fan_in()) * this->out_.c,
                            this->out_.c);
      gb += gout;
    }
    if (gin) gin->noalias() = weights(params).transpose() * gout;
  }

  json descriptor() const override {
    return {{"type", "linear"}, {"out_features", this->out_.c}, {"init_gain", gain_}};
  }

 private:
  ConstMatMap<T> weights(const T* p) const { return ConstMatMap<T>(p, this->out_.c, fan_in()); }
  Eigen::Map<const Vec<T>> bias(const T* p) const {
    return Eigen::Map<const Vec<T>>(p + static_cast<std::size_t>(fan_in()) * this->out_.c,
                                    this->out_.c);
  }
  double gain_;
};

/// Fixed per-channel affine map (x - mean_c) / std_c. Holds no trainable
/// parameters, so gradients flow back to raw pixels.
template <class T>
class Normalize final : public Layer<T> {
 public:
  Normalize(Shape in, std::vector<double> mean, std::vector<double> stdev)
      : Layer<T>(in, in), mean_(std::move(mean)), std_(std::move(stdev)) {
    bigroc::detail::require(static_cast<int>(mean_.size()) == in.c &&
                                static_cast<int>(std_.size()) == in.c,
                            "normalize: mean/std must have one entry per channel");
    for (double s : std_) bigroc::detail::require(s > 0.0, "normalize: std must be positive");
  }

  void forward(const T*, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override {
    out.resize(in.size());
    const int hw = this->in_.hw();
    for (int c = 0; c < this->in_.c; ++c) {
      const T m = static_cast<T>(mean_[c]), inv = static_cast<T>(1.0 / std_[c]);
      for (int i = 0; i < hw; ++i) out[c * hw + i] = (in[c * hw + i] - m) * inv;
    }
  }

  void backward(const T*, const Vec<T>& in, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin, T*,
                const Cache<T>&) const override {
    if (!gin) return;
    gin->resize(in.size());
    const int hw = this->in_.hw();
    for (int c = 0; c < this->in_.c; ++c) {
      const T inv = static_cast<T>(1.0 / std_[c]);
      for (int i = 0; i < hw; ++i) (*gin)[c * hw + i] = gout[c * hw + i] * inv;
    }
  }

  json descriptor() const override { return {{"type", "normalize"}, {"mean", mean_}, {"std", std_}}; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stdev() const { return std_; }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// Changes the logical shape without touching the data (sizes must agree).
template <class T>
class Reshape final : public Layer<T> {
 public:
  Reshape(Shape in, Shape out) : Layer<T>(in, out) {
    bigroc::detail::require(in.size() == out.size(),
                            "reshape " + in.str() + " -> " + out.str() + " changes size");
  }
  void forward(const T*, const Vec<T>& in, Vec<T>& out, Cache<T>&, Pass) const override { out = in; }
  void backward(const T*, const Vec<T>&, const Vec<T>&, const Vec<T>& gout, Vec<T>* gin, T*,
                const Cache<T>&) const override {
    if (gin) *gin = gout;
  }
  json descriptor() const override {
    return {{"type", "reshape"}, {"shape", {this->out_.c, this->out_.h, this->out_.w}}};
  }
};

/// out = act(x + conv2(act(conv1(x)))). The second convolution starts small so
/// freshly initialised blocks are close to the identity.
template <class T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(Shape in, ActFn fn)
      : Layer<T>(in, in), conv1_(in, in.c), conv2_(in, in.c, 3, 0.2), fn_(fn) {}

  std::size_t param_count() const override { return conv1_.param_count() + conv2_.param_count(); }

  void init_params(T* p, std::mt19937_64& rng) const override {
    conv1_.init_params(p, rng);
    conv2_.init_params(p + conv1_.param_count(), rng);
  }

  // cache.v = {h1, a1, h2, s}
  void forward(const T* params, const Vec<T>& in, Vec<T>& out, Cache<T>& cache,
               Pass pass) const override {
    cache.sub.resize(2);
    Vec<T> h1, a1, h2;
    conv1_.forward(params, in, h1, cache.sub[0], pass);
    a1.resize(h1.size());
    detail::act_forward(fn_, h1.data(), a1.data(), h1.size());
    conv2_.forward(params + conv1_.param_count(), a1, h2, cache.sub[1], pass);
    Vec<T> s = in + h2;
    out.resize(s.size());
    detail::act_forward(fn_, s.data(), out.data(), s.size());
    if (pass != Pass::Inference) {
      cache.v.resize(4);
      cache.v[0] = std::move(h1);
      cache.v[1] = std::move(a1);
      cache.v[2] = std::move(h2);
      cache.v[3] = std::move(s);
    }
  }

  void backward(const T* params, const Vec<T>& in, const Vec<T>& out, const Vec<T>& gout,
                Vec<T>* gin, T* gparams, const Cache<T>& cache) const override {
    const Vec<T>& h1 = cache.v[0];
    const Vec<T>& a1 = cache.v[1];
    const Vec<T>& h2 = cache.v[2];
    const Vec<T>& s = cache.v[3];
    Vec<T> gs(s.size());
    detail::act_backward(fn_, s.data(), out.data(), gout.data(), gs.data(), s.size());
    Vec<T> ga1, gh1(h1.size()), gx;
    conv2_.backward(params + conv1_.param_count(), a1, h2, gs, &ga1,
                    gparams ? gparams + conv1_.param_count() : nullptr, cache.sub[1]);
    detail::act_backward(fn_, h1.data(), a1.data(), ga1.data(), gh1.data(), h1.size());
    conv1_.backward(params, in, h1, gh1, gin ? &gx : nullptr, gparams, cache.sub[0]);
    if (gin) *gin = gs + gx;
  }

  json descriptor() const override { return {{"type", "resblock"}, {"fn", to_string(fn_)}}; }

 private:
  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
  ActFn fn_;
};

}  // namespace bigroc::nn
