#pragma once

// Sequential network over a flat parameter vector, built from (and serialisable
// to) a JSON architecture descriptor. Selected layer outputs are exposed as
// named feature "scales".

#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bigroc/nn/layers.hpp"

namespace bigroc::nn {

/// Activations and caches of one forward pass, consumed by backward().
template <class T>
struct Tape {
  std::vector<Vec<T>> acts;  // acts[0] = input, acts[i + 1] = output of layer i
  std::vector<Cache<T>> caches;
  Pass pass = Pass::Inference;

  const Vec<T>& output() const { return acts.back(); }
};

template <class T>
class Network {
 public:
  Network() = default;

  explicit Network(Shape input) : input_(input) {}

  Shape input_shape() const { return input_; }
  Shape output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

  // ---- builder -----------------------------------------------------------

  Network& add(std::shared_ptr<const Layer<T>> l) {
    bigroc::detail::require(l->input_shape() == output_shape(),
                            "layer input " + l->input_shape().str() + " does not match " +
                                output_shape().str());
    offsets_.push_back(params_.size());
    params_.resize(params_.size() + l->param_count(), T(0));
    layers_.push_back(std::move(l));
    return *this;
  }

  Network& normalize(std::vector<double> mean, std::vector<double> stdev) {
    return add(std::make_shared<Normalize<T>>(output_shape(), std::move(mean), std::move(stdev)));
  }
  Network& conv(int out_channels, int kernel = 3) {
    return add(std::make_shared<Conv2d<T>>(output_shape(), out_channels, kernel));
  }
  Network& act(ActFn f) { return add(std::make_shared<Activation<T>>(output_shape(), f)); }
  Network& avgpool() { return add(std::make_shared<AvgPool2<T>>(output_shape())); }
  Network& gap() { return add(std::make_shared<GlobalAvgPool<T>>(output_shape())); }
  Network& resblock(ActFn f) { return add(std::make_shared<ResidualBlock<T>>(output_shape(), f)); }
  Network& linear(int out, double gain = 1.0) {
    return add(std::make_shared<Linear<T>>(output_shape(), out, gain));
  }
  Network& reshape(Shape s) { return add(std::make_shared<Reshape<T>>(output_shape(), s)); }

  /// Marks the output of the most recently added layer as a feature scale.
  Network& mark_scale(std::string name) {
    bigroc::detail::require(!layers_.empty(), "mark_scale before any layer");
    for (const auto& [n, idx] : scales_)
      bigroc::detail::require(n != name, "duplicate scale '" + name + "'");
    scales_.emplace_back(std::move(name), layers_.size() - 1);
    return *this;
  }

  const std::vector<std::pair<std::string, std::size_t>>& scales() const { return scales_; }

  std::vector<std::string> scale_names() const {
    std::vector<std::string> out;
    for (const auto& s : scales_) out.push_back(s.first);
    return out;
  }

  // ---- parameters --------------------------------------------------------

  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  void init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->init_params(params_.data() + offsets_[i], rng);
  }

  template <class U>
  Network<U> cast() const {
    Network<U> out = Network<U>::from_descriptor(descriptor());
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

  // ---- evaluation --------------------------------------------------------

  void forward(const Vec<T>& x, Tape<T>& tape, Pass pass = Pass::Inference) const {
    bigroc::detail::require(static_cast<std::size_t>(x.size()) == input_.size(),
                            "network input has " + std::to_string(x.size()) + " values, expected " +
                                std::to_string(input_.size()) + " " + input_.str());
    tape.pass = pass;
    tape.acts.resize(layers_.size() + 1);
    tape.caches.assign(layers_.size(), Cache<T>{});
    tape.acts[0] = x;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->forward(params_.data() + offsets_[i], tape.acts[i], tape.acts[i + 1],
                          tape.caches[i], pass);
  }

  Vec<T> forward(const Vec<T>& x) const {
    Tape<T> tape;
    forward(x, tape, Pass::Inference);
    return std::move(tape.acts.back());
  }

  /// Backpropagates `gout` (gradient w.r.t. the network output). Parameter
  /// gradients are accumulated into `gparams` when it is non-null.
  Vec<T> backward(const Tape<T>& tape, const Vec<T>& gout, T* gparams = nullptr) const {
    std::vector<Vec<T>> inject(layers_.size() + 1);
    inject.back() = gout;
    return vjp(tape, inject, gparams);
  }

  /// Vector-Jacobian product with gradients injected at arbitrary activations:
  /// inject[i] (possibly empty) is the gradient w.r.t. acts[i]. Returns the
  /// gradient w.r.t. the input. Throws NonFiniteError naming the first layer
  /// whose input gradient is not finite.
  Vec<T> vjp(const Tape<T>& tape, const std::vector<Vec<T>>& inject, T* gparams = nullptr) const {
    bigroc::detail::require(tape.pass != Pass::Inference, "backward on an inference-only tape");
    bigroc::detail::require(gparams == nullptr || tape.pass == Pass::ParamGrad,
                            "parameter gradients need a ParamGrad tape");
    bigroc::detail::require(inject.size() == layers_.size() + 1, "vjp: one slot per activation");
    std::size_t top = inject.size();
    while (top > 0 && inject[top - 1].size() == 0) --top;
    if (top == 0) return Vec<T>::Zero(static_cast<Eigen::Index>(input_.size()));
    Vec<T> g = inject[top - 1], gin;
    for (std::size_t i = top - 1; i-- > 0;) {
      layers_[i]->backward(params_.data() + offsets_[i], tape.acts[i], tape.acts[i + 1], g, &gin,
                           gparams ? gparams + offsets_[i] : nullptr, tape.caches[i]);
      if (!gin.allFinite()) {
        throw NonFiniteError("non-finite gradient produced by layer " + std::to_string(i) + " (" +
                                 layers_[i]->descriptor().at("type").template get<std::string>() +
                                 ")",
                             static_cast<std::ptrdiff_t>(i));
      }
      if (inject[i].size() != 0) gin += inject[i];
      std::swap(g, gin);
    }
    return g;
  }

  /// Index into Tape::acts holding the output of the named scale.
  std::size_t scale_act_index(const std::string& name) const {
    for (const auto& [n, idx] : scales_)
      if (n == name) return idx + 1;
    std::string avail;
    for (const auto& [n, idx] : scales_) avail += (avail.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown feature scale '" + name + "' (available: " + avail + ")");
  }

  // ---- descriptor --------------------------------------------------------

  json descriptor() const {
    json layers = json::array();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      json d = layers_[i]->descriptor();
      for (const auto& [name, idx] : scales_)
        if (idx == i) d["scale"] = name;
      layers.push_back(std::move(d));
    }
    return {{"input", {input_.c, input_.h, input_.w}}, {"layers", std::move(layers)}};
  }

  static Network from_descriptor(const json& d) {
    try {
      const auto in = d.at("input");
      Network net(Shape{in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()});
      for (const json& l : d.at("layers")) {
        const std::string type = l.at("type").get<std::string>();
        const Shape s = net.output_shape();
        if (type == "normalize") {
          net.normalize(l.at("mean").get<std::vector<double>>(),
                        l.at("std").get<std::vector<double>>());
        } else if (type == "conv") {
          net.add(std::make_shared<Conv2d<T>>(s, l.at("out_channels").get<int>(),
                                              l.value("kernel", 3), l.value("init_gain", 1.0)));
        } else if (type == "act") {
          net.act(parse_act(l.at("fn").get<std::string>()));
        } else if (type == "avgpool") {
          net.avgpool();
        } else if (type == "gap") {
          net.gap();
        } else if (type == "resblock") {
          net.resblock(parse_act(l.at("fn").get<std::string>()));
        } else if (type == "linear") {
          net.linear(l.at("out_features").get<int>(), l.value("init_gain", 1.0));
        } else if (type == "reshape") {
          const auto sh = l.at("shape");
          net.reshape(Shape{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()});
        } else {
          throw InvalidArgument("unknown layer type '" + type + "' in architecture descriptor");
        }
        if (l.contains("scale")) net.mark_scale(l.at("scale").get<std::string>());
      }
      return net;
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("malformed architecture descriptor: ") + e.what());
    }
  }

 private:
  Shape input_;
  std::vector<std::shared_ptr<const Layer<T>>> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<T> params_;
  std::vector<std::pair<std::string, std::size_t>> scales_;
};

}  // namespace bigroc::nn
