#pragma once

// Uniform classifier interface: logits, cross-entropy input gradients and
// multi-scale features, plus the on-disk checkpoint format.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bigroc/image_batch.hpp"
#include "bigroc/io/fingerprint.hpp"
#include "bigroc/nn/loss.hpp"
#include "bigroc/nn/network.hpp"

namespace bigroc {

using nn::Mat;
using nn::Vec;

/// The implicit scale naming the final network output.
inline constexpr const char* kLogitsScale = "logits";

template <class T>
struct FeatureStack {
  std::vector<std::string> scales;
  std::vector<Vec<T>> features;

  std::size_t size() const { return features.size(); }
};

template <class T>
class Classifier {
 public:
  Classifier() = default;

  /// The network's final output is the logit vector; its length is the class count.
  Classifier(nn::Network<T> net, PixelRange range,
             std::optional<ThreatModel> trained_with = std::nullopt)
      : net_(std::move(net)), range_(range), trained_with_(trained_with) {
    const nn::Shape out = net_.output_shape();
    detail::require(out.h == 1 && out.w == 1 && out.c >= 2,
                    "classifier output must be a vector of >= 2 logits, got " + out.str());
  }

  int class_count() const { return net_.output_shape().c; }
  nn::Shape input_shape() const { return net_.input_shape(); }
  const PixelRange& pixel_range() const { return range_; }
  const std::optional<ThreatModel>& training_threat_model() const { return trained_with_; }
  void set_training_threat_model(std::optional<ThreatModel> tm) { trained_with_ = tm; }

  const nn::Network<T>& network() const { return net_; }
  nn::Network<T>& network() { return net_; }

  /// Declared feature scales, always ending with "logits".
  std::vector<std::string> scale_names() const {
    std::vector<std::string> s = net_.scale_names();
    s.emplace_back(kLogitsScale);
    return s;
  }

  void check_input(const Vec<T>& x) const {
    const nn::Shape s = input_shape();
    if (static_cast<std::size_t>(x.size()) != s.size())
      throw InvalidArgument("input has " + std::to_string(x.size()) + " values, expected " +
                            std::to_string(s.size()) + " for shape " + s.str());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = static_cast<double>(x[i]);
      if (!std::isfinite(v)) throw NonFiniteError("input pixel " + std::to_string(i) + " is not finite", i);
      if (!range_.contains(v))
        throw InvalidArgument("input pixel " + std::to_string(i) + " = " + std::to_string(v) +
                              " outside expected range [" + std::to_string(range_.lo) + ", " +
                              std::to_string(range_.hi) + "]");
    }
  }

  void check_label(int y) const {
    detail::require(y >= 0 && y < class_count(), "class index " + std::to_string(y) +
                                                     " outside [0, " +
                                                     std::to_string(class_count()) + ")");
  }

  Vec<T> logits(const Vec<T>& x) const {
    check_input(x);
    Vec<T> z = net_.forward(x);
    if (!z.allFinite()) throw NonFiniteError("non-finite logits", -1);
    return z;
  }

  /// Logits for every image, one row per image.
  Eigen::MatrixXd predict_logits(const ImageBatch<T>& batch) const {
    detail::require(batch.shape == input_shape(), "batch shape " + batch.shape.str() +
                                                      " does not match classifier input " +
                                                      input_shape().str());
    detail::require(batch.range == range_, "batch pixel range differs from the classifier's");
    Eigen::MatrixXd out(batch.size(), class_count());
    for (int i = 0; i < batch.size(); ++i) out.row(i) = logits(batch.image(i)).template cast<double>().transpose();
    return out;
  }

  /// Cross-entropy loss at x for class y; writes d loss / d x into `grad`.
  double loss_and_input_gradient(const Vec<T>& x, int y, Vec<T>& grad) const {
    check_input(x);
    check_label(y);
    nn::Tape<T> tape;
    net_.forward(x, tape, nn::Pass::InputGrad);
    if (!tape.output().allFinite()) throw NonFiniteError("non-finite logits", -1);
    Vec<T> gz;
    const double loss = nn::cross_entropy_grad(tape.output(), y, gz);
    grad = net_.backward(tape, gz);
    return loss;
  }

  Vec<T> input_gradient(const Vec<T>& x, int y) const {
    Vec<T> g;
    loss_and_input_gradient(x, y, g);
    return g;
  }

  /// (d logits / d x)^T * glogits.
  Vec<T> logit_vjp(const Vec<T>& x, const Vec<T>& glogits) const {
    check_input(x);
    nn::Tape<T> tape;
    net_.forward(x, tape, nn::Pass::InputGrad);
    return net_.backward(tape, glogits);
  }

  /// Runs a forward pass keeping every activation; callers pick scales with act_index().
  void forward_tape(const Vec<T>& x, nn::Tape<T>& tape, nn::Pass pass) const {
    check_input(x);
    net_.forward(x, tape, pass);
  }

  std::size_t act_index(const std::string& scale) const {
    if (scale == kLogitsScale) return net_.layer_count();
    return net_.scale_act_index(scale);
  }

  FeatureStack<T> extract_features(const Vec<T>& x, const std::vector<std::string>& scales) const {
    detail::require(!scales.empty(), "extract_features: at least one scale required");
    std::vector<std::size_t> idx;
    for (const auto& s : scales) idx.push_back(act_index(s));
    nn::Tape<T> tape;
    forward_tape(x, tape, nn::Pass::Inference);
    FeatureStack<T> out;
    out.scales = scales;
    for (std::size_t i : idx) out.features.push_back(tape.acts[i]);
    return out;
  }

  template <class U>
  Classifier<U> cast() const {
    return Classifier<U>(net_.template cast<U>(), range_, trained_with_);
  }

  std::string fingerprint() const { return io::fingerprint_values<T>(net_.params()); }

  /// Sidecar metadata written next to the parameter archive.
  nn::json sidecar() const {
    nn::json norm = {{"mean", std::vector<double>(input_shape().c, 0.0)},
                     {"std", std::vector<double>(input_shape().c, 1.0)}};
    if (net_.layer_count() > 0)
      if (auto* n = dynamic_cast<const nn::Normalize<T>*>(&net_.layer(0)))
        norm = {{"mean", n->mean()}, {"std", n->stdev()}};
    nn::json tm = nullptr;
    if (trained_with_)
      tm = {{"norm", std::string(to_string(trained_with_->norm))}, {"epsilon", trained_with_->epsilon}};
    return {{"architecture", net_.descriptor()},
            {"class_count", class_count()},
            {"pixel_range", {range_.lo, range_.hi}},
            {"normalization", norm},
            {"scales", scale_names()},
            {"training_threat_model", tm},
            {"robust", trained_with_.has_value() && trained_with_->epsilon > 0.0},
            {"param_count", net_.param_count()},
            {"param_sha256", fingerprint()}};
  }

 private:
  nn::Network<T> net_;
  PixelRange range_;
  std::optional<ThreatModel> trained_with_;
};

// ---- checkpoint directory ---------------------------------------------------

inline constexpr char kParamMagic[8] = {'B', 'I', 'G', 'R', 'O', 'C', 'P', '1'};
inline constexpr const char* kParamFile = "params.bin";
inline constexpr const char* kSidecarFile = "model.json";

template <class T>
void save_checkpoint(const Classifier<T>& clf, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / kParamFile, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / kParamFile).string());
    f.write(kParamMagic, sizeof(kParamMagic));
    const auto& p = clf.network().params();
    const std::uint64_t n = p.size();
    unsigned char le[8];
    for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>(n >> (8 * b));
    f.write(reinterpret_cast<const char*>(le), 8);
    for (const T v : p) {
      const double d = static_cast<double>(v);
      std::uint64_t u;
      std::memcpy(&u, &d, 8);
      for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>(u >> (8 * b));
      f.write(reinterpret_cast<const char*>(le), 8);
    }
    if (!f) throw IoError("short write to " + (dir / kParamFile).string());
  }
  std::ofstream s(dir / kSidecarFile, std::ios::trunc);
  if (!s) throw IoError("cannot write " + (dir / kSidecarFile).string());
  s << clf.sidecar().dump(2) << "\n";
}

template <class T>
Classifier<T> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream s(dir / kSidecarFile);
  if (!s) throw IoError("missing sidecar " + (dir / kSidecarFile).string());
  nn::json meta;
  try {
    s >> meta;
  } catch (const nn::json::exception& e) {
    throw IoError("malformed sidecar " + (dir / kSidecarFile).string() + ": " + e.what());
  }
  auto net = nn::Network<T>::from_descriptor(meta.at("architecture"));
  std::ifstream f(dir / kParamFile, std::ios::binary);
  if (!f) throw IoError("missing parameter archive " + (dir / kParamFile).string());
  char magic[8];
  unsigned char le[8];
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(le), 8);
  if (!f || std::memcmp(magic, kParamMagic, 8) != 0)
    throw IoError("not a parameter archive: " + (dir / kParamFile).string());
  std::uint64_t n = 0;
  for (int b = 0; b < 8; ++b) n |= static_cast<std::uint64_t>(le[b]) << (8 * b);
  if (n != net.param_count())
    throw IoError("parameter archive holds " + std::to_string(n) + " values, architecture needs " +
                  std::to_string(net.param_count()));
  for (std::uint64_t i = 0; i < n; ++i) {
    f.read(reinterpret_cast<char*>(le), 8);
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(le[b]) << (8 * b);
    double d;
    std::memcpy(&d, &u, 8);
    net.params()[i] = static_cast<T>(d);
  }
  if (!f) throw IoError("truncated parameter archive " + (dir / kParamFile).string());
  const auto pr = meta.at("pixel_range");
  std::optional<ThreatModel> tm;
  if (!meta.at("training_threat_model").is_null()) {
    const auto& t = meta.at("training_threat_model");
    tm = ThreatModel(parse_norm(t.at("norm").get<std::string>()), t.at("epsilon").get<double>());
  }
  Classifier<T> clf(std::move(net), PixelRange(pr.at(0).get<double>(), pr.at(1).get<double>()), tm);
  detail::require(meta.at("class_count").get<int>() == clf.class_count(),
                  "sidecar class_count disagrees with the architecture");
  return clf;
}

}  // namespace bigroc
