#pragma once

#include <string>
#include <vector>

#include "bigroc/nn/tensor.hpp"
#include "bigroc/threat_model.hpp"

namespace bigroc {

/// A set of same-shaped images with pixel values in a declared range. Images
/// are stored one per column in CHW order.
template <class T = float>
struct ImageBatch {
  nn::Shape shape;
  PixelRange range;
  nn::Mat<T> pixels;                // shape.size() x count
  std::vector<int> labels;          // empty, or one label per image
  std::vector<std::string> names;   // empty, or one source file name per image
  std::string generator;

  ImageBatch() = default;
  ImageBatch(nn::Shape s, PixelRange r, int count)
      : shape(s), range(r), pixels(nn::Mat<T>::Zero(static_cast<Eigen::Index>(s.size()), count)) {}

  int size() const { return static_cast<int>(pixels.cols()); }
  bool empty() const { return pixels.cols() == 0; }
  bool has_labels() const { return !labels.empty(); }

  nn::Vec<T> image(int i) const { return pixels.col(i); }
  void set_image(int i, const nn::Vec<T>& v) { pixels.col(i) = v; }

  /// Throws unless every pixel is finite and inside the declared range and the
  /// label / name vectors are either empty or cover every image.
  void validate() const {
    detail::require(static_cast<std::size_t>(pixels.rows()) == shape.size(),
                    "image batch rows do not match shape " + shape.str());
    detail::require(labels.empty() || static_cast<int>(labels.size()) == size(),
                    "label count " + std::to_string(labels.size()) + " does not match " +
                        std::to_string(size()) + " images");
    detail::require(names.empty() || static_cast<int>(names.size()) == size(),
                    "name count does not match image count");
    for (Eigen::Index j = 0; j < pixels.cols(); ++j)
      for (Eigen::Index i = 0; i < pixels.rows(); ++i) {
        const double v = static_cast<double>(pixels(i, j));
        if (!std::isfinite(v) || !range.contains(v))
          throw InvalidArgument("image " + std::to_string(j) + " pixel " + std::to_string(i) +
                                " = " + std::to_string(v) + " outside [" +
                                std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
      }
  }

  /// Images [begin, begin + count) as a new batch (labels and names follow).
  ImageBatch slice(int begin, int count) const {
    ImageBatch out;
    out.shape = shape;
    out.range = range;
    out.generator = generator;
    out.pixels = pixels.middleCols(begin, count);
    if (has_labels()) out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
    if (!names.empty()) out.names.assign(names.begin() + begin, names.begin() + begin + count);
    return out;
  }

  template <class U>
  ImageBatch<U> cast() const {
    ImageBatch<U> out;
    out.shape = shape;
    out.range = range;
    out.pixels = pixels.template cast<U>();
    out.labels = labels;
    out.names = names;
    out.generator = generator;
    return out;
  }
};

}  // namespace bigroc
