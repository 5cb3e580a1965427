#pragma once

// Image-set manifests: a JSON list of PNG files (relative to the manifest's
// directory) with optional labels, the declared pixel range and a generator tag.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bigroc/image_batch.hpp"
#include "bigroc/io/png.hpp"

namespace bigroc::io {

struct ManifestEntry {
  std::string file;
  std::optional<int> label;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  PixelRange pixel_range;
  std::string generator;
  std::vector<ManifestEntry> images;
  std::filesystem::path root;  // directory the file paths are relative to; not serialised

  bool labeled() const { return !images.empty() && images.front().label.has_value(); }

  nlohmann::json to_json() const {
    nlohmann::json imgs = nlohmann::json::array();
    for (const auto& e : images) {
      nlohmann::json j = {{"file", e.file}};
      if (e.label) j["label"] = *e.label;
      imgs.push_back(std::move(j));
    }
    return {{"pixel_range", {pixel_range.lo, pixel_range.hi}},
            {"generator", generator},
            {"images", imgs}};
  }

  /// Throws unless labels are all-or-nothing and, when `check_files`, every file exists.
  void validate(bool check_files = true) const {
    bool any = false, all = true;
    for (const auto& e : images) {
      any = any || e.label.has_value();
      all = all && e.label.has_value();
      if (e.file.empty()) throw IoError("manifest entry with empty file name");
      if (std::filesystem::path(e.file).is_absolute())
        throw IoError("manifest paths must be relative: " + e.file);
      if (check_files && !std::filesystem::is_regular_file(root / e.file))
        throw IoError("manifest lists missing file " + (root / e.file).string());
    }
    if (any && !all) throw IoError("manifest labels must cover every image or none");
  }

  static Manifest from_json(const nlohmann::json& j, const std::filesystem::path& root) {
    Manifest m;
    m.root = root;
    try {
      const auto& pr = j.at("pixel_range");
      if (!pr.is_array() || pr.size() != 2) throw IoError("pixel_range must be [lo, hi]");
      m.pixel_range = PixelRange(pr.at(0).get<double>(), pr.at(1).get<double>());
      m.generator = j.value("generator", std::string());
      for (const auto& e : j.at("images")) {
        ManifestEntry me;
        me.file = e.at("file").get<std::string>();
        if (e.contains("label") && !e.at("label").is_null()) me.label = e.at("label").get<int>();
        m.images.push_back(std::move(me));
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed manifest: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("malformed manifest: ") + e.what());
    }
    return m;
  }

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.pixel_range == b.pixel_range && a.generator == b.generator && a.images == b.images;
  }
};

inline Manifest read_manifest(const std::filesystem::path& path, bool check_files = true) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  Manifest m = Manifest::from_json(j, path.parent_path());
  m.validate(check_files);
  return m;
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest " + path.string());
  f << m.to_json().dump(2) << "\n";
  if (!f) throw IoError("short write to " + path.string());
}

/// Decodes every listed image into a batch in the manifest's pixel range.
/// All images must share one shape.
template <class T = float>
ImageBatch<T> load_images(const Manifest& m) {
  m.validate(true);
  ImageBatch<T> b;
  b.range = m.pixel_range;
  b.generator = m.generator;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    const auto& e = m.images[i];
    PngImage img = read_png(m.root / e.file, m.pixel_range);
    if (i == 0) {
      b.shape = img.shape;
      b.pixels.resize(static_cast<Eigen::Index>(img.shape.size()),
                      static_cast<Eigen::Index>(m.images.size()));
    } else if (!(img.shape == b.shape)) {
      throw IoError(e.file + " has shape " + img.shape.str() + ", expected " + b.shape.str());
    }
    for (std::size_t k = 0; k < img.chw.size(); ++k)
      b.pixels(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          static_cast<T>(img.chw[k]);
    b.names.push_back(e.file);
    if (e.label) b.labels.push_back(*e.label);
  }
  return b;
}

inline std::string default_image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.png", i);
  return buf;
}

/// Writes one PNG per image into `dir` (the batch's names, or img_NNNNN.png)
/// plus `dir/manifest.json`, and returns the manifest.
template <class T>
Manifest save_images(const ImageBatch<T>& b, const std::filesystem::path& dir,
                     bool with_labels = true) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.root = dir;
  m.pixel_range = b.range;
  m.generator = b.generator;
  for (int i = 0; i < b.size(); ++i) {
    ManifestEntry e;
    e.file = b.names.empty() ? default_image_name(i) : b.names[i];
    if (with_labels && b.has_labels()) e.label = b.labels[i];
    std::filesystem::create_directories((dir / e.file).parent_path());
    write_png(dir / e.file, b.shape, b.image(i), b.range);
    m.images.push_back(std::move(e));
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace bigroc::io
