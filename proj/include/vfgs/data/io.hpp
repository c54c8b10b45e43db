#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "vfgs/data/gif.hpp"
#include "vfgs/data/sample.hpp"
#include "vfgs/data/transforms.hpp"

namespace vfgs::data {

namespace fs = std::filesystem;

// Decoded raster with planes in R, G, B order (or a single plane).
struct Raster {
  Index height = 0, width = 0, planes = 0;
  double max_value = 255;
  std::vector<double> data;  // plane-interleaved: (r * width + c) * planes + k

  double at(Index r, Index c, Index k) const { return data[static_cast<std::size_t>((r * width + c) * planes + k)]; }
};

inline std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return e;
}

inline Raster read_raster(const std::string& path) {
  if (!fs::exists(path)) throw DataError("file not found: " + path);
  Raster r;
  if (lower_ext(path) == ".gif") {
    const auto f = read_gif(path);
    r.height = f.height;
    r.width = f.width;
    r.planes = 3;
    r.data.assign(f.rgb.begin(), f.rgb.end());
    return r;
  }
  cv::Mat m;
  try {
    m = cv::imread(path, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode " + path + ": " + e.what());
  }
  if (m.empty()) throw DataError("cannot decode " + path + " as a raster image");
  r.height = m.rows;
  r.width = m.cols;
  r.planes = m.channels() >= 3 ? 3 : 1;
  switch (m.depth()) {
    case CV_8U: r.max_value = 255; break;
    case CV_16U: r.max_value = 65535; break;
    default: throw DataError("unsupported sample depth in " + path);
  }
  cv::Mat md;
  m.convertTo(md, CV_64F);
  r.data.resize(static_cast<std::size_t>(r.height * r.width * r.planes));
  const int ch = m.channels();
  for (Index y = 0; y < r.height; ++y) {
    const double* row = md.ptr<double>(static_cast<int>(y));
    for (Index x = 0; x < r.width; ++x) {
      if (r.planes == 1) {
        r.data[static_cast<std::size_t>(y * r.width + x)] = row[x * ch];
      } else {
        // OpenCV stores BGR(A).
        for (Index k = 0; k < 3; ++k)
          r.data[static_cast<std::size_t>((y * r.width + x) * 3 + k)] = row[x * ch + (2 - k)];
      }
    }
  }
  return r;
}

// Green plane (index 1) of an RGB raster, or the sole plane of a grayscale
// one, rescaled to [0,1].
inline ImagePlane green_channel(const Raster& r) {
  ImagePlane p(r.height, r.width);
  const Index k = r.planes >= 3 ? 1 : 0;
  for (Index y = 0; y < r.height; ++y)
    for (Index x = 0; x < r.width; ++x) p.at(y, x) = static_cast<float>(r.at(y, x, k) / r.max_value);
  return p;
}

// First plane of a mask raster as 8-bit values.
inline Plane<std::uint8_t> raw_mask(const Raster& r) {
  Plane<std::uint8_t> p(r.height, r.width);
  for (Index y = 0; y < r.height; ++y)
    for (Index x = 0; x < r.width; ++x)
      p.at(y, x) = static_cast<std::uint8_t>(std::lround(r.at(y, x, 0) * 255.0 / r.max_value));
  return p;
}

inline const std::vector<std::string>& raster_extensions() {
  static const std::vector<std::string> ext{".png", ".tif", ".tiff", ".jpg", ".jpeg", ".gif", ".ppm", ".bmp"};
  return ext;
}

inline bool is_raster(const fs::path& p) {
  const auto e = lower_ext(p);
  return std::find(raster_extensions().begin(), raster_extensions().end(), e) != raster_extensions().end();
}

// Candidate mask stems for an image stem: the shared stem first, then the
// dataset's native annotation naming (DRIVE 21_training -> 21_manual1,
// CHASE_DB1 Image_01L -> Image_01L_1stHO, STARE im0001 -> im0001.ah).
inline std::vector<std::string> mask_stem_candidates(const std::string& stem, DatasetId id) {
  std::vector<std::string> c{stem};
  switch (id) {
    case DatasetId::DRIVE: {
      const auto us = stem.find('_');
      if (us != std::string::npos) c.push_back(stem.substr(0, us) + "_manual1");
      break;
    }
    case DatasetId::CHASE_DB1: c.push_back(stem + "_1stHO"); break;
    case DatasetId::STARE: c.push_back(stem + ".ah"); break;
    case DatasetId::HRF: break;
  }
  return c;
}

inline fs::path find_mask(const fs::path& image_path, DatasetId id) {
  const fs::path dir = image_path.parent_path().parent_path() / "masks";
  const std::string stem = image_path.stem().string();
  if (fs::is_directory(dir)) {
    for (const auto& cand : mask_stem_candidates(stem, id)) {
      for (const auto& e : raster_extensions()) {
        const fs::path p = dir / (cand + e);
        if (fs::exists(p)) return p;
      }
    }
  }
  throw DataError("no mask paired with " + image_path.string() + " (looked in " + dir.string() + " for stem '" + stem +
                  "' and the " + dataset_name(id) + " naming convention)");
}

inline ImageSample load_sample(const std::string& path, DatasetId id, Split split = Split::Train) {
  ImageSample s;
  s.image = green_channel(read_raster(path));
  const fs::path mask_path = find_mask(path, id);
  s.mask = binarize_mask(raw_mask(read_raster(mask_path.string())));
  if (!s.image.same_shape(s.mask))
    throw DataError("image " + path + " and mask " + mask_path.string() + " differ in size");
  s.dataset_id = id;
  s.source_path = path;
  s.split = split;
  return s;
}

inline void write_png(const std::string& path, const Plane<std::uint8_t>& p) {
  cv::Mat m(static_cast<int>(p.height), static_cast<int>(p.width), CV_8UC1, const_cast<std::uint8_t*>(p.data.data()));
  if (!cv::imwrite(path, m)) throw DataError("cannot write " + path);
}

inline void write_png(const std::string& path, const RgbImage& img) {
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3);
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x) {
      const auto* px = img.px(y, x);
      m.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) = cv::Vec3b(px[2], px[1], px[0]);
    }
  if (!cv::imwrite(path, m)) throw DataError("cannot write " + path);
}

inline void write_png(const std::string& path, const ImagePlane& p) {
  Plane<std::uint8_t> q(p.height, p.width);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    q.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(p.data[i], 0.f, 1.f) * 255.f));
  write_png(path, q);
}

}  // namespace vfgs::data
