#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vfgs/image.hpp"

namespace vfgs::data {

enum class DatasetId { DRIVE, HRF, CHASE_DB1, STARE };
enum class Split { Train, Val, Test };

inline std::string dataset_name(DatasetId d) {
  switch (d) {
    case DatasetId::DRIVE: return "DRIVE";
    case DatasetId::HRF: return "HRF";
    case DatasetId::CHASE_DB1: return "CHASE_DB1";
    case DatasetId::STARE: return "STARE";
  }
  return "?";
}

inline DatasetId parse_dataset(const std::string& s) {
  for (auto d : {DatasetId::DRIVE, DatasetId::HRF, DatasetId::CHASE_DB1, DatasetId::STARE})
    if (dataset_name(d) == s) return d;
  throw ConfigError("unknown dataset '" + s + "' (expected DRIVE, HRF, CHASE_DB1 or STARE)");
}

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  for (auto v : {Split::Train, Split::Val, Split::Test})
    if (split_name(v) == s) return v;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

// One fundus image (green channel in [0,1]) with its binary vessel mask.
struct ImageSample {
  ImagePlane image;
  BinaryMask mask;
  DatasetId dataset_id = DatasetId::DRIVE;
  std::string source_path;
  Split split = Split::Train;

  void validate() const {
    if (!image.same_shape(mask)) throw ShapeError("ImageSample: image and mask shapes differ");
    for (float v : image.data)
      if (!(v >= 0.f && v <= 1.f)) throw ContractError("ImageSample: image value outside [0,1]");
    for (auto v : mask.data)
      if (v > 1) throw ContractError("ImageSample: mask value outside {0,1}");
  }
};

struct AugmentConfig {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double max_rotation_deg = 7.0;
  std::pair<double, double> gamma_range{0.7, 1.5};
  double p_gamma = 0.5;
  double p_clahe = 0.3;
  double clahe_clip_limit = 2.0;
  std::pair<Index, Index> clahe_tiles{8, 8};
  std::pair<Index, Index> target_size{512, 512};
  std::uint64_t rng_seed = 0;

  // Every random transform off; only the final resize remains.
  static AugmentConfig identity() {
    AugmentConfig c;
    c.p_hflip = c.p_vflip = c.p_gamma = c.p_clahe = 0;
    c.max_rotation_deg = 0;
    return c;
  }

  void validate() const {
    for (double p : {p_hflip, p_vflip, p_gamma, p_clahe})
      if (!(p >= 0 && p <= 1)) throw ConfigError("augment: probabilities must lie in [0,1]");
    if (!(gamma_range.first > 0) || gamma_range.second < gamma_range.first)
      throw ConfigError("augment: gamma range must satisfy 0 < low <= high");
    if (!(max_rotation_deg >= 0)) throw ConfigError("augment: max_rotation_deg must be >= 0");
    if (target_size.first < 1 || target_size.second < 1) throw ConfigError("augment: target size must be positive");
    if (clahe_tiles.first < 1 || clahe_tiles.second < 1) throw ConfigError("augment: CLAHE tiles must be positive");
    if (!(clahe_clip_limit > 0)) throw ConfigError("augment: CLAHE clip limit must be > 0");
  }
};

struct SplitSpec {
  DatasetId dataset_id = DatasetId::DRIVE;
  std::vector<std::string> train_ids, val_ids, test_ids;

  const std::vector<std::string>& ids(Split s) const {
    switch (s) {
      case Split::Train: return train_ids;
      case Split::Val: return val_ids;
      case Split::Test: return test_ids;
    }
    return train_ids;
  }
};

}  // namespace vfgs::data
