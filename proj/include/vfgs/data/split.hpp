#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vfgs/data/io.hpp"

namespace vfgs::data {

inline std::string layout_help(DatasetId id) {
  const std::string d = dataset_name(id);
  return "expected layout: <root>/" + d + "/images/<stem>.<png|tif|jpg|gif|ppm>, <root>/" + d +
         "/masks/<stem>.<ext> (shared stem or the dataset's native annotation name), optional <root>/" + d +
         "/splits/{train,val,test}.txt with one stem per line";
}

inline fs::path dataset_dir(const fs::path& root, DatasetId id) { return root / dataset_name(id); }

inline std::vector<std::string> list_image_stems(const fs::path& root, DatasetId id) {
  const fs::path dir = dataset_dir(root, id) / "images";
  if (!fs::is_directory(dir) || !fs::is_directory(dataset_dir(root, id) / "masks"))
    throw DataError("dataset " + dataset_name(id) + " not found under " + root.string() + "; " + layout_help(id));
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_raster(e.path())) stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw DataError("no images in " + dir.string() + "; " + layout_help(id));
  return stems;
}

inline fs::path image_path(const fs::path& root, DatasetId id, const std::string& stem) {
  const fs::path dir = dataset_dir(root, id) / "images";
  for (const auto& e : raster_extensions()) {
    const fs::path p = dir / (stem + e);
    if (fs::exists(p)) return p;
  }
  throw DataError("no image with stem '" + stem + "' in " + dir.string());
}

inline std::vector<std::string> read_manifest(const fs::path& p) {
  std::vector<std::string> ids;
  if (!fs::exists(p)) return ids;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

inline void write_manifest(const fs::path& p, const std::vector<std::string>& ids) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  for (const auto& id : ids) out << id << '\n';
}

inline void check_disjoint(const SplitSpec& s) {
  std::set<std::string> seen;
  for (const auto* list : {&s.train_ids, &s.val_ids, &s.test_ids})
    for (const auto& id : *list)
      if (!seen.insert(id).second) throw DataError("split lists overlap on sample '" + id + "'");
}

namespace detail {

inline long leading_number(const std::string& stem) {
  std::size_t i = 0;
  while (i < stem.size() && !std::isdigit(static_cast<unsigned char>(stem[i]))) ++i;
  std::size_t j = i;
  while (j < stem.size() && std::isdigit(static_cast<unsigned char>(stem[j]))) ++j;
  return i == j ? -1 : std::stol(stem.substr(i, j - i));
}

inline void split_head(const std::vector<std::string>& stems, std::size_t n_train, SplitSpec& s) {
  n_train = std::min(n_train, stems.size());
  s.train_ids.assign(stems.begin(), stems.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_ids.assign(stems.begin() + static_cast<std::ptrdiff_t>(n_train), stems.end());
}

}  // namespace detail

// Train/test split of a dataset directory. A manifest under splits/ wins;
// otherwise DRIVE uses its official 21-40 / 01-20 partition, CHASE_DB1 takes
// the first 20 stems for training, STARE the first 16, and HRF two thirds of
// each condition (_h, _dr, _g). Validation ids come only from a manifest; see
// with_validation() for carving them out of training.
inline SplitSpec make_split(DatasetId id, const fs::path& root) {
  const auto stems = list_image_stems(root, id);
  const std::set<std::string> known(stems.begin(), stems.end());
  SplitSpec s;
  s.dataset_id = id;
  const fs::path sd = dataset_dir(root, id) / "splits";
  if (fs::exists(sd / "train.txt") || fs::exists(sd / "test.txt")) {
    s.train_ids = read_manifest(sd / "train.txt");
    s.val_ids = read_manifest(sd / "val.txt");
    s.test_ids = read_manifest(sd / "test.txt");
    for (const auto* list : {&s.train_ids, &s.val_ids, &s.test_ids})
      for (const auto& x : *list)
        if (!known.count(x)) throw DataError("manifest names unknown sample '" + x + "'; " + layout_help(id));
    check_disjoint(s);
    return s;
  }
  switch (id) {
    case DatasetId::DRIVE:
      for (const auto& st : stems) {
        const bool train_tag = st.find("training") != std::string::npos;
        const bool test_tag = st.find("test") != std::string::npos;
        const long n = detail::leading_number(st);
        if (train_tag || (!test_tag && n > 20))
          s.train_ids.push_back(st);
        else if (test_tag || n >= 1)
          s.test_ids.push_back(st);
        else
          throw DataError("cannot place DRIVE sample '" + st + "' in the official split; " + layout_help(id));
      }
      break;
    case DatasetId::CHASE_DB1: detail::split_head(stems, 20, s); break;
    case DatasetId::STARE: detail::split_head(stems, 16, s); break;
    case DatasetId::HRF: {
      std::map<std::string, std::vector<std::string>> groups;
      for (const auto& st : stems) {
        const auto us = st.rfind('_');
        groups[us == std::string::npos ? "" : st.substr(us + 1)].push_back(st);
      }
      for (auto& [cond, g] : groups) {
        const std::size_t n_train = (g.size() * 2 + 2) / 3;
        SplitSpec part;
        detail::split_head(g, n_train, part);
        s.train_ids.insert(s.train_ids.end(), part.train_ids.begin(), part.train_ids.end());
        s.test_ids.insert(s.test_ids.end(), part.test_ids.begin(), part.test_ids.end());
      }
      break;
    }
  }
  check_disjoint(s);
  return s;
}

// Moves the last `fraction` of the training ids (rounded down) to validation
// when no validation ids exist yet.
inline SplitSpec with_validation(SplitSpec s, double fraction) {
  if (!s.val_ids.empty() || fraction <= 0) return s;
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(s.train_ids.size()) * fraction));
  s.val_ids.assign(s.train_ids.end() - static_cast<std::ptrdiff_t>(n_val), s.train_ids.end());
  s.train_ids.resize(s.train_ids.size() - n_val);
  return s;
}

inline std::vector<ImageSample> load_split(const fs::path& root, const SplitSpec& spec, Split which) {
  std::vector<ImageSample> out;
  for (const auto& stem : spec.ids(which))
    out.push_back(load_sample(image_path(root, spec.dataset_id, stem).string(), spec.dataset_id, which));
  return out;
}

}  // namespace vfgs::data
