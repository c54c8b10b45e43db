#pragma once

// Checkpoint file: 8-byte magic, little-endian u64 header length, a JSON
// header (config text, counters, history, tensor table), then raw float32
// tensor payloads in table order.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfgs/network.hpp"
#include "vfgs/train/config.hpp"
#include "vfgs/train/optim.hpp"

namespace vfgs::train {

inline constexpr char kCheckpointMagic[8] = {'V', 'F', 'G', 'S', 'C', 'K', 'P', '1'};

struct EpochRecord {
  Index epoch = 0;
  std::int64_t step = 0;
  double loss = 0, bce = 0, dice = 0, lr = 0;
  double val_dice = -1;  // -1 when no validation images exist
};

struct Checkpoint {
  TrainConfig config;
  Index epoch = 0;
  std::int64_t step = 0;
  std::int64_t adam_steps = 0;
  std::vector<EpochRecord> history;
  // role/name -> tensor, role in {param, buffer, adam_m, adam_v}
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& key) const {
    for (const auto& [k, t] : tensors)
      if (k == key) return &t;
    return nullptr;
  }
};

template <typename Model>
Checkpoint capture(Model& model, Adam<float>* adam, const TrainConfig& cfg, Index epoch, std::int64_t step,
                   std::vector<EpochRecord> history) {
  Checkpoint c;
  c.config = cfg;
  c.epoch = epoch;
  c.step = step;
  c.history = std::move(history);
  nn::StateVisitor<float> v{
      [&](const std::string& n, Var<float>& p) { c.tensors.emplace_back("param/" + n, p.value()); },
      [&](const std::string& n, Tensor<float>& b) { c.tensors.emplace_back("buffer/" + n, b); }};
  model.visit("", v);
  if (adam) {
    c.adam_steps = adam->steps();
    for (auto& s : adam->slots()) {
      c.tensors.emplace_back("adam_m/" + s.name, s.m);
      c.tensors.emplace_back("adam_v/" + s.name, s.v);
    }
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  using nlohmann::json;
  json h;
  h["format_version"] = 1;
  h["dtype"] = "float32";
  h["config"] = serialize_config(c.config);
  h["epoch"] = c.epoch;
  h["step"] = c.step;
  h["adam_steps"] = c.adam_steps;
  h["history"] = json::array();
  for (const auto& r : c.history)
    h["history"].push_back({{"epoch", r.epoch}, {"step", r.step}, {"loss", r.loss}, {"bce", r.bce},
                            {"dice", r.dice}, {"lr", r.lr}, {"val_dice", r.val_dice}});
  h["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [k, t] : c.tensors) {
    h["tensors"].push_back({{"name", k}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.numel());
  }
  const std::string header = h.dump();
  if (!std::filesystem::path(path).parent_path().empty())
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, 8);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(header.data(), static_cast<std::streamsize>(n));
    for (const auto& [k, t] : c.tensors)
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw DataError("short write on checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(path + " is not a checkpoint file");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 30)) throw DataError("corrupt checkpoint header in " + path);
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("truncated checkpoint header in " + path);
  Checkpoint c;
  try {
    const json h = json::parse(header);
    if (h.at("format_version").get<int>() != 1) throw DataError("unsupported checkpoint version in " + path);
    c.config = parse_config(h.at("config").get<std::string>());
    c.epoch = h.at("epoch").get<Index>();
    c.step = h.at("step").get<std::int64_t>();
    c.adam_steps = h.at("adam_steps").get<std::int64_t>();
    for (const auto& r : h.at("history"))
      c.history.push_back({r.at("epoch").get<Index>(), r.at("step").get<std::int64_t>(), r.at("loss").get<double>(),
                           r.at("bce").get<double>(), r.at("dice").get<double>(), r.at("lr").get<double>(),
                           r.at("val_dice").get<double>()});
    for (const auto& t : h.at("tensors")) {
      Tensor<float> tensor(t.at("shape").get<Shape>());
      in.read(reinterpret_cast<char*>(tensor.data()), static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
      if (!in) throw DataError("truncated tensor payload in " + path);
      c.tensors.emplace_back(t.at("name").get<std::string>(), std::move(tensor));
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
  }
  return c;
}

template <typename Model>
void restore_model(const Checkpoint& c, Model& model) {
  auto fetch = [&](const std::string& key, Tensor<float>& dst) {
    const auto* t = c.find(key);
    if (!t) throw DataError("checkpoint lacks tensor '" + key + "'");
    if (t->shape() != dst.shape())
      throw DataError("checkpoint tensor '" + key + "' has shape " + to_string(t->shape()) + ", model expects " +
                      to_string(dst.shape()));
    dst = *t;
  };
  nn::StateVisitor<float> v{[&](const std::string& n, Var<float>& p) { fetch("param/" + n, p.mutable_value()); },
                            [&](const std::string& n, Tensor<float>& b) { fetch("buffer/" + n, b); }};
  model.visit("", v);
}

inline void restore_adam(const Checkpoint& c, Adam<float>& adam) {
  adam.set_steps(c.adam_steps);
  for (auto& s : adam.slots()) {
    const auto* m = c.find("adam_m/" + s.name);
    const auto* v = c.find("adam_v/" + s.name);
    if (!m || !v) throw DataError("checkpoint lacks optimizer state for '" + s.name + "'");
    s.m = *m;
    s.v = *v;
  }
}

inline VFGSNet<float> model_from_checkpoint(const Checkpoint& c) {
  VFGSNet<float> model(c.config.model);
  restore_model(c, model);
  return model;
}

}  // namespace vfgs::train
