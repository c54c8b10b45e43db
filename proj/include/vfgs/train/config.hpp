#pragma once

// Flat key = value configuration with dotted sections.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vfgs/data/sample.hpp"
#include "vfgs/loss.hpp"
#include "vfgs/network.hpp"

namespace vfgs::train {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Index lr_step_every = 10;  // epochs; 0 disables decay
  double lr_gamma = 0.5;
  Index epochs = 300;
  Index batch_size = 2;
  Index checkpoint_every = 10;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  std::string dataset = "DRIVE";
  double val_fraction = 0.1;
  Index train_limit = 0;  // use only the first N training images; 0 = all
  Index max_steps = 0;    // stop after N optimizer steps; 0 = run all epochs
  double threshold = 0.5;
  std::string out_dir = "runs/vfgs";
  LossConfig loss{};
  data::AugmentConfig augment{};
  ModelConfig model{};

  void validate() const {
    if (!(lr > 0)) throw ConfigError("train.lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("train.betas must lie in [0,1)");
    if (!(adam_eps > 0)) throw ConfigError("train.adam_eps must be > 0");
    if (lr_step_every < 0) throw ConfigError("train.lr_step_every must be >= 0");
    if (!(lr_gamma > 0 && lr_gamma <= 1)) throw ConfigError("train.lr_gamma must lie in (0,1]");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (device != "cpu") throw ConfigError("train.device '" + device + "' is not available (only cpu)");
    data::parse_dataset(dataset);
    if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("train.val_fraction must lie in [0,1)");
    if (train_limit < 0 || max_steps < 0) throw ConfigError("train.train_limit and train.max_steps must be >= 0");
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("train.threshold must lie in (0,1)");
    loss.validate();
    augment.validate();
    if (augment.target_size.first % 16 != 0 || augment.target_size.second % 16 != 0)
      throw ConfigError("augment.target_size must be divisible by 16 (four 2x poolings)");
    model.validate();
  }
};

// Learning rate during 1-based epoch e: lr0 * gamma^floor((e-1)/every).
// The decay lands after each completed block, so epochs 1..10 share lr0.
inline double lr_at_epoch(const TrainConfig& c, Index epoch) {
  if (c.lr_step_every == 0 || epoch < 1) return c.lr;
  return c.lr * std::pow(c.lr_gamma, static_cast<double>((epoch - 1) / c.lr_step_every));
}

namespace config_detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(Index v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  return d;
}

inline long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long d = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  return d;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

inline std::pair<double, double> to_pair(const std::string& key, const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) throw ConfigError("config key '" + key + "': expected 'a,b', got '" + v + "'");
  return {to_double(key, trim(v.substr(0, comma))), to_double(key, trim(v.substr(comma + 1)))};
}

}  // namespace config_detail

struct ConfigKey {
  std::string key;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

// Every configuration key, in the order they are applied and serialized.
// model.base_channels comes before model.bottleneck_channels because setting
// the base also resets the bottleneck to 16x base.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace config_detail;
  auto dbl = [](std::string k, std::string h, double TrainConfig::*m) {
    return ConfigKey{k, h, [m](const TrainConfig& c) { return fmt(c.*m); },
                     [m, k](TrainConfig& c, const std::string& v) { c.*m = to_double(k, v); }};
  };
  auto idx = [](std::string k, std::string h, Index TrainConfig::*m) {
    return ConfigKey{k, h, [m](const TrainConfig& c) { return fmt(c.*m); },
                     [m, k](TrainConfig& c, const std::string& v) { c.*m = static_cast<Index>(to_int(k, v)); }};
  };
  auto gen = [](std::string k, std::string h, auto get, auto set) { return ConfigKey{k, h, get, set}; };
  using C = TrainConfig;
  using S = const std::string&;
  static const std::vector<ConfigKey> keys = {
      dbl("train.lr", "initial Adam learning rate", &C::lr),
      gen("train.betas", "Adam (beta1,beta2)", [](const C& c) { return fmt(c.beta1) + "," + fmt(c.beta2); },
          [](C& c, S v) { std::tie(c.beta1, c.beta2) = to_pair("train.betas", v); }),
      dbl("train.adam_eps", "Adam denominator epsilon", &C::adam_eps),
      idx("train.lr_step_every", "epochs per learning-rate decay step (0 = constant lr)", &C::lr_step_every),
      dbl("train.lr_gamma", "learning-rate decay factor", &C::lr_gamma),
      idx("train.epochs", "number of epochs (no early stopping)", &C::epochs),
      idx("train.batch_size", "images per optimizer step", &C::batch_size),
      idx("train.checkpoint_every", "epochs between checkpoints (0 = final only)", &C::checkpoint_every),
      gen("train.seed", "seed for initialization, shuffling and augmentation (env VFGS_SEED overrides)",
          [](const C& c) { return fmt(c.seed); },
          [](C& c, S v) { c.seed = static_cast<std::uint64_t>(to_int("train.seed", v)); }),
      gen("train.device", "compute device (cpu)", [](const C& c) { return c.device; },
          [](C& c, S v) { c.device = v; }),
      gen("train.dataset", "DRIVE | HRF | CHASE_DB1 | STARE", [](const C& c) { return c.dataset; },
          [](C& c, S v) { c.dataset = v; }),
      dbl("train.val_fraction", "share of training ids held out for validation when no val manifest exists",
          &C::val_fraction),
      idx("train.train_limit", "use only the first N training images (0 = all)", &C::train_limit),
      idx("train.max_steps", "stop after N optimizer steps (0 = all epochs)", &C::max_steps),
      dbl("train.threshold", "probability threshold for binary predictions", &C::threshold),
      gen("train.out_dir", "directory for checkpoints and logs", [](const C& c) { return c.out_dir; },
          [](C& c, S v) { c.out_dir = v; }),
      gen("loss.fg_weight_mode", "batch_ratio | fixed",
          [](const C& c) {
            return c.loss.fg_weight_mode == LossConfig::WeightMode::Fixed ? std::string("fixed")
                                                                          : std::string("batch_ratio");
          },
          [](C& c, S v) {
            if (v == "fixed") c.loss.fg_weight_mode = LossConfig::WeightMode::Fixed;
            else if (v == "batch_ratio") c.loss.fg_weight_mode = LossConfig::WeightMode::BatchRatio;
            else throw ConfigError("loss.fg_weight_mode must be 'fixed' or 'batch_ratio'");
          }),
      gen("loss.fixed_p", "foreground weight p in fixed mode", [](const C& c) { return fmt(c.loss.fixed_p); },
          [](C& c, S v) { c.loss.fixed_p = to_double("loss.fixed_p", v); }),
      gen("loss.p_clamp", "clamp (min,max) for the batch-ratio weight",
          [](const C& c) { return fmt(c.loss.p_clamp_min) + "," + fmt(c.loss.p_clamp_max); },
          [](C& c, S v) { std::tie(c.loss.p_clamp_min, c.loss.p_clamp_max) = to_pair("loss.p_clamp", v); }),
      gen("loss.epsilon", "Dice smoothing constant", [](const C& c) { return fmt(c.loss.epsilon); },
          [](C& c, S v) { c.loss.epsilon = to_double("loss.epsilon", v); }),
      gen("augment.p_hflip", "horizontal flip probability", [](const C& c) { return fmt(c.augment.p_hflip); },
          [](C& c, S v) { c.augment.p_hflip = to_double("augment.p_hflip", v); }),
      gen("augment.p_vflip", "vertical flip probability", [](const C& c) { return fmt(c.augment.p_vflip); },
          [](C& c, S v) { c.augment.p_vflip = to_double("augment.p_vflip", v); }),
      gen("augment.max_rotation_deg", "rotation drawn uniformly in +-this many degrees",
          [](const C& c) { return fmt(c.augment.max_rotation_deg); },
          [](C& c, S v) { c.augment.max_rotation_deg = to_double("augment.max_rotation_deg", v); }),
      gen("augment.gamma_range", "gamma correction range (low,high)",
          [](const C& c) { return fmt(c.augment.gamma_range.first) + "," + fmt(c.augment.gamma_range.second); },
          [](C& c, S v) { c.augment.gamma_range = to_pair("augment.gamma_range", v); }),
      gen("augment.p_gamma", "gamma correction probability", [](const C& c) { return fmt(c.augment.p_gamma); },
          [](C& c, S v) { c.augment.p_gamma = to_double("augment.p_gamma", v); }),
      gen("augment.p_clahe", "CLAHE probability", [](const C& c) { return fmt(c.augment.p_clahe); },
          [](C& c, S v) { c.augment.p_clahe = to_double("augment.p_clahe", v); }),
      gen("augment.clahe_clip_limit", "CLAHE clip limit (multiple of the mean bin count)",
          [](const C& c) { return fmt(c.augment.clahe_clip_limit); },
          [](C& c, S v) { c.augment.clahe_clip_limit = to_double("augment.clahe_clip_limit", v); }),
      gen("augment.clahe_tiles", "CLAHE tile grid (rows,cols)",
          [](const C& c) {
            return fmt(c.augment.clahe_tiles.first) + "," + fmt(c.augment.clahe_tiles.second);
          },
          [](C& c, S v) {
            auto p = to_pair("augment.clahe_tiles", v);
            c.augment.clahe_tiles = {static_cast<Index>(p.first), static_cast<Index>(p.second)};
          }),
      gen("augment.target_size", "network input size (height,width), multiples of 16",
          [](const C& c) {
            return fmt(c.augment.target_size.first) + "," + fmt(c.augment.target_size.second);
          },
          [](C& c, S v) {
            auto p = to_pair("augment.target_size", v);
            c.augment.target_size = {static_cast<Index>(p.first), static_cast<Index>(p.second)};
          }),
      gen("model.in_channels", "input channels", [](const C& c) { return fmt(c.model.in_channels); },
          [](C& c, S v) { c.model.in_channels = static_cast<Index>(to_int("model.in_channels", v)); }),
      gen("model.base_channels", "first-stage width; stages double from it and the bottleneck resets to 16x",
          [](const C& c) { return fmt(c.model.base_channels); },
          [](C& c, S v) {
            const auto b = static_cast<Index>(to_int("model.base_channels", v));
            if (b < 1) throw ConfigError("model.base_channels must be >= 1");
            auto m = ModelConfig::with_base(b);
            c.model.base_channels = m.base_channels;
            c.model.stage_channels = m.stage_channels;
            c.model.bottleneck_channels = m.bottleneck_channels;
          }),
      gen("model.bottleneck_channels", "bottleneck width", [](const C& c) { return fmt(c.model.bottleneck_channels); },
          [](C& c, S v) { c.model.bottleneck_channels = static_cast<Index>(to_int("model.bottleneck_channels", v)); }),
      gen("model.use_dfc", "dual-path convolution blocks", [](const C& c) { return fmt(c.model.use_dfc); },
          [](C& c, S v) { c.model.use_dfc = to_bool("model.use_dfc", v); }),
      gen("model.use_ba_mamba2", "axial state-space bottleneck", [](const C& c) { return fmt(c.model.use_ba_mamba2); },
          [](C& c, S v) { c.model.use_ba_mamba2 = to_bool("model.use_ba_mamba2", v); }),
      gen("model.use_vfca", "frequency channel attention on the deepest skip",
          [](const C& c) { return fmt(c.model.use_vfca); },
          [](C& c, S v) { c.model.use_vfca = to_bool("model.use_vfca", v); }),
      gen("model.dfc_dilation", "dilation of the second DFC path", [](const C& c) { return fmt(c.model.dfc_dilation); },
          [](C& c, S v) { c.model.dfc_dilation = static_cast<Index>(to_int("model.dfc_dilation", v)); }),
      gen("model.vfca_reduction", "attention MLP reduction ratio", [](const C& c) { return fmt(c.model.vfca_reduction); },
          [](C& c, S v) { c.model.vfca_reduction = static_cast<Index>(to_int("model.vfca_reduction", v)); }),
      gen("model.ba_untied_directions", "separate weights for the reversed scan",
          [](const C& c) { return fmt(c.model.ba_untied_directions); },
          [](C& c, S v) { c.model.ba_untied_directions = to_bool("model.ba_untied_directions", v); }),
      gen("model.ssd.d_state", "state size N", [](const C& c) { return fmt(c.model.ssd.d_state); },
          [](C& c, S v) { c.model.ssd.d_state = static_cast<Index>(to_int("model.ssd.d_state", v)); }),
      gen("model.ssd.head_dim", "head dimension P", [](const C& c) { return fmt(c.model.ssd.head_dim); },
          [](C& c, S v) { c.model.ssd.head_dim = static_cast<Index>(to_int("model.ssd.head_dim", v)); }),
      gen("model.ssd.expand", "inner width multiplier", [](const C& c) { return fmt(c.model.ssd.expand); },
          [](C& c, S v) { c.model.ssd.expand = static_cast<Index>(to_int("model.ssd.expand", v)); }),
      gen("model.ssd.conv_kernel", "causal depthwise conv width", [](const C& c) { return fmt(c.model.ssd.conv_kernel); },
          [](C& c, S v) { c.model.ssd.conv_kernel = static_cast<Index>(to_int("model.ssd.conv_kernel", v)); }),
      gen("model.ssd.chunk_len", "scan chunk length", [](const C& c) { return fmt(c.model.ssd.chunk_len); },
          [](C& c, S v) { c.model.ssd.chunk_len = static_cast<Index>(to_int("model.ssd.chunk_len", v)); }),
      gen("model.ssd.chunked", "use the chunked scan (false = sequential)",
          [](const C& c) { return fmt(c.model.ssd.chunked); },
          [](C& c, S v) { c.model.ssd.chunked = to_bool("model.ssd.chunked", v); }),
      gen("model.ssd.dt_range", "initial step-size range (min,max)",
          [](const C& c) { return fmt(c.model.ssd.dt_min) + "," + fmt(c.model.ssd.dt_max); },
          [](C& c, S v) { std::tie(c.model.ssd.dt_min, c.model.ssd.dt_max) = to_pair("model.ssd.dt_range", v); }),
      gen("model.ssd.a_init_range", "initial decay-rate range (min,max)",
          [](const C& c) { return fmt(c.model.ssd.a_init_min) + "," + fmt(c.model.ssd.a_init_max); },
          [](C& c, S v) {
            std::tie(c.model.ssd.a_init_min, c.model.ssd.a_init_max) = to_pair("model.ssd.a_init_range", v);
          }),
  };
  return keys;
}

inline std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k.key << " = " << k.get(c) << '\n';
  return os.str();
}

// Parses key = value lines ('#' starts a comment) over the defaults.
// Keys are applied in registry order regardless of their order in the text.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = config_detail::trim(line.substr(0, eq));
    if (kv.count(key)) throw ConfigError("config key '" + key + "' given twice");
    kv[key] = config_detail::trim(line.substr(eq + 1));
  }
  for (const auto& k : config_keys()) {
    auto it = kv.find(k.key);
    if (it == kv.end()) continue;
    k.set(base, it->second);
    kv.erase(it);
  }
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  return base;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// VFGS_SEED, when set, replaces train.seed.
inline void apply_env_overrides(TrainConfig& c) {
  if (const char* s = std::getenv("VFGS_SEED"); s && *s)
    c.seed = static_cast<std::uint64_t>(config_detail::to_int("VFGS_SEED", s));
}

inline bool operator==(const TrainConfig& a, const TrainConfig& b) { return serialize_config(a) == serialize_config(b); }

inline std::string config_help() {
  std::ostringstream os;
  TrainConfig d;
  for (const auto& k : config_keys()) os << "  " << k.key << " (default " << k.get(d) << "): " << k.help << '\n';
  return os.str();
}

}  // namespace vfgs::train
