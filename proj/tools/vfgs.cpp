#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "vfgs/data/synthetic.hpp"
#include "vfgs/reference.hpp"
#include "vfgs/train/trainer.hpp"

using namespace vfgs;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kOther = 1;

// Config file first, then each --set line, then VFGS_SEED.
train::TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  auto cfg = path.empty() ? train::TrainConfig{} : train::load_config(path);
  std::string extra;
  for (const auto& s : sets) extra += s + '\n';
  cfg = train::parse_config(extra, cfg);
  train::apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

void print_reference(const std::string& dataset) {
  if (const auto r = published_scores(dataset))
    std::cout << "# published " << r->dataset << " (reference only): dice=" << r->dice << " se=" << r->se
              << " sp=" << r->sp << " hd95=" << r->hd95 << " assd=" << r->assd << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VFGS-Net retinal vessel segmentation"};
  app.require_subcommand(1);
  app.footer("Config keys (key = value lines in --config files, or --set key=value):\n" + train::config_help() +
             "Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.");

  std::string config_path, data_root, resume, ckpt_path, dataset = "DRIVE", split = "test", image, mask, out;
  std::vector<std::string> sets;
  bool fov = false;

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  tr->add_option("--set", sets, "override one key, e.g. --set train.epochs=5");
  tr->add_option("--data", data_root, "dataset root")->required();
  tr->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", data_root, "dataset root")->required();
  ev->add_option("--dataset", dataset, "DRIVE, CHASE_DB1, STARE or HRF");
  ev->add_option("--split", split, "train, val or test");
  ev->add_option("--out", out, "also write the per-image CSV here");
  ev->add_flag("--fov", fov, "restrict metrics to the field-of-view mask");

  auto* pr = app.add_subcommand("predict", "write probability, mask and difference PNGs for one image");
  pr->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  pr->add_option("--image", image, "fundus image")->required();
  pr->add_option("--mask", mask, "ground-truth vessel mask (enables the difference map)");
  pr->add_option("--out", out, "output directory")->required();

  auto* ab = app.add_subcommand("ablate", "train and evaluate all eight module variants");
  ab->add_option("--config", config_path, "base config file")->check(CLI::ExistingFile);
  ab->add_option("--set", sets, "override one key");
  ab->add_option("--data", data_root, "dataset root")->required();
  ab->add_option("--out", out, "output directory")->required();

  int n_train = 20, n_test = 20;
  data::SyntheticConfig synth_cfg;
  auto* sy = app.add_subcommand("synth", "write a synthetic dataset in the DRIVE layout");
  sy->add_option("--out", out, "dataset root")->required();
  sy->add_option("--train", n_train, "training images");
  sy->add_option("--test", n_test, "test images");
  sy->add_option("--seed", synth_cfg.seed, "generator seed");
  sy->add_option("--height", synth_cfg.height, "image height");
  sy->add_option("--width", synth_cfg.width, "image width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*tr) {
      const auto cfg = resolve_config(config_path, sets);
      train::train(cfg, data_root, std::cout, resume);
    } else if (*ev) {
      if (!fs::exists(ckpt_path)) throw DataError("checkpoint not found: " + ckpt_path);
      const auto ck = train::load_checkpoint(ckpt_path);
      const auto report = train::evaluate(ck, data_root, data::parse_dataset(dataset), data::parse_split(split), fov);
      print_reference(dataset);
      const auto csv = to_csv(report);
      std::cout << csv;
      if (!out.empty()) {
        std::ofstream f(out);
        if (!(f << csv)) throw DataError("cannot write " + out);
      }
    } else if (*pr) {
      if (!fs::exists(ckpt_path)) throw DataError("checkpoint not found: " + ckpt_path);
      const auto o = train::predict_files(train::load_checkpoint(ckpt_path), image, mask, out);
      std::cout << o.probability << '\n' << o.mask << '\n';
      if (!o.difference.empty()) std::cout << o.difference << '\n';
    } else if (*ab) {
      const auto cfg = resolve_config(config_path, sets);
      train::ablate(cfg, data_root, out, std::cout);
      print_reference(cfg.dataset);
      std::cout << "# wrote " << (fs::path(out) / "ablation.csv").string() << '\n';
    } else if (*sy) {
      data::write_synthetic_drive(out, n_train, n_test, synth_cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
