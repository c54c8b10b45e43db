#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vfgs/data/split.hpp"
#include "vfgs/metrics.hpp"
#include "vfgs/train/checkpoint.hpp"

namespace vfgs::train {

namespace fs = std::filesystem;

struct Batch {
  Tensor<float> image;   // [B,1,H,W]
  Tensor<float> target;  // [B,1,H,W] in {0,1}
  std::vector<std::string> ids;
};

inline Batch make_batch(const std::vector<data::ImageSample>& samples) {
  VFGS_CHECK(!samples.empty(), ContractError, "make_batch: no samples");
  const Index B = static_cast<Index>(samples.size()), H = samples[0].image.height, W = samples[0].image.width;
  Batch b{Tensor<float>(Shape{B, 1, H, W}), Tensor<float>(Shape{B, 1, H, W}), {}};
  for (Index i = 0; i < B; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.image.height != H || s.image.width != W) throw ShapeError("make_batch: samples differ in size");
    std::copy(s.image.data.begin(), s.image.data.end(), b.image.data() + i * H * W);
    std::transform(s.mask.data.begin(), s.mask.data.end(), b.target.data() + i * H * W,
                   [](std::uint8_t v) { return v ? 1.f : 0.f; });
    b.ids.push_back(fs::path(s.source_path).stem().string());
  }
  return b;
}

// Foreground probability on the resized frame: the green plane is resized
// to the network input and run in evaluation mode.
template <typename Model>
ImagePlane predict_probability(Model& model, const ImagePlane& image, std::pair<Index, Index> input_size) {
  NoGradGuard guard;
  const auto in = data::resize_bilinear(image, input_size.first, input_size.second);
  Tensor<float> x(Shape{1, 1, in.height, in.width}, std::vector<float>(in.data));
  const auto logits = model.logits(Var<float>(std::move(x)), false);
  ImagePlane prob(in.height, in.width);
  for (Index i = 0; i < prob.size(); ++i)
    prob.data[static_cast<std::size_t>(i)] = static_cast<float>(ops::detail::sigmoid(static_cast<double>(logits.value()[i])));
  return prob;
}

inline BinaryMask threshold_mask(const ImagePlane& prob, double threshold) {
  BinaryMask m(prob.height, prob.width);
  for (std::size_t i = 0; i < prob.data.size(); ++i) m.data[i] = prob.data[i] >= threshold ? 1 : 0;
  return m;
}

// Per-image metrics over the resized frame: prediction at the network input
// size against the nearest-neighbour resized mask. `fov` (optional, aligned
// with `samples`, any size) restricts every metric to the field of view.
template <typename Model>
MetricsReport evaluate_samples(Model& model, const std::vector<data::ImageSample>& samples,
                               std::pair<Index, Index> input_size, double threshold,
                               const std::vector<BinaryMask>* fov = nullptr) {
  if (samples.empty()) throw ConfigError("evaluation split is empty");
  MetricsReport r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = data::resize_pair(samples[i], input_size);
    const auto pred = threshold_mask(predict_probability(model, s.image, input_size), threshold);
    BinaryMask roi;
    if (fov) roi = data::resize_nearest((*fov)[i], input_size.first, input_size.second);
    r.per_image.push_back(image_metrics(fs::path(s.source_path).stem().string(), pred, s.mask, fov ? &roi : nullptr));
  }
  r.finalize();
  return r;
}

// FOV masks live in <root>/<DS>/fov/ as <stem>.* or <stem>_mask.*; DRIVE's
// native 21_training_mask.gif matches the second form.
inline BinaryMask load_fov(const fs::path& image_path) {
  const fs::path dir = image_path.parent_path().parent_path() / "fov";
  const std::string stem = image_path.stem().string();
  for (const auto& cand : {stem, stem + "_mask"})
    for (const auto& e : data::raster_extensions()) {
      const fs::path p = dir / (cand + e);
      if (fs::exists(p)) return data::binarize_mask(data::raw_mask(data::read_raster(p.string())));
    }
  throw DataError("no FOV mask for " + image_path.string() + " in " + dir.string());
}

struct TrainData {
  std::vector<data::ImageSample> train, val;
};

inline TrainData load_train_data(const TrainConfig& cfg, const fs::path& root) {
  const auto id = data::parse_dataset(cfg.dataset);
  auto split = data::with_validation(data::make_split(id, root), cfg.val_fraction);
  if (cfg.train_limit > 0 && static_cast<Index>(split.train_ids.size()) > cfg.train_limit)
    split.train_ids.resize(static_cast<std::size_t>(cfg.train_limit));
  TrainData d;
  d.train = data::load_split(root, split, data::Split::Train);
  d.val = data::load_split(root, split, data::Split::Val);
  if (d.train.empty()) throw DataError("no training images for " + cfg.dataset + " under " + root.string());
  return d;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::string checkpoint_path;
  std::vector<double> step_losses;
};

namespace trainer_detail {

inline std::string fmt_line(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

inline void dump_nonfinite(const fs::path& out_dir, Index epoch, std::int64_t step, const Batch& b, double loss,
                           double bce, double dice, double p) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "nonfinite_batch.txt");
  f << "epoch=" << epoch << " step=" << step << " loss=" << loss << " bce=" << bce << " dice=" << dice
    << " p=" << p << '\n';
  f << "image_max_abs=" << b.image.max_abs() << " target_sum=" << b.target.sum() << '\n';
  for (const auto& id : b.ids) f << "id=" << id << '\n';
}

}  // namespace trainer_detail

// Trains on in-memory samples. Writes checkpoints under cfg.out_dir every
// cfg.checkpoint_every epochs and at the end (last.ckpt).
inline TrainResult train_on_samples(TrainConfig cfg, const std::vector<data::ImageSample>& train_set,
                                    const std::vector<data::ImageSample>& val_set, std::ostream& log,
                                    const Checkpoint* resume = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  cfg.model.init_seed = cfg.seed;
  VFGSNet<float> model(cfg.model);
  Adam<float> adam(nn::named_parameters<float>(model), cfg.beta1, cfg.beta2, cfg.adam_eps);
  Index start_epoch = 1;
  std::int64_t step = 0;
  std::vector<EpochRecord> history;
  if (resume) {
    restore_model(*resume, model);
    restore_adam(*resume, adam);
    start_epoch = resume->epoch + 1;
    step = resume->step;
    history = resume->history;
  }
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  {
    std::ofstream(out_dir / "config.txt") << serialize_config(cfg);
  }

  log << "# lr(e) = " << cfg.lr << " * " << cfg.lr_gamma << "^floor((e-1)/" << cfg.lr_step_every
      << ") for 1-based epoch e; decay applies after each completed block\n";
  log << "# hd95/assd: empty prediction vs non-empty truth scores the image diagonal; both empty scores 0\n";
  log << "# train_images=" << train_set.size() << " val_images=" << val_set.size()
      << " params=" << model.parameter_count() << " input=" << cfg.augment.target_size.first << "x"
      << cfg.augment.target_size.second << '\n';

  TrainResult result;
  const auto n = static_cast<Index>(train_set.size());
  Index completed = start_epoch - 1;
  bool stop = false;
  for (Index epoch = start_epoch; epoch <= cfg.epochs && !stop; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = data::sample_rng(cfg.seed, ~std::uint64_t{0}, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_loss = 0, sum_bce = 0, sum_dice = 0;
    Index batches = 0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      std::vector<data::ImageSample> items;
      for (Index k = start; k < std::min(n, start + cfg.batch_size); ++k) {
        const Index idx = order[static_cast<std::size_t>(k)];
        auto rng = data::sample_rng(cfg.seed, static_cast<std::uint64_t>(idx), static_cast<std::uint64_t>(epoch));
        items.push_back(data::augment(train_set[static_cast<std::size_t>(idx)], cfg.augment, rng));
      }
      const auto batch = make_batch(items);
      ++step;
      nn::zero_grad<float>(model);
      auto abort = [&](const std::string& what, double total, const LossResult<float>* loss) {
        trainer_detail::dump_nonfinite(out_dir, epoch, step, batch, total, loss ? loss->bce : NAN,
                                       loss ? loss->dice : NAN, loss ? loss->p_used : NAN);
        std::string ids;
        for (const auto& id : batch.ids) ids += (ids.empty() ? "" : ",") + id;
        throw NumericError(what + " at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                           " on batch [" + ids + "]; details in " + (out_dir / "nonfinite_batch.txt").string());
      };
      std::optional<LossResult<float>> loss;
      try {
        loss = total_loss(model.logits(Var<float>(batch.image), true), batch.target, cfg.loss);
      } catch (const NumericError& e) {
        abort(e.what(), NAN, nullptr);
      }
      const double total = static_cast<double>(loss->total.value()[0]);
      if (!std::isfinite(total)) abort("non-finite loss", total, &*loss);
      backward(loss->total);
      adam.step(lr);
      result.step_losses.push_back(total);
      sum_loss += total;
      sum_bce += loss->bce;
      sum_dice += loss->dice;
      ++batches;
      log << trainer_detail::fmt_line("epoch=%lld step=%lld loss=%.6f bce=%.6f dice=%.6f lr=%.6g p=%.4f\n",
                                      static_cast<long long>(epoch), static_cast<long long>(step), total, loss->bce,
                                      loss->dice, lr, loss->p_used);
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochRecord rec{epoch, step, sum_loss / batches, sum_bce / batches, sum_dice / batches, lr, -1};
    if (!val_set.empty())
      rec.val_dice = evaluate_samples(model, val_set, cfg.augment.target_size, cfg.threshold).aggregate.dice;
    history.push_back(rec);
    completed = epoch;
    log << trainer_detail::fmt_line(
        "epoch_end epoch=%lld step=%lld loss=%.6f bce=%.6f dice=%.6f lr=%.6g val_dice=%.6f\n",
        static_cast<long long>(epoch), static_cast<long long>(step), rec.loss, rec.bce, rec.dice, lr, rec.val_dice);
    log.flush();
    const bool last = stop || epoch == cfg.epochs;
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && !last) {
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%04lld.ckpt", static_cast<long long>(epoch));
      save_checkpoint(capture(model, &adam, cfg, epoch, step, history), (out_dir / name).string());
    }
  }
  result.checkpoint = capture(model, &adam, cfg, completed, step, history);
  result.checkpoint_path = (out_dir / "last.ckpt").string();
  save_checkpoint(result.checkpoint, result.checkpoint_path);
  return result;
}

inline TrainResult train(TrainConfig cfg, const fs::path& root, std::ostream& log, const std::string& resume_path = "") {
  cfg.validate();
  const auto d = load_train_data(cfg, root);
  if (resume_path.empty()) return train_on_samples(cfg, d.train, d.val, log);
  const auto ckpt = load_checkpoint(resume_path);
  return train_on_samples(cfg, d.train, d.val, log, &ckpt);
}

inline MetricsReport evaluate(const Checkpoint& ckpt, const fs::path& root, data::DatasetId id, data::Split split,
                              bool use_fov = false) {
  auto model = model_from_checkpoint(ckpt);
  const auto spec = data::make_split(id, root);
  const auto samples = data::load_split(root, spec, split);
  if (samples.empty()) throw ConfigError("split '" + data::split_name(split) + "' of " + data::dataset_name(id) + " is empty");
  std::vector<BinaryMask> fov;
  if (use_fov)
    for (const auto& s : samples) fov.push_back(load_fov(s.source_path));
  return evaluate_samples(model, samples, ckpt.config.augment.target_size, ckpt.config.threshold,
                          use_fov ? &fov : nullptr);
}

struct PredictOutputs {
  std::string probability, mask, difference;  // difference is empty without a GT mask
};

// Writes <stem>_prob.png (8-bit probability), <stem>_mask.png ({0,255}) and,
// when gt_path is given, <stem>_diff.png, all at the network input size.
inline PredictOutputs predict_files(const Checkpoint& ckpt, const std::string& image_path,
                                    const std::string& gt_path, const fs::path& out_dir) {
  auto model = model_from_checkpoint(ckpt);
  const auto size = ckpt.config.augment.target_size;
  const auto prob = predict_probability(model, data::green_channel(data::read_raster(image_path)), size);
  auto mask = threshold_mask(prob, ckpt.config.threshold);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  PredictOutputs o{(out_dir / (stem + "_prob.png")).string(), (out_dir / (stem + "_mask.png")).string(), ""};
  data::write_png(o.probability, prob);
  if (!gt_path.empty()) {
    const auto gt = data::resize_nearest(data::binarize_mask(data::raw_mask(data::read_raster(gt_path))),
                                         size.first, size.second);
    o.difference = (out_dir / (stem + "_diff.png")).string();
    data::write_png(o.difference, difference_map(mask, gt));
  }
  for (auto& v : mask.data) v = v ? 255 : 0;
  data::write_png(o.mask, mask);
  return o;
}

struct AblationRow {
  Variant variant;
  Index parameters = 0;
  MetricsReport report;
};

inline std::string ablation_csv(const std::string& dataset, const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "dataset,variant,params,dice,se,sp,hd95,assd\n";
  for (const auto& r : rows) {
    const auto& a = r.report.aggregate;
    os << trainer_detail::fmt_line("%s,%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f\n", dataset.c_str(),
                                   variant_tag(r.variant).c_str(), static_cast<long long>(r.parameters), a.dice, a.se,
                                   a.sp, a.hd95, a.assd);
  }
  return os.str();
}

// Trains and evaluates every ablation variant with the same seed and
// schedule; writes <out>/<tag>/ runs and <out>/ablation.csv.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const fs::path& root, const fs::path& out,
                                       std::ostream& log) {
  base.validate();
  const auto id = data::parse_dataset(base.dataset);
  const auto d = load_train_data(base, root);
  const auto test = data::load_split(root, data::make_split(id, root), data::Split::Test);
  if (test.empty()) throw ConfigError("test split of " + base.dataset + " is empty");
  std::vector<AblationRow> rows;
  for (auto v : kAllVariants) {
    auto cfg = base;
    cfg.model = build_variant(v, base.model);
    std::string dir = variant_tag(v);
    std::replace(dir.begin(), dir.end(), '+', '_');
    cfg.out_dir = (out / dir).string();
    log << "# variant " << variant_tag(v) << '\n';
    auto res = train_on_samples(cfg, d.train, d.val, log);
    auto model = model_from_checkpoint(res.checkpoint);
    rows.push_back({v, model.parameter_count(), evaluate_samples(model, test, cfg.augment.target_size, cfg.threshold)});
  }
  fs::create_directories(out);
  std::ofstream(out / "ablation.csv") << ablation_csv(base.dataset, rows);
  return rows;
}

}  // namespace vfgs::train
