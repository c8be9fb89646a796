#include "lap/train.hpp"

#include "lap/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace lap {

void TrainConfig::validate() const {
  if (!(adam.lr >= 0)) throw ConfigError("train config: lr must be non-negative");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("train config: betas must be in [0, 1)");
  }
  if (!(adam.eps > 0)) throw ConfigError("train config: eps must be positive");
  if (!(plateau.factor > 0 && plateau.factor < 1)) throw ConfigError("train config: plateau_factor must be in (0, 1)");
  if (plateau.patience < 1) throw ConfigError("train config: plateau_patience must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(heatmap_sigma > 0)) throw ConfigError("train config: heatmap_sigma must be positive");
  augment.validate();
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "lr = " << adam.lr << "\n"
     << "beta1 = " << adam.beta1 << "\n"
     << "beta2 = " << adam.beta2 << "\n"
     << "eps = " << adam.eps << "\n"
     << "batch_size = " << batch_size << "\n"
     << "epochs = " << epochs << "\n"
     << "plateau_factor = " << plateau.factor << "\n"
     << "plateau_patience = " << plateau.patience << "\n"
     << "plateau_min_delta = " << plateau.min_delta_rel << "\n"
     << "seed = " << seed << "\n"
     << "heatmap_sigma = " << heatmap_sigma << "\n"
     << "augment = " << (augment.enabled ? "true" : "false") << "\n"
     << "aug_scale_min = " << augment.scale_min << "\n"
     << "aug_scale_max = " << augment.scale_max << "\n"
     << "aug_rotation_deg = " << augment.rotation_deg << "\n"
     << "aug_flip_probability = " << augment.flip_probability << "\n"
     << "aug_brightness = " << augment.brightness << "\n"
     << "aug_contrast = " << augment.contrast << "\n";
  return os.str();
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  kv.require_known({"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "plateau_factor", "plateau_patience",
                    "plateau_min_delta", "seed", "heatmap_sigma", "augment", "aug_scale_min", "aug_scale_max",
                    "aug_rotation_deg", "aug_flip_probability", "aug_brightness", "aug_contrast"},
                   "train config");
  TrainConfig c;
  c.adam.lr = kv.get_double("lr", c.adam.lr);
  c.adam.beta1 = kv.get_double("beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("eps", c.adam.eps);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.plateau.factor = kv.get_double("plateau_factor", c.plateau.factor);
  c.plateau.patience = static_cast<int>(kv.get_int("plateau_patience", c.plateau.patience));
  c.plateau.min_delta_rel = kv.get_double("plateau_min_delta", c.plateau.min_delta_rel);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.heatmap_sigma = kv.get_double("heatmap_sigma", c.heatmap_sigma);
  c.augment.enabled = kv.get_bool("augment", c.augment.enabled);
  c.augment.scale_min = kv.get_double("aug_scale_min", c.augment.scale_min);
  c.augment.scale_max = kv.get_double("aug_scale_max", c.augment.scale_max);
  c.augment.rotation_deg = kv.get_double("aug_rotation_deg", c.augment.rotation_deg);
  c.augment.flip_probability = kv.get_double("aug_flip_probability", c.augment.flip_probability);
  c.augment.brightness = kv.get_double("aug_brightness", c.augment.brightness);
  c.augment.contrast = kv.get_double("aug_contrast", c.augment.contrast);
  c.validate();
  return c;
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::int64_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  const Shape one = samples.at(static_cast<std::size_t>(indices.front())).image.shape();
  Batch b{Tensord(Shape{static_cast<std::int64_t>(indices.size()), one.c, one.h, one.w}), {}};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = samples.at(static_cast<std::size_t>(indices[i]));
    if (s.image.shape() != one) throw shape_mismatch("make_batch", one, s.image.shape());
    std::copy_n(s.image.data(), one.numel(), b.images.data() + static_cast<std::int64_t>(i) * one.numel());
    b.keypoints.push_back(image_to_heatmap(s.keypoints, kOutputStride));
  }
  return b;
}

namespace {

std::string first_non_finite(const ParamList& params) {
  for (const ParamRef& p : params) {
    if (!p.value->all_finite()) return p.name;
    if (p.grad && !p.grad->all_finite()) return p.name + " (gradient)";
  }
  return "";
}

}  // namespace

Trainer::Trainer(LapNet& net, const AdamConfig& adam, double heatmap_sigma)
    : net_(net), adam_(adam), sigma_(heatmap_sigma), params_(net.parameters()) {}

LossSplit Trainer::step(const Batch& batch) {
  ++steps_;
  const NetworkConfig& cfg = net_.config();
  const Tensord gt = encode(batch.keypoints, cfg.heatmap_h(), cfg.heatmap_w(), sigma_).maps;
  const auto mask = visibility_mask(batch.keypoints);

  std::vector<Tensord> outs = net_.forward(batch.images, Mode::Train);
  LossSplit loss;
  std::vector<Tensord> grads;
  for (std::size_t s = 0; s < outs.size(); ++s) {
    MseResult r = mse_loss(outs[s], gt, mask);
    if (!std::isfinite(r.loss)) {
      std::string layer = "stack" + std::to_string(s) + ".score output";
      const std::string param = first_non_finite(params_);
      if (!param.empty()) layer = param;
      throw TrainError(steps_, layer,
                       "non-finite loss at step " + std::to_string(steps_) + "; first non-finite tensor: " + layer);
    }
    loss.stack_sum += r.loss;
    loss.final_stack = r.loss;
    grads.push_back(std::move(r.grad));
  }
  zero_grad(params_);
  net_.backward(grads);
  adam_.step(params_);
  return loss;
}

LossSplit evaluate_loss(LapNet& net, const std::vector<Sample>& samples, const std::vector<std::int64_t>& indices,
                        double heatmap_sigma, int batch_size) {
  const NetworkConfig& cfg = net.config();
  std::vector<double> sq(static_cast<std::size_t>(cfg.stacks), 0.0);
  std::int64_t count = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::vector<std::int64_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                          indices.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                                indices.size(), start + static_cast<std::size_t>(batch_size))));
    const Batch b = make_batch(samples, chunk);
    const Tensord gt = encode(b.keypoints, cfg.heatmap_h(), cfg.heatmap_w(), heatmap_sigma).maps;
    const auto mask = visibility_mask(b.keypoints);
    const std::vector<Tensord> outs = net.forward(b.images, Mode::Eval);
    for (std::size_t s = 0; s < outs.size(); ++s) {
      const MseResult r = mse_loss(outs[s], gt, mask);
      sq[s] += r.loss * static_cast<double>(r.count);
      if (s == 0) count += r.count;
    }
  }
  LossSplit out;
  if (count == 0) return out;
  for (double v : sq) out.stack_sum += v / static_cast<double>(count);
  out.final_stack = sq.back() / static_cast<double>(count);
  return out;
}

std::vector<KeypointSet> predict_keypoints(LapNet& net, const Tensord& images) {
  const std::vector<Tensord> outs = net.forward(images, Mode::Eval);
  std::vector<KeypointSet> decoded = decode(outs.back());
  for (auto& k : decoded) k = heatmap_to_image(k, kOutputStride);
  return decoded;
}

std::string epoch_log_header() { return "# epoch train_loss val_loss lr val_loss_final"; }

std::string format_epoch_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.9e %.9e %.6e %.9e", r.epoch, r.train_loss, r.val_loss, r.lr, r.val_loss_final);
  return buf;
}

TrainResult train(const NetworkConfig& net_config, const TrainConfig& tc, const ToyDatasetSpec& data,
                  const std::string& out_dir, std::ostream* progress) {
  namespace fs = std::filesystem;
  net_config.validate();
  tc.validate();
  data.validate();
  if (net_config.input_h != data.image_size || net_config.input_w != data.image_size) {
    throw ConfigError("network input " + std::to_string(net_config.input_h) + "x" + std::to_string(net_config.input_w) +
                      " does not match dataset image size " + std::to_string(data.image_size));
  }
  if (net_config.num_keypoints != data.num_keypoints || net_config.input_channels != 1) {
    throw ConfigError("network must take 1 input channel and predict " + std::to_string(data.num_keypoints) +
                      " keypoints for this dataset");
  }

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(data.num_samples));
  for (std::int64_t i = 0; i < data.num_samples; ++i) samples.push_back(generate_toy_sample(data, i));
  const SplitIndices split = split_dataset(data.num_samples);
  if (split.train.empty() || split.validation.empty()) throw ConfigError("dataset too small for a 90/10 split");
  const KeypointSchema schema = toy_schema(data.num_keypoints);

  LapNet net(net_config, tc.seed);
  Trainer trainer(net, tc.adam, tc.heatmap_sigma);
  PlateauScheduler scheduler(tc.adam.lr, tc.plateau);

  std::ofstream log, timing;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / "epochs.log");
    timing.open(fs::path(out_dir) / "timing.log");
    if (!log || !timing) throw std::runtime_error("cannot write logs into " + out_dir);
    log << epoch_log_header() << "\n";
    timing << "# epoch seconds\n";
    std::ofstream(fs::path(out_dir) / "net.cfg") << net_config.to_text();
    std::ofstream(fs::path(out_dir) / "train.cfg") << tc.to_text();
    std::ofstream(fs::path(out_dir) / "dataset.cfg") << data.to_text();
  }

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::int64_t> order = split.train;
    std::mt19937_64 shuffle_rng = keyed_rng(tc.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = trainer.optimizer().lr();
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<Sample> chunk;
      std::vector<std::int64_t> local;
      for (std::size_t i = start; i < stop; ++i) {
        const auto idx = static_cast<std::uint64_t>(order[i]);
        std::mt19937_64 aug_rng = keyed_rng(tc.seed, Stream::Augment, static_cast<std::uint64_t>(epoch), idx);
        chunk.push_back(augment(samples[idx], tc.augment, schema, aug_rng));
        local.push_back(static_cast<std::int64_t>(i - start));
      }
      loss_sum += trainer.step(make_batch(chunk, local)).stack_sum;
      ++batches;
    }
    rec.train_loss = loss_sum / batches;
    const LossSplit val = evaluate_loss(net, samples, split.validation, tc.heatmap_sigma, tc.batch_size);
    rec.val_loss = val.stack_sum;
    rec.val_loss_final = val.final_stack;
    trainer.optimizer().set_lr(scheduler.step(rec.val_loss));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);

    result.last = capture(net, epoch, tc.seed);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.best = result.last;
      result.best_epoch = epoch;
    }
    if (log.is_open()) {
      log << format_epoch_line(rec) << "\n" << std::flush;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%d %.3f", epoch, rec.seconds);
      timing << buf << "\n" << std::flush;
    }
    if (progress) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " %.1fs", rec.seconds);
      *progress << format_epoch_line(rec) << buf << "\n" << std::flush;
    }
  }
  if (!out_dir.empty()) {
    save_checkpoint(result.best, (fs::path(out_dir) / "best.lapw").string());
    save_checkpoint(result.last, (fs::path(out_dir) / "last.lapw").string());
  }
  return result;
}

}  // namespace lap
