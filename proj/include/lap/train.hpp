#pragma once

#include "lap/checkpoint.hpp"
#include "lap/dataset.hpp"
#include "lap/network.hpp"
#include "lap/optim.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace lap {

struct TrainConfig {
  AdamConfig adam;
  PlateauConfig plateau;
  int batch_size = 8;
  int epochs = 40;
  std::uint64_t seed = 1;
  double heatmap_sigma = 2.0;
  AugmentConfig augment;

  void validate() const;
  std::string to_text() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  static TrainConfig load(const std::string& path) { return from_key_values(KeyValues::load(path)); }
};

/// Raised when a loss turns non-finite; names the step and the first layer
/// whose output, parameter or gradient is non-finite.
class TrainError : public std::runtime_error {
 public:
  TrainError(std::int64_t step, std::string layer, const std::string& what)
      : std::runtime_error(what), step_(step), layer_(std::move(layer)) {}
  std::int64_t step() const { return step_; }
  const std::string& layer() const { return layer_; }

 private:
  std::int64_t step_;
  std::string layer_;
};

constexpr int kOutputStride = 4;

struct Batch {
  Tensord images;
  std::vector<KeypointSet> keypoints;  // heatmap frame
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::int64_t>& indices);

struct LossSplit {
  double stack_sum = 0;  // sum over stacks, the training objective
  double final_stack = 0;
};

/// One optimizer step at a time; loss is the sum over stacks of the heatmap MSE.
class Trainer {
 public:
  Trainer(LapNet& net, const AdamConfig& adam, double heatmap_sigma);

  LossSplit step(const Batch& batch);
  std::int64_t steps() const { return steps_; }
  Adam& optimizer() { return adam_; }

 private:
  LapNet& net_;
  Adam adam_;
  double sigma_;
  ParamList params_;
  std::int64_t steps_ = 0;
};

/// Eval-mode loss over `indices`, pooled over every visible heatmap element.
LossSplit evaluate_loss(LapNet& net, const std::vector<Sample>& samples, const std::vector<std::int64_t>& indices,
                        double heatmap_sigma, int batch_size);

/// Decoded final-stack keypoints in image coordinates.
std::vector<KeypointSet> predict_keypoints(LapNet& net, const Tensord& images);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_loss_final = 0;
  double lr = 0;
  double seconds = 0;
};

/// The deterministic epoch log line: `epoch train_loss val_loss lr val_loss_final`.
std::string format_epoch_line(const EpochRecord& r);
std::string epoch_log_header();

struct TrainResult {
  std::vector<EpochRecord> epochs;
  Checkpoint best;
  Checkpoint last;
  int best_epoch = 0;
};

/// Trains on the toy dataset's 90% split, validating on the rest each epoch.
/// With a non-empty `out_dir`, writes epochs.log, timing.log, best.lapw,
/// last.lapw and the three resolved configs there.
TrainResult train(const NetworkConfig& net_config, const TrainConfig& train_config, const ToyDatasetSpec& data,
                  const std::string& out_dir = "", std::ostream* progress = nullptr);

}  // namespace lap
