#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "h2lo/losses.hpp"
#include "h2lo/model.hpp"
#include "h2lo/optim.hpp"
#include "h2lo/rng.hpp"
#include "h2lo/volume.hpp"

namespace h2lo {

struct TrainConfig {
  int epochs = 500;
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  LossWeights loss;
  double kernel_sigma = 1.0;
  int kernel_size = 5;
  std::uint64_t seed = 0;
  int steps_per_pair = 1;
  bool disable_grad_loss = false;
  bool replace_siren_with_relu_mlp = false;
  ModelConfig model;

  void validate() const;
  /// Model config after applying the ablation flags.
  ModelConfig effective_model() const;
  /// Loss weights after applying the ablation flags.
  LossWeights effective_loss() const;
  LrSchedule schedule() const { return {lr0, lr_min, epochs}; }
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::ordered_json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j, LossWeights base = {});
nlohmann::ordered_json to_json(const TrainConfig& c);
/// Missing keys keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct TrainPair {
  const Volume3D* hf = nullptr;
  const Volume3D* lf = nullptr;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double grad = 0.0;
  double val_psnr = std::numeric_limits<double>::quiet_NaN();
  double val_ssim = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Columns: epoch, loss, val_psnr, val_ssim, lr, l1, grad. Missing
  /// validation values are left empty.
  std::string to_csv() const;
  static TrainHistory from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ValidationScore {
  double psnr = 0.0;  // capped at kPsnrCap
  double ssim = 0.0;  // in [-1, 1]
};

/// Mean PSNR / SSIM of synthesize_full(hf) against lf, averaged over pairs.
ValidationScore validate(const H2LOModel<float>& model, const std::vector<TrainPair>& val_pairs);

struct BestRecord {
  int epoch = -1;
  double val_psnr = -std::numeric_limits<double>::infinity();
  double val_ssim = 0.0;
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct Checkpoint {
  static constexpr int kVersion = 1;
  int version = kVersion;
  TrainConfig config;
  /// Number of completed epochs.
  int epoch = 0;
  std::string rng_state;
  std::int64_t adam_t = 0;
  BestRecord best;
  TrainHistory history;
  /// model.<param>, adam.m.<param>, adam.v.<param>, best.<param>
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Rebuilds a model from the "<prefix><param>" tensors of a checkpoint.
H2LOModel<float> model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = "best.");

class Trainer {
public:
  Trainer(TrainConfig config, std::vector<TrainPair> train, std::vector<TrainPair> val = {});
  /// Continues from a checkpoint; the checkpoint's config is authoritative.
  Trainer(const Checkpoint& ckpt, std::vector<TrainPair> train, std::vector<TrainPair> val = {});

  using EpochCallback = std::function<void(const EpochRecord&)>;

  /// Runs one epoch. Throws NumericalError naming the epoch and pair on a
  /// non-finite loss.
  const EpochRecord& run_epoch();
  /// Trains until `until_epoch` epochs are complete (default: config.epochs).
  void run(int until_epoch = -1, const EpochCallback& on_epoch = {});

  int epochs_done() const { return epoch_; }
  bool finished() const { return epoch_ >= config_.epochs; }
  const TrainConfig& config() const { return config_; }
  const TrainHistory& history() const { return history_; }
  const BestRecord& best() const { return best_; }
  const H2LOModel<float>& current_model() const { return model_; }
  /// Best-validation model, or the current model when there is no validation set.
  H2LOModel<float> selected_model() const;

  Checkpoint checkpoint() const;

private:
  TrainConfig config_;
  std::vector<TrainPair> train_;
  std::vector<TrainPair> val_;
  H2LOModel<float> model_;
  AdamState adam_;
  Rng rng_;
  int epoch_ = 0;
  TrainHistory history_;
  BestRecord best_;
  std::vector<std::vector<float>> best_values_;
  GaussianDerivativeKernels kernels_;
};

struct TrainResult {
  H2LOModel<float> model;
  TrainHistory history;
};

TrainResult train(const std::vector<TrainPair>& pairs, const std::vector<TrainPair>& val_pairs,
                  const TrainConfig& config, const Trainer::EpochCallback& on_epoch = {});

}  // namespace h2lo
