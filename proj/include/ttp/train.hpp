#pragma once

// Meta-training of theta_0, the projections and the head, plus the
// frozen-feature regressor baseline trained by plain regression.

#include "ttp/dataset.hpp"
#include "ttp/model.hpp"
#include "ttp/sampling.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

enum class MetaGradMode { Exact, FirstOrder };

std::string_view to_string(MetaGradMode m);
MetaGradMode parse_meta_grad_mode(std::string_view text);

struct TrainConfig {
  double self_weight = 0.5;                // lambda
  Eigen::Index window_length = 8;          // w_tr
  Eigen::Index stride = 4;
  std::size_t windows_per_trajectory = 8;  // b
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double warmup_frac = 0.1;
  int epochs = 5;
  int batch_size = 32;
  Eigen::Index max_length = 120;
  std::uint64_t seed = 0;
  MetaGradMode meta_grad_mode = MetaGradMode::Exact;
  SelectionMode selection = SelectionMode::Exact;
  WindowFeature window_feature = WindowFeature::Flatten;
  double inner_lr = 0.1;  // eta used inside training windows
  int inner_epochs = 1;
  Eigen::Index proj_dim = 64;
  Eigen::Index head_dim = 64;
  int regressor_proj_scale = 8;
  int regressor_step_scale = 10;
  int jobs = 1;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Every field is addressable by its key; unknown keys throw DataError.
TrainConfig parse_train_config(std::string_view text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_train_config(const TrainConfig& cfg);

/// One trajectory prepared for training: fused frames padded to a fixed
/// width. Columns at or beyond `valid` are padding.
struct TrainingExample {
  std::string id;
  Mat frames;  // D x width
  Vec labels;  // width
  Eigen::Index valid = 0;
};

/// Requires labels. Trajectories longer than `max_length` are subsampled
/// uniformly (last frame kept); `pad_to` > 0 appends zero padding.
TrainingExample make_example(const TrajectoryRecord& record, Eigen::Index max_length,
                             Eigen::Index pad_to = 0);

struct WindowLoss {
  VarD total;
  double pred_loss = 0.0;  // mean over the window's frames
  double self_loss = 0.0;
};

/// Sequential (implicit-memory) adaptation from theta_0 across the window:
/// per frame, l_self at the current theta, one inner update, then predict.
/// Returns mean pred loss + lambda * mean self loss over non-padding frames.
WindowLoss window_loss(const TrainingExample& example, const Window& window,
                       const MetaParamsT<VarD>& meta, const TrainConfig& cfg);

/// Plain MSE over an example's valid frames, summed (not averaged).
VarD regression_loss_sum(const TrainingExample& example, const MetaParamsT<VarD>& meta);

struct EpochLog {
  int epoch = 0;
  double pred_loss = 0.0;
  double self_loss = 0.0;
  double lr = 0.0;

  double total(double self_weight) const { return pred_loss + self_weight * self_loss; }
};

struct TrainResult {
  MetaParams params;
  std::vector<EpochLog> log;
};

/// Meta-trains from a seeded initialization. Throws DataError for an empty or
/// unlabeled dataset and NumericalError when a loss goes non-finite.
TrainResult train(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg);
TrainResult train(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg,
                  MetaParams initial);

/// Frozen-feature regressor: P_Q widened by regressor_proj_scale, no
/// adaptation module, trained for regressor_step_scale x epochs.
TrainResult train_regressor(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg);

/// CSV with header "epoch,pred_loss,self_loss,lr".
std::string format_training_log(std::span<const EpochLog> log);

}  // namespace ttp
