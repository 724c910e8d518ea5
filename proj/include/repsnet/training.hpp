#pragma once

// Mini-batch Adam training with plateau halving.

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "repsnet/losses.hpp"
#include "repsnet/optim.hpp"
#include "repsnet/synth.hpp"

namespace repsnet {

struct EpochLosses {
  double np = 0.0;
  double nt = 0.0;
  double bd = 0.0;
  double nb = 0.0;
  double total = 0.0;
  int steps = 0;
};

struct TrainOptions {
  int batch_size = 8;
  bool augment = true;
  LossWeights weights;
  IsoheightConfig iso;
};

/// Stacks images into one (N, 3, H, W) batch.
Tensor stack_images(const std::vector<const Sample*>& batch);

/// One shuffled pass over `data`. Throws NumericError naming the loss
/// component, or the first parameter, that became non-finite.
EpochLosses train_epoch(RepSNet& net, const std::vector<Sample>& data, AdamState& state, double lr,
                        const TrainOptions& opt, std::mt19937_64& rng);

/// Mean loss of inference-mode outputs, no augmentation.
EpochLosses evaluate_loss(const RepSNet& net, const std::vector<Sample>& data, const TrainOptions& opt);

struct FitOptions {
  TrainOptions train;
  int epochs = 30;
  double lr = 1e-4;
  double lr_floor = 1e-7;
  int patience = 5;
  double max_seconds = 0.0;  // 0: no limit
  std::uint64_t seed = 1;
  std::filesystem::path log_csv;     // empty: no log
  std::filesystem::path checkpoint;  // best-validation weights; empty: none
  std::function<void(int epoch, const EpochLosses& train, const EpochLosses& val, double lr)> on_epoch;
};

struct FitResult {
  int epochs_run = 0;
  double best_val = 0.0;
  int best_epoch = -1;
  double final_lr = 0.0;
  double seconds = 0.0;
  NamedTensors best_state;
};

/// Trains for opt.epochs (or until max_seconds), keeping the weights with the
/// lowest validation loss. With zero epochs the initial weights are returned
/// and written.
FitResult fit(RepSNet& net, const std::vector<Sample>& train, const std::vector<Sample>& val, const FitOptions& opt);

struct OverfitResult {
  double initial = 0.0;  // total loss before the first step
  double final = 0.0;    // total loss after the last step
  int steps = 0;
};

/// Repeated Adam steps on one un-augmented sample; losses are measured with
/// the training forward.
OverfitResult overfit_one(RepSNet& net, const Sample& sample, int steps, double lr, const TrainOptions& opt = {});

}  // namespace repsnet
