#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace repsnet {

/// A trainable parameter viewed as a flat value/gradient pair.
struct ParamView {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. The state is lazily sized on first use and
/// must afterwards be used with the same parameter list.
void adam_step(std::span<const ParamView> params, AdamState& state, double lr, const AdamConfig& cfg = {});

/// Learning-rate schedule that halves the rate after `patience` consecutive
/// validation epochs without improvement, never going below `floor`.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, int patience = 5, double factor = 0.5, double floor = 1e-7);

  /// Feeds one validation loss; returns the learning rate for the next epoch.
  double observe(double validation_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }
  bool improved_last() const { return improved_last_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double floor_;
  double best_;
  int bad_epochs_ = 0;
  bool improved_last_ = false;
};

}  // namespace repsnet
