#include "repsnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "repsnet/tensor.hpp"

namespace repsnet {

void adam_step(std::span<const ParamView> params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter list changed between steps");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamView& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.value.size() || p.grad.size() != p.value.size()) {
      throw ShapeError("adam_step: size mismatch for parameter " + p.name);
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] = static_cast<float>(p.value[j] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, int patience, double factor, double floor)
    : lr_(initial_lr),
      patience_(patience),
      factor_(factor),
      floor_(floor),
      best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ValueError("scheduler patience must be at least 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ValueError("scheduler factor must lie in (0,1)");
}

double PlateauScheduler::observe(double validation_loss) {
  if (validation_loss < best_) {
    best_ = validation_loss;
    bad_epochs_ = 0;
    improved_last_ = true;
    return lr_;
  }
  improved_last_ = false;
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, floor_);
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace repsnet
