#pragma once

// Training losses with analytic gradients w.r.t. the network outputs.

#include <vector>

#include "repsnet/groundtruth.hpp"
#include "repsnet/network.hpp"

namespace repsnet {

struct LossWeights {
  double np = 1.0;
  double nt = 1.0;
  double bd = 1.0;
  double nb = 1.0;
};

struct IsoheightConfig {
  int tau = kDefaultTau;
  double e = 1.0;  // smoothing in the denominator

  void validate() const;
};

template <class T>
struct LossGrad {
  double value = 0.0;
  BasicTensor<T> grad;
};

template <class T>
struct CeDiceResult {
  double value = 0.0;  // ce + dice
  double ce = 0.0;
  double dice = 0.0;   // 1 - mean soft DICE
  BasicTensor<T> grad;
};

inline constexpr double kDiceSmooth = 1.0;

/// Mean softmax cross-entropy plus soft-DICE loss over all pixels of the
/// batch. `targets[n]` holds class indices for image n.
template <class T>
CeDiceResult<T> ce_plus_dice(const BasicTensor<T>& logits, const std::vector<Grid<std::uint8_t>>& targets);

/// Smooth L1 averaged over foreground pixels and the four channels. Returns 0
/// with a zero gradient when there is no foreground.
template <class T>
LossGrad<T> smooth_l1(const BasicTensor<T>& pred, const Tensor& target, const std::vector<Mask>& fg);

/// Absolute boundary position hit by one ray. The distance is rounded half
/// away from zero and the result clamped to [0, extent).
int ray_endpoint(int origin, double distance, int sign, int extent);

/// Isoheight penalty on the boundary positions predicted from every ground
/// truth foreground pixel. The whole batch forms one set of 4 * |fg| rays.
/// The gradient passes straight through the rounding and equals the central
/// difference of psi at the landing pixel.
template <class T>
LossGrad<T> nb_loss(const BasicTensor<T>& bd_pred, const std::vector<Mask>& fg, const std::vector<IsoheightMap>& psi,
                    const IsoheightConfig& cfg);

/// Everything the losses need for one batch.
struct Targets {
  std::vector<Mask> np;           // 0 / 1
  std::vector<TypeMap> nt;        // 0..6
  Tensor bd;                      // (N, 4, H, W)
  std::vector<IsoheightMap> psi;  // isoheight of the inner boundary
};

Targets make_targets(const std::vector<InstanceMap>& inst, const std::vector<TypeMap>& types,
                     int tau = kDefaultTau);

struct LossReport {
  double total = 0.0;
  double np = 0.0;
  double nt = 0.0;
  double bd = 0.0;
  double nb = 0.0;
  NetOutputs grads;  // w.r.t. np logits, nt logits and post-relu bd
};

/// Weighted sum of the four components. Throws NumericError naming the first
/// component that is not finite.
LossReport total_loss(const NetOutputs& out, const Targets& t, const LossWeights& w, const IsoheightConfig& iso = {});

}  // namespace repsnet
