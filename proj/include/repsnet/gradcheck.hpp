#pragma once

// Finite-difference checks of every hand-written backward pass.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace repsnet {

inline constexpr double kGradStep = 1e-4;
inline constexpr double kGradTolerance = 1e-4;

/// max |a - b| / max(max |a|, max |b|, 1e-12). Zero for two zero vectors.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of f w.r.t. every entry of x (x is restored).
std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double step = kGradStep);

struct GradCheck {
  std::string name;
  double error = 0.0;
  double tolerance = kGradTolerance;
  bool passed = false;
};

/// Every layer and loss suite on random tensors no larger than 2x4x6x6, in
/// double precision. Deterministic per seed.
std::vector<GradCheck> run_gradient_checks(std::uint64_t seed = 1);

}  // namespace repsnet
