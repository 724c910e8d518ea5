#pragma once

// Synthetic nucleus scenes and geometric augmentation.

#include <array>
#include <cstdint>
#include <random>

#include "repsnet/groundtruth.hpp"

namespace repsnet {

struct SynthSpec {
  int height = 64;
  int width = 64;
  int min_nuclei = 4;
  int max_nuclei = 10;
  double min_radius = 4.0;
  double max_radius = 8.0;
  /// Probability that a new nucleus is placed against an existing one.
  double overlap_prob = 0.3;
  /// Relative frequency of classes 1..6.
  std::array<double, 6> class_weights{1, 1, 1, 1, 1, 1};
  double noise_sigma = 0.03;
  /// Fragments smaller than this many pixels are dropped after occlusion.
  int min_area = 12;
  /// Nuclei showing less than this fraction of their own ellipse are dropped.
  double min_visible = 0.6;

  void validate() const;
};

struct Sample {
  Tensor image;  // (1, 3, H, W), values k/255
  InstanceMap inst;
  TypeMap types;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Deterministic per seed. Ellipses are drawn in z-order (later wins), every
/// instance is then reduced to its largest 4-connected piece and ids are made
/// contiguous.
Sample synth_sample(std::uint64_t seed, const SynthSpec& spec);

struct Augmentation {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int rot90 = 0;  // quarter turns, counter-clockwise
  std::array<float, 3> gain{1.0f, 1.0f, 1.0f};  // per-channel color gain

  bool is_identity() const;
};

Sample apply_augmentation(const Sample& s, const Augmentation& aug);
Augmentation random_augmentation(std::mt19937_64& rng, double color_jitter = 0.05);
inline Sample augment(const Sample& s, std::mt19937_64& rng) { return apply_augmentation(s, random_augmentation(rng)); }

}  // namespace repsnet
