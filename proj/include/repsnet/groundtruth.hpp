#pragma once

// Label maps and the training targets derived from them.

#include <cstdint>
#include <vector>

#include "repsnet/tensor.hpp"

namespace repsnet {

/// Row-major 2-D map.
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw ShapeError("grid dimensions must be non-negative");
  }

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  bool contains(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  std::size_t size() const { return data.size(); }
  bool same_dims(const auto& other) const { return height == other.height && width == other.width; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Per-pixel instance ids, 0 = background.
using InstanceMap = Grid<std::int32_t>;
/// Per-pixel class in 0..6 (0 = background).
using TypeMap = Grid<std::uint8_t>;
/// Binary mask (0 / 1).
using Mask = Grid<std::uint8_t>;
/// Clamped Chebyshev distance to the nearest boundary pixel.
using IsoheightMap = Grid<std::int32_t>;

/// Channel order of boundary-distance maps, shape (1, 4, H, W).
enum BdChannel : int { kBdLeft = 0, kBdRight = 1, kBdUp = 2, kBdDown = 3 };

inline constexpr int kNumClasses = 7;  // background + 6 nucleus types
inline constexpr int kDefaultTau = 5;

int max_label(const InstanceMap& inst);
/// Relabels to 1..K in raster order of first appearance.
InstanceMap relabel_sequential(const InstanceMap& inst);
/// True when the non-zero ids are exactly 1..K.
bool has_contiguous_ids(const InstanceMap& inst);
Mask foreground(const InstanceMap& inst);
/// 4-connected components of the non-zero pixels, labeled 1..K in raster
/// discovery order.
InstanceMap label_components(const Mask& mask);

/// Foreground pixels whose 4-neighbourhood reaches a different label or the image border.
Mask inner_boundary(const InstanceMap& inst);

/// Per foreground pixel, the number of steps along each axis to the last pixel of
/// the consecutive same-label run containing it. Background is 0 everywhere.
Tensor bd_from_instances(const InstanceMap& inst);

/// min(tau, Chebyshev distance to the nearest boundary pixel), built by tau
/// rounds of 8-neighbour dilation. An empty boundary yields tau everywhere.
IsoheightMap isoheight_from_boundary(const Mask& boundary, int tau = kDefaultTau);

/// True when type 0 appears exactly on background and all types are < kNumClasses.
bool types_consistent(const InstanceMap& inst, const TypeMap& types);

/// Rotates a grid a quarter turn counter-clockwise `k` times.
template <class T>
Grid<T> rot90(const Grid<T>& g, int k);
template <class T>
Grid<T> flip_horizontal(const Grid<T>& g);
template <class T>
Grid<T> flip_vertical(const Grid<T>& g);

}  // namespace repsnet
