#pragma once

// From network outputs to labeled, typed instances.

#include <string>
#include <vector>

#include "repsnet/groundtruth.hpp"

namespace repsnet {

struct BvmConfig {
  int e_t = 3;  // a pixel is boundary when it gets strictly more votes
};

/// Votes cast by the four rays of every foreground pixel. Distances are
/// rounded half away from zero and endpoints clamped to the image, so the
/// total is always 4 * |np_mask|.
Grid<std::int32_t> bvm_votes(const Tensor& bd, const Mask& np_mask, int batch_index = 0);
/// Pixels with votes > e_t.
Mask bvm(const Tensor& bd, const Mask& np_mask, const BvmConfig& cfg = {}, int batch_index = 0);

/// Components of (np_mask and not nb).
inline InstanceMap connected_components(const Mask& np_mask, const Mask& nb) {
  Mask inner(np_mask.height, np_mask.width, 0);
  for (std::size_t i = 0; i < inner.size(); ++i) inner.data[i] = np_mask.data[i] && !nb.data[i];
  return label_components(inner);
}

inline constexpr double kDefaultRmax = 10.0;

/// For every pixel, how many rays cast from each labeled pixel of `inst`
/// ended there. Sparse: (label, count) pairs.
using VoteSources = Grid<std::vector<std::pair<std::int32_t, std::int32_t>>>;
VoteSources bvm_vote_sources(const Tensor& bd, const Mask& np_mask, const InstanceMap& inst, int batch_index = 0);

/// Gives every NB pixel inside np_mask the label of the nearest labeled pixel
/// of `inst` (Euclidean). Pixels with no instance within r_max stay
/// background. Equidistant instances go to the smaller id, unless `bd` is
/// given: then every pixel with a unique nearest instance is labeled first,
/// and a tied pixel goes to the tied instance whose pixels cast the most
/// votes on it in that provisional map (smaller id on equal votes).
InstanceMap assign_boundary_pixels(const InstanceMap& inst, const Mask& nb, const Mask& np_mask,
                                   double r_max = kDefaultRmax, const Tensor* bd = nullptr, int batch_index = 0);

/// Per-instance class, index 0 unused. Mode over classes 1..6 with ties to the
/// smaller class; an instance seeing only class 0 gets the most frequent
/// non-zero class of the whole image (1 if there is none).
std::vector<int> classify_instances(const InstanceMap& inst, const TypeMap& nt_pred);

enum class PostMode { kBvm, kNaive };
PostMode parse_post_mode(const std::string& s);

struct SegmentConfig {
  BvmConfig bvm;
  double r_max = kDefaultRmax;
  PostMode mode = PostMode::kBvm;
};

struct Segmentation {
  InstanceMap inst;
  std::vector<int> classes;  // classes[id], index 0 unused
  Mask np;
  Mask nb;
};

/// Full chain for image `batch_index` of a batch of network outputs. Naive
/// mode labels components of the NP mask directly.
Segmentation segment(const Tensor& np_logits, const Tensor& nt_logits, const Tensor& bd, const SegmentConfig& cfg = {},
                     int batch_index = 0);

/// Per-pixel argmax over channels.
Grid<std::uint8_t> argmax_channels(const Tensor& logits, int batch_index = 0);

/// Type map that paints every instance with its class.
TypeMap paint_classes(const InstanceMap& inst, const std::vector<int>& classes);

}  // namespace repsnet
