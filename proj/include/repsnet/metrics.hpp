#pragma once

// DICE, AJI, PQ and multi-class PQ.

#include <array>
#include <optional>
#include <vector>

#include "repsnet/groundtruth.hpp"

namespace repsnet {

/// 2|X and Y| / (|X| + |Y|) over non-zero pixels; 0 when both are empty.
double dice(const Mask& x, const Mask& y);
double dice(const InstanceMap& gt, const InstanceMap& pred);

/// Pixel overlap between every ground truth and predicted instance.
struct Overlap {
  std::vector<std::int32_t> gt_ids;    // ascending
  std::vector<std::int32_t> pred_ids;  // ascending
  std::vector<std::int64_t> gt_area;
  std::vector<std::int64_t> pred_area;
  std::vector<std::int64_t> inter;     // gt-major, gt_ids.size() x pred_ids.size()

  static Overlap compute(const InstanceMap& gt, const InstanceMap& pred);
  std::int64_t intersection(std::size_t g, std::size_t p) const { return inter[g * pred_ids.size() + p]; }
  double iou(std::size_t g, std::size_t p) const;
};

/// Every ground truth instance is paired with its best-IoU prediction (ties
/// to the smaller prediction id); predictions never picked add their area to
/// the denominator. 0 when both maps are empty.
double aji(const InstanceMap& gt, const InstanceMap& pred);

struct Match {
  std::int32_t gt_id;
  std::int32_t pred_id;
  double iou;
};

struct PqResult {
  double pq = 0.0;
  double detection = 0.0;     // 2TP / (2TP + FP + FN)
  double segmentation = 0.0;  // mean IoU over TP
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<Match> matches;
};

/// Pairs with IoU > 0.5 are true positives. PQ is 0 without any.
PqResult pq(const InstanceMap& gt, const InstanceMap& pred);

inline constexpr int kPositiveClasses = kNumClasses - 1;

/// Keeps only the instances whose class is `cls`. classes[id] gives the class
/// of instance id; index 0 is unused.
InstanceMap restrict_to_class(const InstanceMap& inst, const std::vector<int>& classes, int cls);

struct SegReport {
  bool empty = false;  // neither map has an instance
  double dice = 0.0;
  double aji = 0.0;
  PqResult pq;
  std::array<std::optional<double>, kPositiveClasses> class_pq{};  // empty: class absent from both maps
  std::optional<double> mpq;
};

/// Per-class PQ averaged over the classes present in either map.
SegReport evaluate(const InstanceMap& gt, const std::vector<int>& gt_classes, const InstanceMap& pred,
                   const std::vector<int>& pred_classes);

/// Instance classes read from a type map by majority over each instance.
std::vector<int> classes_from_types(const InstanceMap& inst, const TypeMap& types);

struct AggregateReport {
  int images = 0;  // images with at least one instance in either map
  int empty_images = 0;
  double dice = 0.0;
  double aji = 0.0;
  double pq = 0.0;
  double mpq = 0.0;  // mean over images that have a defined mPQ
  int mpq_images = 0;
  std::array<double, kPositiveClasses> class_pq{};  // mean over images where the class is present
  std::array<int, kPositiveClasses> class_images{};
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

/// Means of the per-image scores. Images where both maps are empty are
/// counted but do not enter the means.
AggregateReport aggregate(const std::vector<SegReport>& reports);

}  // namespace repsnet
