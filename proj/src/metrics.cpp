#include "repsnet/metrics.hpp"

#include <algorithm>
#include <unordered_map>

#include "repsnet/postprocess.hpp"

namespace repsnet {

double dice(const Mask& x, const Mask& y) {
  if (!x.same_dims(y)) throw ShapeError("dice: mask sizes differ");
  std::int64_t sx = 0, sy = 0, both = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool a = x.data[i] != 0;
    const bool b = y.data[i] != 0;
    sx += a;
    sy += b;
    both += a && b;
  }
  if (sx + sy == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(sx + sy);
}

double dice(const InstanceMap& gt, const InstanceMap& pred) { return dice(foreground(gt), foreground(pred)); }

Overlap Overlap::compute(const InstanceMap& gt, const InstanceMap& pred) {
  if (!gt.same_dims(pred)) throw ShapeError("instance map sizes differ");
  Overlap o;
  auto collect = [](const InstanceMap& m) {
    std::vector<std::int32_t> ids;
    for (auto v : m.data) {
      if (v > 0) ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  };
  o.gt_ids = collect(gt);
  o.pred_ids = collect(pred);
  std::unordered_map<std::int32_t, std::size_t> gi, pi;
  for (std::size_t i = 0; i < o.gt_ids.size(); ++i) gi[o.gt_ids[i]] = i;
  for (std::size_t i = 0; i < o.pred_ids.size(); ++i) pi[o.pred_ids[i]] = i;
  o.gt_area.assign(o.gt_ids.size(), 0);
  o.pred_area.assign(o.pred_ids.size(), 0);
  o.inter.assign(o.gt_ids.size() * o.pred_ids.size(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto g = gt.data[i];
    const auto p = pred.data[i];
    if (g > 0) ++o.gt_area[gi[g]];
    if (p > 0) ++o.pred_area[pi[p]];
    if (g > 0 && p > 0) ++o.inter[gi[g] * o.pred_ids.size() + pi[p]];
  }
  return o;
}

double Overlap::iou(std::size_t g, std::size_t p) const {
  const auto i = intersection(g, p);
  const auto u = gt_area[g] + pred_area[p] - i;
  return u > 0 ? static_cast<double>(i) / static_cast<double>(u) : 0.0;
}

double aji(const InstanceMap& gt, const InstanceMap& pred) {
  const Overlap o = Overlap::compute(gt, pred);
  const std::size_t P = o.pred_ids.size();
  std::vector<char> used(P, 0);
  std::int64_t num = 0;
  std::int64_t den = 0;
  for (std::size_t g = 0; g < o.gt_ids.size(); ++g) {
    if (P == 0) {
      den += o.gt_area[g];
      continue;
    }
    std::size_t best = 0;
    double best_iou = o.iou(g, 0);
    for (std::size_t p = 1; p < P; ++p) {
      const double v = o.iou(g, p);
      if (v > best_iou) {
        best_iou = v;
        best = p;
      }
    }
    const auto i = o.intersection(g, best);
    num += i;
    den += o.gt_area[g] + o.pred_area[best] - i;
    used[best] = 1;
  }
  for (std::size_t p = 0; p < P; ++p) {
    if (!used[p]) den += o.pred_area[p];
  }
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

PqResult pq(const InstanceMap& gt, const InstanceMap& pred) {
  const Overlap o = Overlap::compute(gt, pred);
  PqResult r;
  double iou_sum = 0.0;
  for (std::size_t g = 0; g < o.gt_ids.size(); ++g) {
    for (std::size_t p = 0; p < o.pred_ids.size(); ++p) {
      if (o.intersection(g, p) == 0) continue;
      const double v = o.iou(g, p);
      if (v > 0.5) {
        r.matches.push_back({o.gt_ids[g], o.pred_ids[p], v});
        iou_sum += v;
      }
    }
  }
  r.tp = static_cast<int>(r.matches.size());
  r.fn = static_cast<int>(o.gt_ids.size()) - r.tp;
  r.fp = static_cast<int>(o.pred_ids.size()) - r.tp;
  if (r.tp > 0) {
    r.detection = 2.0 * r.tp / (2.0 * r.tp + r.fp + r.fn);
    r.segmentation = iou_sum / r.tp;
    r.pq = r.detection * r.segmentation;
  }
  return r;
}

InstanceMap restrict_to_class(const InstanceMap& inst, const std::vector<int>& classes, int cls) {
  InstanceMap out(inst.height, inst.width, 0);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto id = inst.data[i];
    if (id <= 0) continue;
    if (static_cast<std::size_t>(id) >= classes.size()) throw ValueError("instance " + std::to_string(id) + " has no class");
    if (classes[id] == cls) out.data[i] = id;
  }
  return out;
}

SegReport evaluate(const InstanceMap& gt, const std::vector<int>& gt_classes, const InstanceMap& pred,
                   const std::vector<int>& pred_classes) {
  SegReport r;
  r.empty = max_label(gt) == 0 && max_label(pred) == 0;
  r.dice = dice(gt, pred);
  r.aji = aji(gt, pred);
  r.pq = pq(gt, pred);
  double sum = 0.0;
  int present = 0;
  for (int c = 1; c <= kPositiveClasses; ++c) {
    const InstanceMap g = restrict_to_class(gt, gt_classes, c);
    const InstanceMap p = restrict_to_class(pred, pred_classes, c);
    if (max_label(g) == 0 && max_label(p) == 0) continue;
    const double v = pq(g, p).pq;
    r.class_pq[c - 1] = v;
    sum += v;
    ++present;
  }
  if (present > 0) r.mpq = sum / present;
  return r;
}

std::vector<int> classes_from_types(const InstanceMap& inst, const TypeMap& types) {
  return classify_instances(inst, types);
}

AggregateReport aggregate(const std::vector<SegReport>& reports) {
  AggregateReport a;
  for (const auto& r : reports) {
    if (r.empty) {
      ++a.empty_images;
      continue;
    }
    ++a.images;
    a.dice += r.dice;
    a.aji += r.aji;
    a.pq += r.pq.pq;
    a.tp += r.pq.tp;
    a.fp += r.pq.fp;
    a.fn += r.pq.fn;
    if (r.mpq) {
      a.mpq += *r.mpq;
      ++a.mpq_images;
    }
    for (int c = 0; c < kPositiveClasses; ++c) {
      if (r.class_pq[c]) {
        a.class_pq[c] += *r.class_pq[c];
        ++a.class_images[c];
      }
    }
  }
  if (a.images > 0) {
    a.dice /= a.images;
    a.aji /= a.images;
    a.pq /= a.images;
  }
  if (a.mpq_images > 0) a.mpq /= a.mpq_images;
  for (int c = 0; c < kPositiveClasses; ++c) {
    if (a.class_images[c] > 0) a.class_pq[c] /= a.class_images[c];
  }
  return a;
}

}  // namespace repsnet
