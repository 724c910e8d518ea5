#include "repsnet/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "repsnet/losses.hpp"

namespace repsnet {

namespace {

void check_map(const Tensor& t, const Mask& m, int batch_index, const char* what) {
  const auto& s = t.shape();
  if (batch_index < 0 || static_cast<std::size_t>(batch_index) >= s.n) throw ShapeError(std::string(what) + ": batch index out of range");
  if (static_cast<std::size_t>(m.height) != s.h || static_cast<std::size_t>(m.width) != s.w) {
    throw ShapeError(std::string(what) + ": mask does not match " + to_string(s));
  }
}

}  // namespace

Grid<std::int32_t> bvm_votes(const Tensor& bd, const Mask& np_mask, int batch_index) {
  check_map(bd, np_mask, batch_index, "bvm");
  if (bd.shape().c != 4) throw ShapeError("bvm: expected 4 distance channels");
  const int H = np_mask.height;
  const int W = np_mask.width;
  const auto n = static_cast<std::size_t>(batch_index);
  Grid<std::int32_t> votes(H, W, 0);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!np_mask(r, c)) continue;
      ++votes(r, ray_endpoint(c, bd(n, kBdLeft, r, c), -1, W));
      ++votes(r, ray_endpoint(c, bd(n, kBdRight, r, c), +1, W));
      ++votes(ray_endpoint(r, bd(n, kBdUp, r, c), -1, H), c);
      ++votes(ray_endpoint(r, bd(n, kBdDown, r, c), +1, H), c);
    }
  }
  return votes;
}

Mask bvm(const Tensor& bd, const Mask& np_mask, const BvmConfig& cfg, int batch_index) {
  const auto votes = bvm_votes(bd, np_mask, batch_index);
  Mask nb(votes.height, votes.width, 0);
  for (std::size_t i = 0; i < nb.size(); ++i) nb.data[i] = votes.data[i] > cfg.e_t;
  return nb;
}

VoteSources bvm_vote_sources(const Tensor& bd, const Mask& np_mask, const InstanceMap& inst, int batch_index) {
  check_map(bd, np_mask, batch_index, "bvm_vote_sources");
  if (!inst.same_dims(np_mask)) throw ShapeError("bvm_vote_sources: map sizes differ");
  const int H = np_mask.height;
  const int W = np_mask.width;
  const auto n = static_cast<std::size_t>(batch_index);
  VoteSources src(H, W);
  auto add = [&](int r, int c, std::int32_t id) {
    auto& v = src(r, c);
    for (auto& [label, count] : v) {
      if (label == id) {
        ++count;
        return;
      }
    }
    v.emplace_back(id, 1);
  };
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const auto id = inst(r, c);
      if (!np_mask(r, c) || id == 0) continue;
      add(r, ray_endpoint(c, bd(n, kBdLeft, r, c), -1, W), id);
      add(r, ray_endpoint(c, bd(n, kBdRight, r, c), +1, W), id);
      add(ray_endpoint(r, bd(n, kBdUp, r, c), -1, H), c, id);
      add(ray_endpoint(r, bd(n, kBdDown, r, c), +1, H), c, id);
    }
  }
  return src;
}

InstanceMap assign_boundary_pixels(const InstanceMap& inst, const Mask& nb, const Mask& np_mask, double r_max,
                                   const Tensor* bd, int batch_index) {
  if (!inst.same_dims(nb) || !inst.same_dims(np_mask)) throw ShapeError("assign_boundary_pixels: map sizes differ");
  InstanceMap out = inst;
  const int reach = static_cast<int>(std::floor(r_max));
  const double limit = r_max * r_max;
  struct Tie {
    int r, c;
    std::vector<std::int32_t> ids;  // ascending
  };
  std::vector<Tie> ties;
  for (int r = 0; r < inst.height; ++r) {
    for (int c = 0; c < inst.width; ++c) {
      if (!nb(r, c) || !np_mask(r, c) || inst(r, c) != 0) continue;
      int best_d2 = std::numeric_limits<int>::max();
      std::vector<std::int32_t> ids;
      for (int rr = std::max(0, r - reach); rr <= std::min(inst.height - 1, r + reach); ++rr) {
        for (int cc = std::max(0, c - reach); cc <= std::min(inst.width - 1, c + reach); ++cc) {
          const auto id = inst(rr, cc);
          if (id == 0) continue;
          const int d2 = (rr - r) * (rr - r) + (cc - c) * (cc - c);
          if (d2 > limit || d2 > best_d2) continue;
          if (d2 < best_d2) {
            best_d2 = d2;
            ids.clear();
          }
          if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
      }
      if (ids.empty()) continue;
      std::sort(ids.begin(), ids.end());
      if (ids.size() == 1 || !bd) {
        out(r, c) = ids.front();
      } else {
        ties.push_back({r, c, std::move(ids)});
      }
    }
  }
  if (ties.empty()) return out;
  const VoteSources sources = bvm_vote_sources(*bd, np_mask, out, batch_index);
  for (const auto& t : ties) {
    std::int32_t best = t.ids.front();
    int best_votes = -1;
    for (auto id : t.ids) {
      int v = 0;
      for (auto [label, count] : sources(t.r, t.c)) {
        if (label == id) v = count;
      }
      if (v > best_votes) {
        best_votes = v;
        best = id;
      }
    }
    out(t.r, t.c) = best;
  }
  return out;
}

std::vector<int> classify_instances(const InstanceMap& inst, const TypeMap& nt_pred) {
  if (!inst.same_dims(nt_pred)) throw ShapeError("classify_instances: map sizes differ");
  const int k = max_label(inst);
  std::vector<std::array<int, kNumClasses>> hist(static_cast<std::size_t>(k) + 1);
  std::array<int, kNumClasses> global{};
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const int t = nt_pred.data[i];
    if (t >= kNumClasses) throw ValueError("classify_instances: class " + std::to_string(t) + " out of range");
    ++global[t];
    if (inst.data[i] > 0) ++hist[inst.data[i]][t];
  }
  auto mode = [](const std::array<int, kNumClasses>& h) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      if (h[c] > 0 && (best == 0 || h[c] > h[best])) best = c;
    }
    return best;
  };
  const int fallback = mode(global) ? mode(global) : 1;
  std::vector<int> classes(static_cast<std::size_t>(k) + 1, 0);
  for (int id = 1; id <= k; ++id) {
    const int m = mode(hist[id]);
    classes[id] = m ? m : fallback;
  }
  return classes;
}

PostMode parse_post_mode(const std::string& s) {
  if (s == "bvm") return PostMode::kBvm;
  if (s == "naive") return PostMode::kNaive;
  throw ValueError("post-processing mode must be 'bvm' or 'naive', got '" + s + "'");
}

Grid<std::uint8_t> argmax_channels(const Tensor& logits, int batch_index) {
  const auto& s = logits.shape();
  if (batch_index < 0 || static_cast<std::size_t>(batch_index) >= s.n) throw ShapeError("argmax_channels: batch index out of range");
  if (s.c > 255) throw ShapeError("argmax_channels: too many channels");
  const auto n = static_cast<std::size_t>(batch_index);
  Grid<std::uint8_t> out(static_cast<int>(s.h), static_cast<int>(s.w), 0);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.c; ++c) {
      if (logits.plane(n, c)[i] > logits.plane(n, best)[i]) best = c;
    }
    out.data[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

TypeMap paint_classes(const InstanceMap& inst, const std::vector<int>& classes) {
  TypeMap t(inst.height, inst.width, 0);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto id = inst.data[i];
    if (id > 0) t.data[i] = static_cast<std::uint8_t>(classes.at(id));
  }
  return t;
}

Segmentation segment(const Tensor& np_logits, const Tensor& nt_logits, const Tensor& bd, const SegmentConfig& cfg,
                     int batch_index) {
  if (np_logits.shape().c != 2) throw ShapeError("segment: NP logits need 2 channels");
  const auto& s = np_logits.shape();
  if (nt_logits.shape().h != s.h || nt_logits.shape().w != s.w || bd.shape().h != s.h || bd.shape().w != s.w) {
    throw ShapeError("segment: output maps disagree in size");
  }
  Segmentation seg;
  seg.np = argmax_channels(np_logits, batch_index);
  seg.nb = Mask(seg.np.height, seg.np.width, 0);
  InstanceMap inst;
  if (cfg.mode == PostMode::kNaive) {
    inst = label_components(seg.np);
  } else {
    seg.nb = bvm(bd, seg.np, cfg.bvm, batch_index);
    inst = assign_boundary_pixels(connected_components(seg.np, seg.nb), seg.nb, seg.np, cfg.r_max, &bd, batch_index);
  }
  seg.inst = relabel_sequential(inst);
  seg.classes = classify_instances(seg.inst, argmax_channels(nt_logits, batch_index));
  return seg;
}

}  // namespace repsnet
