#pragma once

// Independent reference implementations used as test oracles. Each is the
// most literal reading of its definition, written without sharing code with
// the library beyond the data types.

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "repsnet/groundtruth.hpp"
#include "repsnet/ops.hpp"

namespace oracle {

using namespace repsnet;

// ------------------------------------------------------------ tensor ops

/// Direct quadruple sum of the cross-correlation, zero padded.
template <class T>
BasicTensor<double> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  const auto& s = x.shape();
  const auto& ks = p.kernel.shape();
  const long k = static_cast<long>(ks.h);
  const long oh = (static_cast<long>(s.h) + 2 * p.padding - k) / p.stride + 1;
  const long ow = (static_cast<long>(s.w) + 2 * p.padding - k) / p.stride + 1;
  BasicTensor<double> y({s.n, ks.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < ks.n; ++o)
      for (long r = 0; r < oh; ++r)
        for (long c = 0; c < ow; ++c) {
          double acc = p.bias[o];
          for (std::size_t i = 0; i < s.c; ++i)
            for (long a = 0; a < k; ++a)
              for (long b = 0; b < k; ++b) {
                const long ir = r * p.stride - p.padding + a;
                const long ic = c * p.stride - p.padding + b;
                if (ir < 0 || ic < 0 || ir >= static_cast<long>(s.h) || ic >= static_cast<long>(s.w)) continue;
                acc += static_cast<double>(x(n, i, ir, ic)) * p.kernel(o, i, a, b);
              }
          y(n, o, r, c) = acc;
        }
  return y;
}

/// Scatter-accumulate: every input pixel adds its kernel-weighted copy at
/// stride offsets, then the padding border is cropped.
template <class T>
BasicTensor<double> deconv2d(const BasicTensor<T>& x, const BasicDeconvParams<T>& p) {
  const auto& s = x.shape();
  const auto& ks = p.kernel.shape();
  const long k = static_cast<long>(ks.h);
  const long full_h = (static_cast<long>(s.h) - 1) * p.stride + k + p.output_padding;
  const long full_w = (static_cast<long>(s.w) - 1) * p.stride + k + p.output_padding;
  std::vector<double> full(s.n * ks.c * full_h * full_w, 0.0);
  auto at = [&](std::size_t n, std::size_t o, long r, long c) -> double& {
    return full[((n * ks.c + o) * full_h + r) * full_w + c];
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.c; ++i)
      for (long r = 0; r < static_cast<long>(s.h); ++r)
        for (long c = 0; c < static_cast<long>(s.w); ++c)
          for (std::size_t o = 0; o < ks.c; ++o)
            for (long a = 0; a < k; ++a)
              for (long b = 0; b < k; ++b) at(n, o, r * p.stride + a, c * p.stride + b) += static_cast<double>(x(n, i, r, c)) * p.kernel(i, o, a, b);
  const long oh = full_h - 2 * p.padding;
  const long ow = full_w - 2 * p.padding;
  BasicTensor<double> y({s.n, ks.c, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < ks.c; ++o)
      for (long r = 0; r < oh; ++r)
        for (long c = 0; c < ow; ++c) y(n, o, r, c) = at(n, o, r + p.padding, c + p.padding) + p.bias[o];
  return y;
}

template <class T>
BasicTensor<double> softmax(const BasicTensor<T>& x) {
  const auto& s = x.shape();
  BasicTensor<double> y(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t c = 0; c < s.w; ++c) {
        double z = 0.0;
        for (std::size_t k = 0; k < s.c; ++k) z += std::exp(static_cast<double>(x(n, k, r, c)));
        for (std::size_t k = 0; k < s.c; ++k) y(n, k, r, c) = std::exp(static_cast<double>(x(n, k, r, c))) / z;
      }
  return y;
}

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

template <class T>
ChannelStats channel_stats(const BasicTensor<T>& x) {
  const auto& s = x.shape();
  ChannelStats st{std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  const double m = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.plane(); ++i) st.mean[c] += x.plane(n, c)[i];
    st.mean[c] /= m;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.plane(); ++i) st.var[c] += std::pow(x.plane(n, c)[i] - st.mean[c], 2);
    st.var[c] /= m;
  }
  return st;
}

// ------------------------------------------------------------ ground truth

inline bool in_image(const InstanceMap& m, int r, int c) { return r >= 0 && c >= 0 && r < m.height && c < m.width; }

/// Foreground pixel with a 4-neighbour (or the border) of a different label.
inline Mask inner_boundary(const InstanceMap& m) {
  Mask out(m.height, m.width, 0);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      if (m(r, c) == 0) continue;
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k];
        const int cc = c + dc[k];
        if (!in_image(m, rr, cc) || m(rr, cc) != m(r, c)) out(r, c) = 1;
      }
    }
  return out;
}

/// Walks each direction one step at a time while the label stays the same.
inline Tensor bd(const InstanceMap& m) {
  Tensor t({1, 4, static_cast<std::size_t>(m.height), static_cast<std::size_t>(m.width)});
  const int dr[4] = {0, 0, -1, 1};  // left, right, up, down
  const int dc[4] = {-1, 1, 0, 0};
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      const auto k = m(r, c);
      if (k == 0) continue;
      for (int d = 0; d < 4; ++d) {
        int steps = 0;
        while (in_image(m, r + (steps + 1) * dr[d], c + (steps + 1) * dc[d]) && m(r + (steps + 1) * dr[d], c + (steps + 1) * dc[d]) == k) ++steps;
        t(0, d, r, c) = static_cast<float>(steps);
      }
    }
  return t;
}

/// min(tau, Chebyshev distance to the nearest boundary pixel), by brute force.
inline IsoheightMap isoheight(const Mask& boundary, int tau) {
  IsoheightMap out(boundary.height, boundary.width, tau);
  for (int r = 0; r < boundary.height; ++r)
    for (int c = 0; c < boundary.width; ++c)
      for (int br = 0; br < boundary.height; ++br)
        for (int bc = 0; bc < boundary.width; ++bc) {
          if (!boundary(br, bc)) continue;
          const int d = std::max(std::abs(br - r), std::abs(bc - c));
          out(r, c) = std::min(out(r, c), d);
        }
  return out;
}

// ------------------------------------------------------------ post-processing

inline int round_half_away(double v) { return static_cast<int>(v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5)); }

/// Vote counting with an explicit list of landing positions.
inline Grid<std::int32_t> votes(const Tensor& bd, const Mask& fg, int n = 0) {
  const int H = fg.height;
  const int W = fg.width;
  Grid<std::int32_t> v(H, W, 0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      if (!fg(r, c)) continue;
      std::vector<std::pair<int, int>> hits = {
          {r, c - round_half_away(bd(n, 0, r, c))},
          {r, c + round_half_away(bd(n, 1, r, c))},
          {r - round_half_away(bd(n, 2, r, c)), c},
          {r + round_half_away(bd(n, 3, r, c)), c},
      };
      for (auto [hr, hc] : hits) ++v(std::clamp(hr, 0, H - 1), std::clamp(hc, 0, W - 1));
    }
  return v;
}

/// Union-find 4-connectivity. Returns a label per pixel (0 background) with
/// arbitrary but consistent ids.
inline InstanceMap components_union_find(const Mask& m) {
  const int H = m.height;
  const int W = m.width;
  std::vector<int> parent(static_cast<std::size_t>(H * W));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      if (!m(r, c)) continue;
      if (r + 1 < H && m(r + 1, c)) parent[find(r * W + c)] = find((r + 1) * W + c);
      if (c + 1 < W && m(r, c + 1)) parent[find(r * W + c)] = find(r * W + c + 1);
    }
  InstanceMap out(H, W, 0);
  std::map<int, int> ids;
  for (int i = 0; i < H * W; ++i) {
    if (!m.data[i]) continue;
    auto [it, fresh] = ids.emplace(find(i), static_cast<int>(ids.size()) + 1);
    out.data[i] = it->second;
  }
  return out;
}

/// True when both maps induce the same partition of the foreground.
inline bool same_partition(const InstanceMap& a, const InstanceMap& b) {
  if (!a.same_dims(b)) return false;
  std::map<int, int> ab;
  std::map<int, int> ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = a.data[i];
    const int y = b.data[i];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    if (auto [it, fresh] = ab.emplace(x, y); !fresh && it->second != y) return false;
    if (auto [it, fresh] = ba.emplace(y, x); !fresh && it->second != x) return false;
  }
  return true;
}

/// All-pairs nearest labeled pixel for every NB pixel inside np.
inline InstanceMap assign(const InstanceMap& inst, const Mask& nb, const Mask& np, double r_max) {
  InstanceMap out = inst;
  for (int r = 0; r < inst.height; ++r)
    for (int c = 0; c < inst.width; ++c) {
      if (!nb(r, c) || !np(r, c) || inst(r, c) != 0) continue;
      long best_d = -1;
      int best_id = 0;
      for (int rr = 0; rr < inst.height; ++rr)
        for (int cc = 0; cc < inst.width; ++cc) {
          const int id = inst(rr, cc);
          if (id == 0) continue;
          const long d = static_cast<long>(rr - r) * (rr - r) + static_cast<long>(cc - c) * (cc - c);
          if (static_cast<double>(d) > r_max * r_max) continue;
          if (best_d < 0 || d < best_d || (d == best_d && id < best_id)) {
            best_d = d;
            best_id = id;
          }
        }
      out(r, c) = best_id;
    }
  return out;
}

/// Histogram argmax over classes 1..6, falling back as documented.
inline std::vector<int> classify(const InstanceMap& inst, const TypeMap& types) {
  int k = 0;
  for (auto v : inst.data) k = std::max(k, v);
  std::vector<std::array<int, 7>> hist(k + 1, std::array<int, 7>{});
  std::array<int, 7> global{};
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (inst.data[i] > 0) ++hist[inst.data[i]][types.data[i]];
    if (types.data[i] > 0) ++global[types.data[i]];
  }
  int global_best = 1;
  for (int c = 1; c <= 6; ++c)
    if (global[c] > global[global_best]) global_best = c;
  std::vector<int> out(k + 1, 0);
  for (int id = 1; id <= k; ++id) {
    int best = 0;
    for (int c = 1; c <= 6; ++c)
      if (hist[id][c] > 0 && (best == 0 || hist[id][c] > hist[id][best])) best = c;
    out[id] = best == 0 ? global_best : best;
  }
  return out;
}

// ------------------------------------------------------------ metrics

inline std::set<int> ids(const InstanceMap& m) {
  std::set<int> s;
  for (auto v : m.data)
    if (v) s.insert(v);
  return s;
}

inline double count_where(const InstanceMap& a, int x, const InstanceMap& b, int y) {
  double n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a.data[i] == x && b.data[i] == y);
  return n;
}
inline double area(const InstanceMap& a, int x) {
  return static_cast<double>(std::count(a.data.begin(), a.data.end(), x));
}
inline double iou(const InstanceMap& g, int gi, const InstanceMap& p, int pj) {
  const double inter = count_where(g, gi, p, pj);
  const double uni = area(g, gi) + area(p, pj) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline double dice(const InstanceMap& g, const InstanceMap& p) {
  double inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    a += g.data[i] != 0;
    b += p.data[i] != 0;
    inter += g.data[i] != 0 && p.data[i] != 0;
  }
  return a + b > 0 ? 2 * inter / (a + b) : 0.0;
}

/// Literal AJI: per GT, argmax IoU over all predictions (smaller id on
/// ties), then add every never-chosen prediction to the union.
inline double aji(const InstanceMap& g, const InstanceMap& p) {
  const auto gs = ids(g);
  const auto ps = ids(p);
  double num = 0, den = 0;
  std::set<int> used;
  for (int gi : gs) {
    if (ps.empty()) {
      den += area(g, gi);
      continue;
    }
    int best = *ps.begin();
    double best_iou = -1;
    for (int pj : ps) {
      const double v = iou(g, gi, p, pj);
      if (v > best_iou) {
        best_iou = v;
        best = pj;
      }
    }
    const double inter = count_where(g, gi, p, best);
    num += inter;
    den += area(g, gi) + area(p, best) - inter;
    used.insert(best);
  }
  for (int pj : ps)
    if (!used.count(pj)) den += area(p, pj);
  return den > 0 ? num / den : 0.0;
}

struct Pq {
  double pq = 0;
  int tp = 0, fp = 0, fn = 0;
};

/// TP = all (g, p) pairs with IoU > 0.5.
inline Pq pq(const InstanceMap& g, const InstanceMap& p) {
  const auto gs = ids(g);
  const auto ps = ids(p);
  Pq r;
  double iou_sum = 0;
  std::set<int> mg, mp;
  for (int gi : gs)
    for (int pj : ps) {
      const double v = iou(g, gi, p, pj);
      if (v > 0.5) {
        ++r.tp;
        iou_sum += v;
        mg.insert(gi);
        mp.insert(pj);
      }
    }
  r.fn = static_cast<int>(gs.size() - mg.size());
  r.fp = static_cast<int>(ps.size() - mp.size());
  if (r.tp > 0) r.pq = (2.0 * r.tp / (2.0 * r.tp + r.fp + r.fn)) * (iou_sum / r.tp);
  return r;
}

inline InstanceMap only_class(const InstanceMap& m, const std::vector<int>& classes, int cls) {
  InstanceMap out = m;
  for (auto& v : out.data)
    if (v && classes[v] != cls) v = 0;
  return out;
}

/// Mean per-class PQ over classes present in either map; -1 when none is.
inline double mpq(const InstanceMap& g, const std::vector<int>& gc, const InstanceMap& p, const std::vector<int>& pc) {
  double sum = 0;
  int n = 0;
  for (int cls = 1; cls <= 6; ++cls) {
    const InstanceMap gg = only_class(g, gc, cls);
    const InstanceMap pp = only_class(p, pc, cls);
    if (ids(gg).empty() && ids(pp).empty()) continue;
    sum += pq(gg, pp).pq;
    ++n;
  }
  return n ? sum / n : -1.0;
}

// ------------------------------------------------------------ random inputs

/// Random instance map of random axis-aligned rectangles and blobs, ids
/// 1..K contiguous (zero allowed).
inline InstanceMap random_instances(std::mt19937_64& rng, int h, int w, int max_instances) {
  std::uniform_int_distribution<int> count(0, max_instances);
  InstanceMap m(h, w, 0);
  const int k = count(rng);
  for (int id = 1; id <= k; ++id) {
    std::uniform_int_distribution<int> rr(0, h - 1), cc(0, w - 1);
    const int r0 = rr(rng), c0 = cc(rng);
    std::uniform_int_distribution<int> ext(1, std::max(1, std::min(h, w) / 2));
    const int eh = ext(rng), ew = ext(rng);
    for (int r = r0; r < std::min(h, r0 + eh); ++r)
      for (int c = c0; c < std::min(w, c0 + ew); ++c) m(r, c) = id;
  }
  return relabel_sequential(m);
}

}  // namespace oracle
