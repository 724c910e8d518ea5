#include "repsnet/groundtruth.hpp"

#include <algorithm>
#include <unordered_map>

namespace repsnet {

int max_label(const InstanceMap& inst) {
  int m = 0;
  for (auto v : inst.data) m = std::max(m, static_cast<int>(v));
  return m;
}

InstanceMap relabel_sequential(const InstanceMap& inst) {
  InstanceMap out(inst.height, inst.width, 0);
  std::unordered_map<std::int32_t, std::int32_t> ids;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto v = inst.data[i];
    if (v <= 0) continue;
    auto [it, inserted] = ids.try_emplace(v, static_cast<std::int32_t>(ids.size() + 1));
    out.data[i] = it->second;
  }
  return out;
}

bool has_contiguous_ids(const InstanceMap& inst) {
  const int k = max_label(inst);
  std::vector<char> seen(static_cast<std::size_t>(k) + 1, 0);
  for (auto v : inst.data) {
    if (v < 0) return false;
    seen[v] = 1;
  }
  for (int i = 1; i <= k; ++i) {
    if (!seen[i]) return false;
  }
  return true;
}

Mask foreground(const InstanceMap& inst) {
  Mask m(inst.height, inst.width, 0);
  for (std::size_t i = 0; i < inst.size(); ++i) m.data[i] = inst.data[i] > 0 ? 1 : 0;
  return m;
}

InstanceMap label_components(const Mask& mask) {
  InstanceMap out(mask.height, mask.width, 0);
  std::vector<std::pair<int, int>> stack;
  std::int32_t next = 0;
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask(r, c) || out(r, c)) continue;
      out(r, c) = ++next;
      stack.emplace_back(r, c);
      while (!stack.empty()) {
        auto [pr, pc] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
          const int rr = pr + dr[k];
          const int cc = pc + dc[k];
          if (mask.contains(rr, cc) && mask(rr, cc) && !out(rr, cc)) {
            out(rr, cc) = next;
            stack.emplace_back(rr, cc);
          }
        }
      }
    }
  }
  return out;
}

Mask inner_boundary(const InstanceMap& inst) {
  Mask b(inst.height, inst.width, 0);
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < inst.height; ++r) {
    for (int c = 0; c < inst.width; ++c) {
      const auto v = inst(r, c);
      if (v <= 0) continue;
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k];
        const int cc = c + dc[k];
        if (!inst.contains(rr, cc) || inst(rr, cc) != v) {
          b(r, c) = 1;
          break;
        }
      }
    }
  }
  return b;
}

Tensor bd_from_instances(const InstanceMap& inst) {
  const int H = inst.height;
  const int W = inst.width;
  Tensor bd({1, 4, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  // Each row (column) is split into maximal runs of one label; a pixel's
  // distances are its offsets to the two ends of its run.
  for (int r = 0; r < H; ++r) {
    int start = 0;
    while (start < W) {
      int end = start;
      while (end + 1 < W && inst(r, end + 1) == inst(r, start)) ++end;
      if (inst(r, start) > 0) {
        for (int c = start; c <= end; ++c) {
          bd(0, kBdLeft, r, c) = static_cast<float>(c - start);
          bd(0, kBdRight, r, c) = static_cast<float>(end - c);
        }
      }
      start = end + 1;
    }
  }
  for (int c = 0; c < W; ++c) {
    int start = 0;
    while (start < H) {
      int end = start;
      while (end + 1 < H && inst(end + 1, c) == inst(start, c)) ++end;
      if (inst(start, c) > 0) {
        for (int r = start; r <= end; ++r) {
          bd(0, kBdUp, r, c) = static_cast<float>(r - start);
          bd(0, kBdDown, r, c) = static_cast<float>(end - r);
        }
      }
      start = end + 1;
    }
  }
  return bd;
}

IsoheightMap isoheight_from_boundary(const Mask& boundary, int tau) {
  if (tau < 1) throw ValueError("isoheight tau must be at least 1");
  IsoheightMap psi(boundary.height, boundary.width, tau);
  std::vector<std::pair<int, int>> front;
  for (int r = 0; r < boundary.height; ++r) {
    for (int c = 0; c < boundary.width; ++c) {
      if (boundary(r, c)) {
        psi(r, c) = 0;
        front.emplace_back(r, c);
      }
    }
  }
  for (int level = 1; level < tau && !front.empty(); ++level) {
    std::vector<std::pair<int, int>> next;
    for (auto [r, c] : front) {
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (psi.contains(rr, cc) && psi(rr, cc) == tau) {
            psi(rr, cc) = level;
            next.emplace_back(rr, cc);
          }
        }
      }
    }
    front = std::move(next);
  }
  return psi;
}

bool types_consistent(const InstanceMap& inst, const TypeMap& types) {
  if (!inst.same_dims(types)) return false;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if ((inst.data[i] == 0) != (types.data[i] == 0)) return false;
    if (types.data[i] >= kNumClasses) return false;
  }
  return true;
}

template <class T>
Grid<T> rot90(const Grid<T>& g, int k) {
  k = ((k % 4) + 4) % 4;
  Grid<T> cur = g;
  for (int i = 0; i < k; ++i) {
    Grid<T> next(cur.width, cur.height);
    // Counter-clockwise: (r, c) -> (W-1-c, r).
    for (int r = 0; r < cur.height; ++r) {
      for (int c = 0; c < cur.width; ++c) next(cur.width - 1 - c, r) = cur(r, c);
    }
    cur = std::move(next);
  }
  return cur;
}

template <class T>
Grid<T> flip_horizontal(const Grid<T>& g) {
  Grid<T> out(g.height, g.width);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) out(r, g.width - 1 - c) = g(r, c);
  }
  return out;
}

template <class T>
Grid<T> flip_vertical(const Grid<T>& g) {
  Grid<T> out(g.height, g.width);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) out(g.height - 1 - r, c) = g(r, c);
  }
  return out;
}

template Grid<std::int32_t> rot90(const Grid<std::int32_t>&, int);
template Grid<std::uint8_t> rot90(const Grid<std::uint8_t>&, int);
template Grid<float> rot90(const Grid<float>&, int);
template Grid<std::int32_t> flip_horizontal(const Grid<std::int32_t>&);
template Grid<std::uint8_t> flip_horizontal(const Grid<std::uint8_t>&);
template Grid<float> flip_horizontal(const Grid<float>&);
template Grid<std::int32_t> flip_vertical(const Grid<std::int32_t>&);
template Grid<std::uint8_t> flip_vertical(const Grid<std::uint8_t>&);
template Grid<float> flip_vertical(const Grid<float>&);

}  // namespace repsnet
