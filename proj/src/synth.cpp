#include "repsnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace repsnet {

void SynthSpec::validate() const {
  if (height < 8 || width < 8) throw ValueError("synthetic images must be at least 8x8");
  if (min_nuclei < 0 || max_nuclei < min_nuclei) throw ValueError("invalid nucleus count range");
  if (!(min_radius > 0.0) || max_radius < min_radius) throw ValueError("invalid radius range");
  if (2.0 * max_radius + 2.0 > static_cast<double>(std::min(height, width))) {
    throw ValueError("nucleus radius exceeds the image extent");
  }
  if (overlap_prob < 0.0 || overlap_prob > 1.0) throw ValueError("overlap_prob must be in [0, 1]");
  double total = 0.0;
  for (double w : class_weights) {
    if (w < 0.0) throw ValueError("class weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw ValueError("class weights sum to zero");
  if (noise_sigma < 0.0) throw ValueError("noise_sigma must be non-negative");
  if (min_area < 1) throw ValueError("min_area must be positive");
  if (min_visible < 0.0 || min_visible > 1.0) throw ValueError("min_visible must be in [0, 1]");
}

namespace {

constexpr float kClassColor[6][3] = {
    {0.58f, 0.22f, 0.48f}, {0.32f, 0.22f, 0.62f}, {0.18f, 0.12f, 0.36f},
    {0.66f, 0.40f, 0.58f}, {0.78f, 0.26f, 0.30f}, {0.42f, 0.44f, 0.72f},
};

struct Ellipse {
  double cr, cc, a, b, theta;
};

bool inside(const Ellipse& e, double r, double c) {
  const double dy = r - e.cr;
  const double dx = c - e.cc;
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double u = (dx * ct + dy * st) / e.a;
  const double v = (-dx * st + dy * ct) / e.b;
  return u * u + v * v <= 1.0;
}

double radius_along(const Ellipse& e, double dir) {
  const double t = dir - e.theta;
  return e.a * e.b / std::hypot(e.b * std::cos(t), e.a * std::sin(t));
}

// Opening by a 4x4 square: keeps the pixels covered by some 4x4 block that
// lies entirely inside the mask. Afterwards every row and column run is at
// least 4 pixels long.
Mask open4(const Mask& m) {
  Mask out(m.height, m.width, 0);
  for (int r = 0; r + 3 < m.height; ++r) {
    for (int c = 0; c + 3 < m.width; ++c) {
      bool full = true;
      for (int dr = 0; dr < 4 && full; ++dr) {
        for (int dc = 0; dc < 4 && full; ++dc) full = m(r + dr, c + dc) != 0;
      }
      if (!full) continue;
      for (int dr = 0; dr < 4; ++dr) {
        for (int dc = 0; dc < 4; ++dc) out(r + dr, c + dc) = 1;
      }
    }
  }
  return out;
}

// Per label: 4x4 opening, then the largest 4-connected piece. Labels that end
// up too small or mostly hidden are dropped.
InstanceMap cleanup(const InstanceMap& raw, const std::vector<int>& full_area, int min_area, double min_visible) {
  const int labels = static_cast<int>(full_area.size());
  InstanceMap out(raw.height, raw.width, 0);
  for (int id = 1; id <= labels; ++id) {
    Mask m(raw.height, raw.width, 0);
    for (std::size_t i = 0; i < raw.size(); ++i) m.data[i] = raw.data[i] == id;
    const InstanceMap parts = label_components(open4(m));
    const int k = max_label(parts);
    if (k == 0) continue;
    std::vector<int> area(static_cast<std::size_t>(k) + 1, 0);
    for (auto v : parts.data) ++area[v];
    int best = 1;
    for (int j = 2; j <= k; ++j) {
      if (area[j] > area[best]) best = j;
    }
    if (area[best] < min_area || area[best] < min_visible * full_area[id - 1]) continue;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (parts.data[i] == best) out.data[i] = id;
    }
  }
  return out;
}

}  // namespace

Sample synth_sample(std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count_dist(spec.min_nuclei, spec.max_nuclei);
  std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::discrete_distribution<int> cls(spec.class_weights.begin(), spec.class_weights.end());
  const int H = spec.height;
  const int W = spec.width;

  const int count = count_dist(rng);
  std::vector<Ellipse> shapes;
  std::vector<int> classes;
  for (int i = 0; i < count; ++i) {
    Ellipse e{};
    e.a = radius(rng);
    e.b = radius(rng);
    e.theta = unit(rng) * std::numbers::pi;
    bool placed = false;
    if (shapes.empty() || unit(rng) >= spec.overlap_prob) {
      // Free placement: a few tries at a spot clear of every other nucleus.
      for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
        e.cr = spec.min_radius + unit(rng) * (H - 1 - 2 * spec.min_radius);
        e.cc = spec.min_radius + unit(rng) * (W - 1 - 2 * spec.min_radius);
        placed = std::all_of(shapes.begin(), shapes.end(), [&](const Ellipse& o) {
          return std::hypot(o.cr - e.cr, o.cc - e.cc) > std::max(o.a, o.b) + std::max(e.a, e.b) + 1.0;
        });
      }
    }
    if (!placed && !shapes.empty()) {
      // Touching placement: centres one radius-sum apart along a random
      // direction, pulled in slightly so the pair shares a short contact.
      const auto& host = shapes[std::uniform_int_distribution<std::size_t>(0, shapes.size() - 1)(rng)];
      const double dir = unit(rng) * 2.0 * std::numbers::pi;
      const double dist = (radius_along(host, dir) + radius_along(e, dir + std::numbers::pi)) * (0.8 + 0.15 * unit(rng));
      e.cr = std::clamp(host.cr + dist * std::sin(dir), 0.0, H - 1.0);
      e.cc = std::clamp(host.cc + dist * std::cos(dir), 0.0, W - 1.0);
      placed = true;
    }
    shapes.push_back(e);
    classes.push_back(cls(rng) + 1);
  }

  InstanceMap raw(H, W, 0);
  std::vector<int> full_area(count, 0);
  for (int i = 0; i < count; ++i) {
    const auto& e = shapes[i];
    const double reach = std::max(e.a, e.b) + 1.0;
    const int r0 = std::max(0, static_cast<int>(std::floor(e.cr - reach)));
    const int r1 = std::min(H - 1, static_cast<int>(std::ceil(e.cr + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(e.cc - reach)));
    const int c1 = std::min(W - 1, static_cast<int>(std::ceil(e.cc + reach)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (inside(e, r, c)) {
          raw(r, c) = i + 1;
          ++full_area[i];
        }
      }
    }
  }

  const InstanceMap kept = cleanup(raw, full_area, spec.min_area, spec.min_visible);
  Sample s;
  s.inst = relabel_sequential(kept);
  s.types = TypeMap(H, W, 0);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept.data[i] > 0) s.types.data[i] = static_cast<std::uint8_t>(classes[kept.data[i] - 1]);
  }

  // Rendering: smooth background texture, class colour darkened towards the
  // nucleus rim, additive noise, then 8-bit quantization.
  const IsoheightMap depth = isoheight_from_boundary(inner_boundary(s.inst), 3);
  double phase[3][2];
  for (auto& p : phase) {
    p[0] = unit(rng) * 2.0 * std::numbers::pi;
    p[1] = unit(rng) * 2.0 * std::numbers::pi;
  }
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  s.image = Tensor({1, 3, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  constexpr float kBackground[3] = {0.90f, 0.78f, 0.86f};
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        double v;
        const int t = s.types(r, c);
        if (t == 0) {
          v = kBackground[ch] + 0.04 * std::sin(0.21 * r + phase[ch][0]) * std::cos(0.17 * c + phase[ch][1]);
        } else {
          const double rim = 0.7 + 0.1 * depth(r, c);
          v = kClassColor[t - 1][ch] * rim;
        }
        if (spec.noise_sigma > 0.0) v += noise(rng);
        v = std::clamp(v, 0.0, 1.0);
        s.image(0, ch, r, c) = static_cast<float>(std::round(v * 255.0) / 255.0);
      }
    }
  }
  return s;
}

bool Augmentation::is_identity() const {
  return !flip_horizontal && !flip_vertical && rot90 % 4 == 0 && gain == std::array<float, 3>{1.0f, 1.0f, 1.0f};
}

namespace {

template <class T>
Grid<T> transform(const Grid<T>& g, const Augmentation& aug) {
  Grid<T> out = g;
  if (aug.flip_horizontal) out = flip_horizontal(out);
  if (aug.flip_vertical) out = flip_vertical(out);
  if (aug.rot90 % 4 != 0) out = rot90(out, aug.rot90);
  return out;
}

}  // namespace

Sample apply_augmentation(const Sample& s, const Augmentation& aug) {
  if (aug.is_identity()) return s;
  Sample out;
  out.inst = transform(s.inst, aug);
  out.types = transform(s.types, aug);
  const auto& sh = s.image.shape();
  out.image = Tensor({1, sh.c, static_cast<std::size_t>(out.inst.height), static_cast<std::size_t>(out.inst.width)});
  for (std::size_t ch = 0; ch < sh.c; ++ch) {
    Grid<float> plane(static_cast<int>(sh.h), static_cast<int>(sh.w));
    std::copy_n(&s.image(0, ch, 0, 0), plane.size(), plane.data.begin());
    plane = transform(plane, aug);
    const float gain = ch < 3 ? aug.gain[ch] : 1.0f;
    float* dst = &out.image(0, ch, 0, 0);
    for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = std::clamp(plane.data[i] * gain, 0.0f, 1.0f);
  }
  return out;
}

Augmentation random_augmentation(std::mt19937_64& rng, double color_jitter) {
  std::bernoulli_distribution coin(0.5);
  Augmentation a;
  a.flip_horizontal = coin(rng);
  a.flip_vertical = coin(rng);
  a.rot90 = std::uniform_int_distribution<int>(0, 3)(rng);
  std::uniform_real_distribution<double> g(1.0 - color_jitter, 1.0 + color_jitter);
  for (auto& v : a.gain) v = static_cast<float>(g(rng));
  return a;
}

}  // namespace repsnet
