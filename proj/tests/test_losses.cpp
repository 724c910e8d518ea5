#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "repsnet/losses.hpp"
#include "repsnet/synth.hpp"

using namespace repsnet;

namespace {

Mask full_mask(int h, int w) { return Mask(h, w, 1); }

Tensor uniform(Shape s, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Straight from the formula: every foreground pixel casts four rays, each read
// from psi where it lands.
double nb_oracle(const Tensor& bd, const std::vector<Mask>& fg, const std::vector<IsoheightMap>& psi, int tau,
                 double e) {
  double sum = 0.0;
  double rays = 0.0;
  for (std::size_t n = 0; n < fg.size(); ++n) {
    const int h = fg[n].height, w = fg[n].width;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!fg[n](r, c)) continue;
        const int left = std::clamp(c - oracle::round_half_away(bd(n, kBdLeft, r, c)), 0, w - 1);
        const int right = std::clamp(c + oracle::round_half_away(bd(n, kBdRight, r, c)), 0, w - 1);
        const int up = std::clamp(r - oracle::round_half_away(bd(n, kBdUp, r, c)), 0, h - 1);
        const int down = std::clamp(r + oracle::round_half_away(bd(n, kBdDown, r, c)), 0, h - 1);
        sum += psi[n](r, left) + psi[n](r, right) + psi[n](up, c) + psi[n](down, c);
        rays += 4;
      }
  }
  return sum / (tau * rays + e);
}

NetOutputs random_outputs(std::size_t n, int h, int w, std::mt19937_64& rng) {
  NetOutputs o;
  o.np_logits = uniform({n, 2, std::size_t(h), std::size_t(w)}, rng, -2, 2);
  o.nt_logits = uniform({n, 7, std::size_t(h), std::size_t(w)}, rng, -2, 2);
  o.bd = uniform({n, 4, std::size_t(h), std::size_t(w)}, rng, 0, 8);
  return o;
}

Targets sample_targets(std::uint64_t seed, int n) {
  SynthSpec spec;
  spec.height = spec.width = 32;
  std::vector<InstanceMap> inst;
  std::vector<TypeMap> types;
  for (int i = 0; i < n; ++i) {
    const Sample s = synth_sample(seed + i, spec);
    inst.push_back(s.inst);
    types.push_back(s.types);
  }
  return make_targets(inst, types);
}

bool all_zero(const Tensor& t) {
  for (float v : t.values())
    if (v != 0.0f) return false;
  return true;
}

}  // namespace

TEST(CeDice, UniformLogitsGiveLn2) {
  const Tensor logits({1, 2, 4, 4});
  Grid<std::uint8_t> t(4, 4);
  for (std::size_t i = 0; i < t.size(); i += 2) t.data[i] = 1;
  const auto r = ce_plus_dice(logits, {t});
  EXPECT_NEAR(r.ce, std::log(2.0), 1e-9);
}

TEST(CeDice, SaturationGoesToZero) {
  Grid<std::uint8_t> t(4, 4);
  for (std::size_t i = 0; i < t.size(); i += 3) t.data[i] = 1;
  Tensor logits({1, 2, 4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) logits(0, t(r, c), r, c) = 50.0f;
  const auto res = ce_plus_dice(logits, {t});
  EXPECT_LT(res.ce, 1e-9);
  EXPECT_LT(res.dice, 1e-9);
  EXPECT_LT(res.value, 1e-9);
}

TEST(CeDice, OutOfRangeTargetRejected) {
  Grid<std::uint8_t> t(2, 2);
  t(1, 1) = 2;
  EXPECT_THROW(ce_plus_dice(Tensor({1, 2, 2, 2}), {t}), ValueError);
}

TEST(SmoothL1, QuadraticBranch) {
  const Tensor target({1, 4, 3, 3}, 2.0f);
  const Tensor pred({1, 4, 3, 3}, 2.5f);
  EXPECT_NEAR(smooth_l1(pred, target, {full_mask(3, 3)}).value, 0.125, 1e-12);
}

TEST(SmoothL1, LinearBranch) {
  const Tensor target({1, 4, 3, 3}, 1.0f);
  const Tensor pred({1, 4, 3, 3}, 3.0f);
  EXPECT_NEAR(smooth_l1(pred, target, {full_mask(3, 3)}).value, 1.5, 1e-12);
}

TEST(SmoothL1, BackgroundExcludedAndEmptyIsZero) {
  std::mt19937_64 rng(1);
  const Tensor target({1, 4, 3, 3});
  const Tensor pred = uniform({1, 4, 3, 3}, rng, 0, 5);
  const auto r = smooth_l1(pred, target, {Mask(3, 3)});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(all_zero(r.grad));
}

TEST(SmoothL1, MatchesElementwiseOracle) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution on(0.6);
  for (int t = 0; t < 20; ++t) {
    const Tensor pred = uniform({2, 4, 6, 5}, rng, 0, 6);
    const Tensor target = uniform({2, 4, 6, 5}, rng, 0, 6);
    std::vector<Mask> fg(2, Mask(6, 5));
    double sum = 0.0;
    int count = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 5; ++c) {
          fg[n](r, c) = on(rng);
          if (!fg[n](r, c)) continue;
          for (std::size_t k = 0; k < 4; ++k) {
            const double d = std::abs(double(pred(n, k, r, c)) - target(n, k, r, c));
            sum += d < 1 ? 0.5 * d * d : d - 0.5;
            ++count;
          }
        }
    EXPECT_NEAR(smooth_l1(pred, target, fg).value, count ? sum / count : 0.0, 1e-6);
  }
}

TEST(NbLoss, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Targets tg = sample_targets(100 + t * 3, 2);
    const Tensor bd = uniform({2, 4, 32, 32}, rng, 0, 12);
    const IsoheightConfig cfg;
    EXPECT_NEAR(nb_loss(bd, tg.np, tg.psi, cfg).value, nb_oracle(bd, tg.np, tg.psi, cfg.tau, cfg.e), 1e-9);
  }
}

TEST(NbLoss, ExactBoundaryDistancesGiveZero) {
  const Targets tg = sample_targets(7, 2);
  const auto r = nb_loss(tg.bd, tg.np, tg.psi, IsoheightConfig{});
  EXPECT_EQ(r.value, 0.0);
}

TEST(NbLoss, SaturatesNearOne) {
  // One instance in a large image, every ray pushed past tau into flat background.
  InstanceMap inst(40, 40);
  for (int r = 18; r < 22; ++r)
    for (int c = 18; c < 22; ++c) inst(r, c) = 1;
  const Targets tg = make_targets({inst}, {TypeMap(40, 40)});
  Tensor bd({1, 4, 40, 40});
  for (int r = 18; r < 22; ++r)
    for (int c = 18; c < 22; ++c)
      for (std::size_t k = 0; k < 4; ++k) bd(0, k, r, c) = 15.0f;
  const IsoheightConfig cfg;
  const double rays = 4.0 * 16;
  const auto res = nb_loss(bd, tg.np, tg.psi, cfg);
  EXPECT_NEAR(res.value, cfg.tau * rays / (cfg.tau * rays + cfg.e), 1e-12);
  EXPECT_LT(res.value, 1.0);
}

TEST(NbLoss, EmptyForegroundIsZero) {
  const Targets tg = make_targets({InstanceMap(8, 8)}, {TypeMap(8, 8)});
  const auto r = nb_loss(Tensor({1, 4, 8, 8}, 3.0f), tg.np, tg.psi, IsoheightConfig{});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(all_zero(r.grad));
}

TEST(NbLoss, AlwaysBelowOne) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Targets tg = sample_targets(200 + t, 1);
    const double v = nb_loss(uniform({1, 4, 32, 32}, rng, 0, 40), tg.np, tg.psi, IsoheightConfig{}).value;
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(TotalLoss, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(5);
  const Targets tg = sample_targets(1, 2);
  const LossReport r = total_loss(random_outputs(2, 32, 32, rng), tg, LossWeights{0, 0, 0, 0});
  EXPECT_EQ(r.total, 0.0);
  EXPECT_TRUE(all_zero(r.grads.np_logits));
  EXPECT_TRUE(all_zero(r.grads.nt_logits));
  EXPECT_TRUE(all_zero(r.grads.bd));
}

TEST(TotalLoss, ProjectionAndRecomposition) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const Targets tg = sample_targets(10 + t * 2, 2);
    const NetOutputs o = random_outputs(2, 32, 32, rng);
    const LossReport np_only = total_loss(o, tg, LossWeights{1, 0, 0, 0});
    std::vector<Grid<std::uint8_t>> np(tg.np.begin(), tg.np.end());
    EXPECT_NEAR(np_only.total, ce_plus_dice(o.np_logits, np).value, 1e-12);

    std::uniform_real_distribution<double> u(0.0, 2.0);
    const LossWeights w{u(rng), u(rng), u(rng), u(rng)};
    const LossReport r = total_loss(o, tg, w);
    EXPECT_NEAR(r.total, w.np * r.np + w.nt * r.nt + w.bd * r.bd + w.nb * r.nb, 1e-9);
    EXPECT_NEAR(r.nb, nb_oracle(o.bd, tg.np, tg.psi, kDefaultTau, 1.0), 1e-9);
    for (double v : {r.np, r.nt, r.bd, r.nb}) EXPECT_GE(v, 0.0);
  }
}

TEST(TotalLoss, GradientIsLinearInWeights) {
  std::mt19937_64 rng(7);
  const Targets tg = sample_targets(30, 1);
  const NetOutputs o = random_outputs(1, 32, 32, rng);
  const LossReport one = total_loss(o, tg, LossWeights{1, 1, 1, 1});
  const LossReport scaled = total_loss(o, tg, LossWeights{1, 3, 0.5, 1});
  const auto a = one.grads.nt_logits.values();
  const auto b = scaled.grads.nt_logits.values();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 3.0f * a[i], 1e-6f * (1 + std::abs(a[i])));
  const auto c = one.grads.np_logits.values();
  const auto d = scaled.grads.np_logits.values();
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i], d[i]);
  // bd receives the smooth-L1 and the isoheight terms; isolate the first.
  const LossReport bd1 = total_loss(o, tg, LossWeights{0, 0, 1, 0});
  const LossReport bd2 = total_loss(o, tg, LossWeights{0, 0, 0.5, 0});
  const auto e = bd1.grads.bd.values();
  const auto f = bd2.grads.bd.values();
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(f[i], 0.5f * e[i], 1e-7f);
}

TEST(TotalLoss, NonFiniteNamesTheComponent) {
  std::mt19937_64 rng(8);
  const Targets tg = sample_targets(40, 1);
  NetOutputs o = random_outputs(1, 32, 32, rng);
  o.nt_logits(0, 3, 5, 5) = std::numeric_limits<float>::quiet_NaN();
  try {
    total_loss(o, tg, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("nt"), std::string::npos) << e.what();
  }
}

TEST(TotalLoss, OutOfRangeTypeRejected) {
  std::mt19937_64 rng(9);
  Targets tg = sample_targets(50, 1);
  tg.nt[0](0, 0) = 9;
  EXPECT_THROW(total_loss(random_outputs(1, 32, 32, rng), tg, LossWeights{}), ValueError);
}
