#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "repsnet/postprocess.hpp"
#include "repsnet/synth.hpp"

using namespace repsnet;

namespace {

void fill_square(InstanceMap& m, int top, int left, int side, int id) {
  for (int r = top; r < top + side; ++r)
    for (int c = left; c < left + side; ++c) m(r, c) = id;
}

int count(const Mask& m) {
  int n = 0;
  for (auto v : m.data) n += v;
  return n;
}

// Logits and BD maps a perfect network would produce for this scene.
struct ExactOutputs {
  Tensor np, nt, bd;
};

ExactOutputs exact_outputs(const InstanceMap& inst, const TypeMap& types) {
  const std::size_t h = inst.height, w = inst.width;
  ExactOutputs o{Tensor({1, 2, h, w}), Tensor({1, kNumClasses, h, w}), bd_from_instances(inst)};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      o.np(0, inst(r, c) ? 1 : 0, r, c) = 5.0f;
      o.nt(0, types(r, c), r, c) = 5.0f;
    }
  return o;
}

Tensor noisy_bd(const InstanceMap& inst, std::mt19937_64& rng, double fraction) {
  Tensor bd = bd_from_instances(inst);
  std::bernoulli_distribution hit(fraction), sign(0.5);
  for (auto& v : bd.values())
    if (hit(rng)) v = std::max(0.0f, v + (sign(rng) ? 1.0f : -1.0f));
  return bd;
}

Mask fg_of(const InstanceMap& m) { return foreground(m); }

}  // namespace

TEST(Bvm, EmptyMaskGivesNoBoundary) {
  const Tensor bd({1, 4, 8, 8}, 2.0f);
  EXPECT_EQ(count(bvm(bd, Mask(8, 8))), 0);
}

TEST(Bvm, SquarePerimeterFromExactDistances) {
  InstanceMap m(9, 9);
  fill_square(m, 2, 2, 5, 1);
  const Mask nb = bvm(bd_from_instances(m), fg_of(m));
  EXPECT_EQ(nb, inner_boundary(m));
  EXPECT_EQ(count(nb), 16);
  const auto v = bvm_votes(bd_from_instances(m), fg_of(m));
  for (std::size_t i = 0; i < nb.size(); ++i)
    if (nb.data[i]) EXPECT_GE(v.data[i], 5);
}

TEST(Bvm, NoisyDistancesMatchVoteOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 30; ++t) {
    const Sample s = synth_sample(t, SynthSpec{});
    const Tensor bd = noisy_bd(s.inst, rng, 0.3);
    const Mask fg = fg_of(s.inst);
    const auto expected = oracle::votes(bd, fg);
    EXPECT_EQ(bvm_votes(bd, fg), expected);
    const Mask nb = bvm(bd, fg);
    for (std::size_t i = 0; i < nb.size(); ++i) EXPECT_EQ(nb.data[i], expected.data[i] > 3 ? 1 : 0);
  }
}

TEST(Bvm, NoisySquarePerimeterSurvives) {
  std::mt19937_64 rng(2);
  InstanceMap m(16, 16);
  fill_square(m, 3, 3, 9, 1);
  for (int t = 0; t < 20; ++t) {
    const Tensor bd = noisy_bd(m, rng, 0.3);
    const auto v = oracle::votes(bd, fg_of(m));
    const Mask nb = bvm(bd, fg_of(m));
    const Mask perim = inner_boundary(m);
    for (std::size_t i = 0; i < nb.size(); ++i) EXPECT_EQ(nb.data[i], v.data[i] > 3 ? 1 : 0);
    int kept = 0;
    for (std::size_t i = 0; i < nb.size(); ++i) kept += perim.data[i] && nb.data[i];
    EXPECT_GT(kept, count(perim) / 2);
  }
}

TEST(Bvm, VoteConservation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-3.0f, 40.0f);
  for (int t = 0; t < 20; ++t) {
    const InstanceMap m = oracle::random_instances(rng, 20, 25, 6);
    Tensor bd({1, 4, 20, 25});
    for (auto& v : bd.values()) v = u(rng);
    const auto votes = bvm_votes(bd, fg_of(m));
    long total = 0;
    for (auto v : votes.data) total += v;
    EXPECT_EQ(total, 4L * count(fg_of(m)));
  }
}

TEST(Bvm, HigherThresholdNeverAddsPixels) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Sample s = synth_sample(100 + t, SynthSpec{});
    const Tensor bd = noisy_bd(s.inst, rng, 0.5);
    Mask prev = bvm(bd, fg_of(s.inst), BvmConfig{0});
    for (int e = 1; e < 10; ++e) {
      const Mask cur = bvm(bd, fg_of(s.inst), BvmConfig{e});
      for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_LE(cur.data[i], prev.data[i]);
      prev = cur;
    }
  }
}

TEST(Components, EmptyAndTwoSquares) {
  EXPECT_EQ(max_label(connected_components(Mask(5, 5), Mask(5, 5))), 0);
  InstanceMap m(10, 10);
  fill_square(m, 1, 1, 3, 7);
  fill_square(m, 5, 5, 3, 9);
  const InstanceMap c = connected_components(fg_of(m), Mask(10, 10));
  EXPECT_EQ(c(1, 1), 1);
  EXPECT_EQ(c(5, 5), 2);
}

TEST(Components, MatchesUnionFindAndRasterOrder) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution on(0.55);
  for (int t = 0; t < 50; ++t) {
    Mask m(21, 17);
    for (auto& v : m.data) v = on(rng);
    const InstanceMap c = label_components(m);
    EXPECT_TRUE(oracle::same_partition(c, oracle::components_union_find(m)));
    // Labels appear in raster order 1, 2, 3, ...
    int next = 1;
    for (auto v : c.data)
      if (v == next) ++next;
      else EXPECT_LT(v, next);
    EXPECT_EQ(next - 1, max_label(c));
  }
}

TEST(Components, DiagonalNeighboursStaySeparate) {
  Mask m(2, 2);
  m(0, 0) = m(1, 1) = 1;
  EXPECT_EQ(max_label(label_components(m)), 2);
}

TEST(Assign, EmptyBoundaryLeavesMap) {
  std::mt19937_64 rng(6);
  const InstanceMap m = oracle::random_instances(rng, 15, 15, 4);
  EXPECT_EQ(assign_boundary_pixels(m, Mask(15, 15), fg_of(m)), m);
}

TEST(Assign, SquarePerimeterReattached) {
  InstanceMap gt(12, 12);
  fill_square(gt, 2, 3, 6, 1);
  const Mask nb = inner_boundary(gt);
  const InstanceMap core = connected_components(fg_of(gt), nb);
  EXPECT_EQ(max_label(core), 1);
  EXPECT_EQ(assign_boundary_pixels(core, nb, fg_of(gt)), gt);
}

TEST(Assign, MatchesAllPairsOracle) {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution on(0.25);
  for (int t = 0; t < 40; ++t) {
    const InstanceMap gt = oracle::random_instances(rng, 24, 24, 7);
    Mask np = fg_of(gt);
    Mask nb(24, 24);
    for (std::size_t i = 0; i < nb.size(); ++i) nb.data[i] = np.data[i] && on(rng);
    // Some boundary votes outside the mask must be ignored.
    nb.data[0] = 1;
    const InstanceMap core = connected_components(np, nb);
    const double r_max = t % 2 ? 3.0 : kDefaultRmax;
    EXPECT_EQ(assign_boundary_pixels(core, nb, np, r_max), oracle::assign(core, nb, np, r_max));
  }
}

TEST(Assign, FarPixelsStayBackground) {
  InstanceMap core(1, 30);
  core(0, 0) = 1;
  Mask nb(1, 30, 1);
  nb(0, 0) = 0;
  const InstanceMap out = assign_boundary_pixels(core, nb, Mask(1, 30, 1), 10.0);
  for (int c = 1; c <= 10; ++c) EXPECT_EQ(out(0, c), 1);
  for (int c = 11; c < 30; ++c) EXPECT_EQ(out(0, c), 0);
}

TEST(Classify, Examples) {
  InstanceMap inst(1, 10, 1);
  TypeMap t(1, 10, 3);
  EXPECT_EQ(classify_instances(inst, t)[1], 3);
  for (int c = 0; c < 5; ++c) t(0, c) = 4;
  for (int c = 5; c < 10; ++c) t(0, c) = 2;
  EXPECT_EQ(classify_instances(inst, t)[1], 2);
  // Class 0 votes only count when nothing else is seen.
  t = TypeMap(1, 10, 0);
  t(0, 9) = 5;
  EXPECT_EQ(classify_instances(inst, t)[1], 5);
}

TEST(Classify, UnanimousBackgroundFallsBack) {
  InstanceMap inst(2, 6);
  for (int c = 0; c < 3; ++c) inst(0, c) = 1;
  for (int c = 0; c < 3; ++c) inst(1, c) = 2;
  TypeMap t(2, 6, 0);
  for (int c = 0; c < 3; ++c) t(1, c) = 6;
  t(0, 5) = 4;
  EXPECT_EQ(classify_instances(inst, t)[1], 6);
  EXPECT_EQ(classify_instances(inst, TypeMap(2, 6, 0))[1], 1);
}

TEST(Classify, MatchesHistogramOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> cls(0, 6);
  for (int t = 0; t < 50; ++t) {
    const InstanceMap inst = oracle::random_instances(rng, 16, 16, 6);
    TypeMap types(16, 16);
    for (auto& v : types.data) v = static_cast<std::uint8_t>(cls(rng));
    EXPECT_EQ(classify_instances(inst, types), oracle::classify(inst, types));
  }
}

TEST(Segment, AllBackground) {
  Tensor np({1, 2, 16, 16});
  for (std::size_t i = 0; i < 256; ++i) np.plane(0, 0)[i] = 3.0f;
  const Segmentation s = segment(np, Tensor({1, 7, 16, 16}), Tensor({1, 4, 16, 16}));
  EXPECT_EQ(max_label(s.inst), 0);
  EXPECT_EQ(s.classes.size(), 1u);
}

TEST(Segment, TouchingSquaresStaySeparate) {
  InstanceMap gt(16, 20);
  fill_square(gt, 4, 2, 7, 1);
  fill_square(gt, 4, 9, 7, 2);
  TypeMap types(16, 20);
  for (std::size_t i = 0; i < gt.size(); ++i) types.data[i] = gt.data[i] == 1 ? 2 : gt.data[i] == 2 ? 5 : 0;
  const ExactOutputs o = exact_outputs(gt, types);
  const Segmentation s = segment(o.np, o.nt, o.bd);
  EXPECT_EQ(max_label(s.inst), 2);
  EXPECT_TRUE(oracle::same_partition(s.inst, gt));
  EXPECT_EQ(paint_classes(s.inst, s.classes), types);
  // Without voting the two squares merge.
  SegmentConfig naive;
  naive.mode = PostMode::kNaive;
  EXPECT_EQ(max_label(segment(o.np, o.nt, o.bd, naive).inst), 1);
}

TEST(Segment, ExactOutputsReproduceGroundTruth) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Sample gt = synth_sample(seed, SynthSpec{});
    const ExactOutputs o = exact_outputs(gt.inst, gt.types);
    const Segmentation s = segment(o.np, o.nt, o.bd);
    EXPECT_TRUE(oracle::same_partition(s.inst, gt.inst)) << seed;
    EXPECT_EQ(oracle::pq(gt.inst, s.inst).pq, max_label(gt.inst) ? 1.0 : 0.0) << seed;
    EXPECT_EQ(paint_classes(s.inst, s.classes), gt.types) << seed;
  }
}

TEST(Segment, Deterministic) {
  std::mt19937_64 rng(9);
  const Sample gt = synth_sample(77, SynthSpec{});
  ExactOutputs o = exact_outputs(gt.inst, gt.types);
  o.bd = noisy_bd(gt.inst, rng, 0.3);
  const Segmentation a = segment(o.np, o.nt, o.bd);
  const Segmentation b = segment(o.np, o.nt, o.bd);
  EXPECT_EQ(a.inst, b.inst);
  EXPECT_EQ(a.classes, b.classes);
}

TEST(Segment, PostModeParsing) {
  EXPECT_EQ(parse_post_mode("bvm"), PostMode::kBvm);
  EXPECT_EQ(parse_post_mode("naive"), PostMode::kNaive);
  EXPECT_THROW(parse_post_mode("watershed"), ValueError);
}
