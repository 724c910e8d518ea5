#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repsnet/reparam.hpp"

using namespace repsnet;

namespace {

Tensor uniform(Shape s, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

void randomize(BatchNormParams& bn, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> g(0.5f, 1.5f), b(-0.5f, 0.5f), m(-0.3f, 0.3f), v(0.5f, 2.0f);
  for (std::size_t c = 0; c < bn.channels(); ++c) {
    bn.gamma[c] = g(rng);
    bn.beta[c] = b(rng);
    bn.running_mean[c] = m(rng);
    bn.running_var[c] = v(rng);
  }
  bn.batches_tracked = 1;
}

RepVggUnit random_repvgg(std::size_t in, std::size_t out, int stride, std::mt19937_64& rng) {
  RepVggUnit u = make_repvgg_unit(in, out, stride, true, rng);
  randomize(u.branch3x3.bn, rng);
  randomize(u.branch1x1->bn, rng);
  if (u.identity) randomize(*u.identity, rng);
  return u;
}

RepUpsampleUnit random_repupsample(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  RepUpsampleUnit u = make_repupsample_unit(in, out, true, rng);
  randomize(u.branch3x3.bn, rng);
  randomize(u.branch1x1->bn, rng);
  return u;
}

Tensor sequential(const ConvParams& conv, const BatchNormParams& bn, const Tensor& x) {
  return batchnorm_forward(conv2d_forward(x, conv), bn);
}

}  // namespace

TEST(FoldBn, IdentityBnLeavesConvUnchanged) {
  std::mt19937_64 rng(1);
  ConvParams c;
  c.kernel = uniform({3, 2, 3, 3}, rng);
  c.bias = {0.1f, 0.2f, -0.3f};
  c.padding = 1;
  auto bn = make_batchnorm<float>(3);
  bn.eps = 0.0;
  const ConvParams f = fold_bn_into_conv(c, bn);
  EXPECT_EQ(f.kernel, c.kernel);
  EXPECT_EQ(f.bias, c.bias);
}

TEST(FoldBn, AffineScaling) {
  std::mt19937_64 rng(2);
  ConvParams c;
  c.kernel = uniform({2, 2, 3, 3}, rng);
  c.bias = {0.0f, 0.0f};
  c.padding = 1;
  auto bn = make_batchnorm<float>(2);
  bn.eps = 0.0;
  bn.gamma = {2.0f, 2.0f};
  bn.beta = {3.0f, 3.0f};
  const ConvParams f = fold_bn_into_conv(c, bn);
  for (std::size_t i = 0; i < c.kernel.size(); ++i) EXPECT_EQ(f.kernel[i], 2.0f * c.kernel[i]);
  EXPECT_EQ(f.bias, (std::vector<float>{3.0f, 3.0f}));
}

TEST(FoldBn, MatchesSequentialEvaluation) {
  std::mt19937_64 rng(3);
  ConvParams c;
  c.kernel = uniform({4, 3, 3, 3}, rng);
  c.bias = {0.1f, -0.1f, 0.2f, 0.0f};
  c.padding = 1;
  auto bn = make_batchnorm<float>(4);
  randomize(bn, rng);
  const ConvParams f = fold_bn_into_conv(c, bn);
  for (int t = 0; t < 50; ++t) {
    const Tensor x = uniform({1, 3, 8, 8}, rng);
    EXPECT_LE(max_abs_diff(conv2d_forward(x, f), sequential(c, bn, x)), 1e-4);
  }
}

TEST(FoldBn, RejectsChannelMismatch) {
  ConvParams c;
  c.kernel = Tensor({3, 2, 3, 3});
  c.bias.assign(3, 0.0f);
  EXPECT_THROW(fold_bn_into_conv(c, make_batchnorm<float>(2)), ShapeError);
}

TEST(Embed1x1, ScalarGoesToCenter) {
  const Tensor k = embed_1x1_into_3x3(Tensor({1, 1, 1, 1}, 0.7f));
  ASSERT_EQ(k.shape(), (Shape{1, 1, 3, 3}));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(k(0, 0, r, c), (r == 1 && c == 1) ? 0.7f : 0.0f);
}

TEST(Embed1x1, ZeroStaysZero) {
  const Tensor k = embed_1x1_into_3x3(Tensor({2, 3, 1, 1}));
  EXPECT_EQ(k, Tensor({2, 3, 3, 3}));
}

TEST(Embed1x1, PaddedConvEqualsOneByOne) {
  std::mt19937_64 rng(4);
  for (int stride : {1, 2}) {
    ConvParams one;
    one.kernel = uniform({4, 3, 1, 1}, rng);
    one.bias = {0.5f, 0.0f, -0.5f, 1.0f};
    one.stride = stride;
    ConvParams three = one;
    three.kernel = embed_1x1_into_3x3(one.kernel);
    three.padding = 1;
    const Tensor x = uniform({2, 3, 8, 8}, rng);
    EXPECT_LE(max_abs_diff(conv2d_forward(x, three), conv2d_forward(x, one)), 1e-5);
  }
}

TEST(IdentityKernel, SingleChannel) {
  const Tensor k = identity_to_3x3(1);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(k(0, 0, r, c), (r == 1 && c == 1) ? 1.0f : 0.0f);
}

TEST(IdentityKernel, ThreeChannelsHaveThreeDiagonalTaps) {
  const Tensor k = identity_to_3x3(3);
  int nonzero = 0;
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          if (k(o, i, r, c) != 0.0f) {
            ++nonzero;
            EXPECT_EQ(o, i);
            EXPECT_EQ(k(o, i, r, c), 1.0f);
          }
        }
  EXPECT_EQ(nonzero, 3);
}

TEST(IdentityKernel, ConvolutionIsIdentity) {
  std::mt19937_64 rng(5);
  ConvParams p;
  p.kernel = identity_to_3x3(5);
  p.bias.assign(5, 0.0f);
  p.padding = 1;
  const Tensor x = uniform({2, 5, 6, 7}, rng);
  EXPECT_LE(max_abs_diff(conv2d_forward(x, p), x), 1e-6);
}

TEST(IdentityKernel, RejectsUnequalChannels) { EXPECT_THROW(identity_to_3x3(3, 4), ValueError); }

TEST(FuseRepVgg, ZeroedSideBranchesLeaveFolded3x3) {
  std::mt19937_64 rng(6);
  RepVggUnit u = random_repvgg(4, 4, 1, rng);
  std::fill(u.branch1x1->bn.gamma.begin(), u.branch1x1->bn.gamma.end(), 0.0f);
  std::fill(u.branch1x1->bn.beta.begin(), u.branch1x1->bn.beta.end(), 0.0f);
  std::fill(u.identity->gamma.begin(), u.identity->gamma.end(), 0.0f);
  std::fill(u.identity->beta.begin(), u.identity->beta.end(), 0.0f);
  const FusedConv f = fuse_repvgg(u);
  const ConvParams alone = fold_bn_into_conv(u.branch3x3.conv, u.branch3x3.bn);
  EXPECT_LE(max_abs_diff(f.conv.kernel, alone.kernel), 1e-7);
  for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(f.conv.bias[o], alone.bias[o], 1e-6);
}

TEST(FuseRepVgg, AllZeroUnitGivesConstantBias) {
  std::mt19937_64 rng(7);
  RepVggUnit u = random_repvgg(3, 3, 1, rng);
  u.branch3x3.conv.kernel.fill(0.0f);
  u.branch1x1->conv.kernel.fill(0.0f);
  std::fill(u.identity->gamma.begin(), u.identity->gamma.end(), 0.0f);
  const FusedConv f = fuse_repvgg(u);
  const Tensor y = conv2d_forward(uniform({1, 3, 8, 8}, rng), f.conv);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(y.plane(0, c)[i], f.conv.bias[c]);
}

TEST(FuseRepVgg, HundredRandomUnitsAreEquivalent) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> ch(1, 16), st(1, 2);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t in = ch(rng);
    const std::size_t out = t % 3 == 0 ? in : static_cast<std::size_t>(ch(rng));
    const int stride = t % 3 == 0 ? 1 : st(rng);
    const RepVggUnit u = random_repvgg(in, out, stride, rng);
    const FusedConv f = fuse_repvgg(u);
    const Tensor x = uniform({1, in, 8, 8}, rng);
    worst = std::max(worst, max_abs_diff(relu_forward(conv2d_forward(x, f.conv)), relu_forward(branch_sum_forward(u, x))));
    EXPECT_LT(parameter_count(f), parameter_count(u));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(FuseRepVgg, RejectsIdentityWithStride) {
  std::mt19937_64 rng(9);
  RepVggUnit u = random_repvgg(4, 4, 2, rng);
  u.identity = make_batchnorm<float>(4);
  EXPECT_ANY_THROW(fuse_repvgg(u));
}

TEST(FuseRepVgg, FoldThenSumEqualsSumOfFolded) {
  std::mt19937_64 rng(10);
  const RepVggUnit u = random_repvgg(5, 5, 1, rng);
  Tensor k = fold_bn_into_conv(u.branch3x3.conv, u.branch3x3.bn).kernel;
  ConvParams c1 = u.branch1x1->conv;
  c1.kernel = embed_1x1_into_3x3(c1.kernel);
  c1.padding = 1;
  add_inplace(k, fold_bn_into_conv(c1, u.branch1x1->bn).kernel);
  ConvParams id;
  id.kernel = identity_to_3x3(5);
  id.bias.assign(5, 0.0f);
  id.padding = 1;
  add_inplace(k, fold_bn_into_conv(id, *u.identity).kernel);
  EXPECT_EQ(fuse_repvgg(u).conv.kernel, k);
}

TEST(FuseRepUpsample, ZeroedOneByOneLeavesFolded3x3) {
  std::mt19937_64 rng(11);
  RepUpsampleUnit u = random_repupsample(4, 3, rng);
  std::fill(u.branch1x1->bn.gamma.begin(), u.branch1x1->bn.gamma.end(), 0.0f);
  std::fill(u.branch1x1->bn.beta.begin(), u.branch1x1->bn.beta.end(), 0.0f);
  const FusedDeconv f = fuse_repupsample(u);
  const DeconvParams alone = fold_bn_into_deconv(u.branch3x3.deconv, u.branch3x3.bn);
  EXPECT_LE(max_abs_diff(f.deconv.kernel, alone.kernel), 1e-7);
  for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(f.deconv.bias[o], alone.bias[o], 1e-6);
}

TEST(FuseRepUpsample, ZeroWeightsGiveConstantBias) {
  std::mt19937_64 rng(12);
  RepUpsampleUnit u = random_repupsample(2, 3, rng);
  u.branch3x3.deconv.kernel.fill(0.0f);
  u.branch1x1->deconv.kernel.fill(0.0f);
  const FusedDeconv f = fuse_repupsample(u);
  const Tensor y = deconv2d_forward(uniform({1, 2, 4, 4}, rng), f.deconv);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 8, 8}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(y.plane(0, c)[i], f.deconv.bias[c]);
}

TEST(FuseRepUpsample, HundredRandomUnitsAreEquivalent) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> ch(1, 16);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const RepUpsampleUnit u = random_repupsample(ch(rng), ch(rng), rng);
    const FusedDeconv f = fuse_repupsample(u);
    const Tensor x = uniform({1, u.in_channels(), 8, 8}, rng);
    const Tensor fused = relu_forward(deconv2d_forward(x, f.deconv));
    ASSERT_EQ(fused.shape(), (Shape{1, u.out_channels(), 16, 16}));
    worst = std::max(worst, max_abs_diff(fused, relu_forward(branch_sum_forward(u, x))));
    EXPECT_LT(parameter_count(f), parameter_count(u));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(FuseRepUpsample, BranchesEmitTheSameGrid) {
  // The one-tap branch must land on the same output pixels as the centre tap
  // of the 3x3 branch; a shifted alignment would still give a 2x output.
  std::mt19937_64 rng(14);
  RepUpsampleUnit u = random_repupsample(1, 1, rng);
  u.branch3x3.deconv.kernel.fill(0.0f);
  u.branch3x3.deconv.kernel(0, 0, 1, 1) = 1.0f;
  u.branch1x1->deconv.kernel.fill(1.0f);
  for (auto* bn : {&u.branch3x3.bn, &u.branch1x1->bn}) *bn = make_batchnorm<float>(1);
  Tensor x({1, 1, 3, 3});
  x(0, 0, 1, 2) = 1.0f;
  const Tensor y3 = deconv2d_forward(x, u.branch3x3.deconv);
  const Tensor y1 = deconv2d_forward(x, u.branch1x1->deconv);
  EXPECT_EQ(y3, y1);
}

TEST(ParameterCount, FusedIsSmaller) {
  std::mt19937_64 rng(15);
  const RepVggUnit u = random_repvgg(8, 8, 1, rng);
  // Learnable weights only: running statistics are buffers.
  EXPECT_EQ(parameter_count(u), 8u * 8 * 9 + 8 * 8 + 3 * 2 * 8);
  EXPECT_EQ(parameter_count(fuse_repvgg(u)), 8u * 8 * 9 + 8);
}
