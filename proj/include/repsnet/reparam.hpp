#pragma once

// Structural re-parameterization: folding batch normalization into the
// preceding (de)convolution and collapsing parallel branches into a single
// 3x3 kernel with identical outputs.

#include <optional>

#include "repsnet/ops.hpp"

namespace repsnet {

struct ConvBranch {
  ConvParams conv;  // bias-free in training; the BN supplies the shift
  BatchNormParams bn;
};

struct DeconvBranch {
  DeconvParams deconv;
  BatchNormParams bn;
};

/// Training-time RepVGG unit: relu(bn(conv3x3(x)) + bn(conv1x1(x)) + bn(x)).
/// The 1x1 and identity branches are optional so the plain single-branch
/// variant fits the same type.
struct RepVggUnit {
  ConvBranch branch3x3;
  std::optional<ConvBranch> branch1x1;
  std::optional<BatchNormParams> identity;

  std::size_t in_channels() const { return branch3x3.conv.in_channels(); }
  std::size_t out_channels() const { return branch3x3.conv.out_channels(); }
  int stride() const { return branch3x3.conv.stride; }
};

/// Training-time upsampling unit: relu(bn(deconv3x3(x)) + bn(deconv1x1(x))),
/// both branches stride 2 with outputs exactly twice the input size.
struct RepUpsampleUnit {
  DeconvBranch branch3x3;
  std::optional<DeconvBranch> branch1x1;

  std::size_t in_channels() const { return branch3x3.deconv.in_channels(); }
  std::size_t out_channels() const { return branch3x3.deconv.out_channels(); }
};

struct FusedConv {
  ConvParams conv;
};

struct FusedDeconv {
  DeconvParams deconv;
};

/// Kaiming-style random unit with identity branch iff in == out and stride == 1.
template <class Rng>
RepVggUnit make_repvgg_unit(std::size_t in, std::size_t out, int stride, bool multi_branch, Rng& rng);
template <class Rng>
RepUpsampleUnit make_repupsample_unit(std::size_t in, std::size_t out, bool multi_branch, Rng& rng);

/// Checks the structural invariants; throws ValueError / ShapeError.
void validate(const RepVggUnit& unit);
void validate(const RepUpsampleUnit& unit);

ConvParams fold_bn_into_conv(const ConvParams& conv, const BatchNormParams& bn);
DeconvParams fold_bn_into_deconv(const DeconvParams& deconv, const BatchNormParams& bn);

/// Places every 1x1 tap at the center of a zero 3x3 slice. Works for both
/// (out,in,1,1) conv and (in,out,1,1) deconv kernels.
Tensor embed_1x1_into_3x3(const Tensor& kernel1x1);

/// (c, c, 3, 3) kernel with a 1 at the center of every diagonal slice.
Tensor identity_to_3x3(std::size_t in_channels, std::size_t out_channels);
inline Tensor identity_to_3x3(std::size_t channels) { return identity_to_3x3(channels, channels); }

FusedConv fuse_repvgg(const RepVggUnit& unit);
FusedDeconv fuse_repupsample(const RepUpsampleUnit& unit);

/// Multi-branch inference forward (running BN statistics), without the final relu.
Tensor branch_sum_forward(const RepVggUnit& unit, const Tensor& x);
Tensor branch_sum_forward(const RepUpsampleUnit& unit, const Tensor& x);

std::size_t parameter_count(const RepVggUnit& unit);
std::size_t parameter_count(const RepUpsampleUnit& unit);
std::size_t parameter_count(const FusedConv& f);
std::size_t parameter_count(const FusedDeconv& f);

}  // namespace repsnet

#include "repsnet/reparam_init.hpp"
