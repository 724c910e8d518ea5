#pragma once

#include <cmath>
#include <random>

#include "repsnet/reparam.hpp"

namespace repsnet {

namespace detail {

template <class Rng>
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(shape);
  for (auto& v : t.values()) v = static_cast<float>(dist(rng));
  return t;
}

}  // namespace detail

template <class Rng>
RepVggUnit make_repvgg_unit(std::size_t in, std::size_t out, int stride, bool multi_branch, Rng& rng) {
  RepVggUnit u;
  u.branch3x3.conv.kernel = detail::he_normal({out, in, 3, 3}, in * 9, rng);
  u.branch3x3.conv.bias.assign(out, 0.0f);
  u.branch3x3.conv.stride = stride;
  u.branch3x3.conv.padding = 1;
  u.branch3x3.bn = make_batchnorm<float>(out);
  if (multi_branch) {
    ConvBranch b;
    b.conv.kernel = detail::he_normal({out, in, 1, 1}, in, rng);
    b.conv.bias.assign(out, 0.0f);
    b.conv.stride = stride;
    b.conv.padding = 0;
    b.bn = make_batchnorm<float>(out);
    u.branch1x1 = std::move(b);
    if (in == out && stride == 1) u.identity = make_batchnorm<float>(out);
  }
  return u;
}

template <class Rng>
RepUpsampleUnit make_repupsample_unit(std::size_t in, std::size_t out, bool multi_branch, Rng& rng) {
  RepUpsampleUnit u;
  // A stride-2 transposed 3x3 kernel touches each output with ~9/4 taps per input channel.
  u.branch3x3.deconv.kernel = detail::he_normal({in, out, 3, 3}, std::max<std::size_t>(1, in * 9 / 4), rng);
  u.branch3x3.deconv.bias.assign(out, 0.0f);
  u.branch3x3.deconv.stride = 2;
  u.branch3x3.deconv.padding = 1;
  u.branch3x3.deconv.output_padding = 1;
  u.branch3x3.bn = make_batchnorm<float>(out);
  if (multi_branch) {
    DeconvBranch b;
    b.deconv.kernel = detail::he_normal({in, out, 1, 1}, in, rng);
    b.deconv.bias.assign(out, 0.0f);
    b.deconv.stride = 2;
    b.deconv.padding = 0;
    b.deconv.output_padding = 1;
    b.bn = make_batchnorm<float>(out);
    u.branch1x1 = std::move(b);
  }
  return u;
}

}  // namespace repsnet
