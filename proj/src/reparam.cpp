#include "repsnet/reparam.hpp"

#include <cmath>

namespace repsnet {

namespace {

void check_branch(const ConvBranch& b, const char* what) {
  validate(b.conv);
  validate(b.bn);
  if (b.bn.channels() != b.conv.out_channels()) {
    throw ShapeError(std::string(what) + ": batchnorm channels do not match conv output channels");
  }
}

void check_branch(const DeconvBranch& b, const char* what) {
  validate(b.deconv);
  validate(b.bn);
  if (b.bn.channels() != b.deconv.out_channels()) {
    throw ShapeError(std::string(what) + ": batchnorm channels do not match deconv output channels");
  }
}

// Output extent of a transposed conv as a function of input extent is
// (H-1)*stride + (k + output_padding - 2*padding); two branches agree for every
// H iff strides and the trailing constants agree.
int deconv_extent_offset(const DeconvParams& d) { return d.kernel_size() + d.output_padding - 2 * d.padding; }

// Index inside the 3x3 kernel where a 1x1 tap of `small` lands so that both
// kernels read/write the same pixel for every grid position.
int alignment_tap(int big_padding, int small_padding) { return big_padding - small_padding; }

Tensor embed_1x1_at(const Tensor& k1, int tap) {
  const Shape& s = k1.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("embed_1x1_into_3x3: kernel is not 1x1: " + to_string(s));
  if (tap < 0 || tap > 2) throw ValueError("1x1 branch cannot be aligned inside a 3x3 kernel");
  Tensor k3({s.n, s.c, 3, 3});
  for (std::size_t a = 0; a < s.n; ++a) {
    for (std::size_t b = 0; b < s.c; ++b) k3(a, b, tap, tap) = k1(a, b, 0, 0);
  }
  return k3;
}

}  // namespace

void validate(const RepVggUnit& u) {
  check_branch(u.branch3x3, "RepVggUnit 3x3 branch");
  if (u.branch3x3.conv.kernel_size() != 3) throw ValueError("RepVggUnit main branch must be 3x3");
  if (u.branch1x1) {
    check_branch(*u.branch1x1, "RepVggUnit 1x1 branch");
    const ConvParams& c1 = u.branch1x1->conv;
    const ConvParams& c3 = u.branch3x3.conv;
    if (c1.kernel_size() != 1) throw ValueError("RepVggUnit 1x1 branch must be 1x1");
    if (c1.in_channels() != c3.in_channels() || c1.out_channels() != c3.out_channels()) {
      throw ShapeError("RepVggUnit branches disagree on channel counts");
    }
    if (c1.stride != c3.stride || alignment_tap(c3.padding, c1.padding) != 1) {
      throw ShapeError("RepVggUnit 1x1 branch is not spatially aligned with the 3x3 branch");
    }
  }
  if (u.identity) {
    validate(*u.identity);
    if (u.stride() != 1 || u.in_channels() != u.out_channels()) {
      throw ValueError("RepVggUnit identity branch requires stride 1 and in == out channels");
    }
    if (u.identity->channels() != u.out_channels()) throw ShapeError("identity batchnorm channel mismatch");
  }
}

void validate(const RepUpsampleUnit& u) {
  check_branch(u.branch3x3, "RepUpsampleUnit 3x3 branch");
  const DeconvParams& d3 = u.branch3x3.deconv;
  if (d3.kernel_size() != 3 || d3.stride != 2) throw ValueError("RepUpsampleUnit main branch must be 3x3 stride 2");
  if (deconv_extent_offset(d3) != 2) throw ValueError("RepUpsampleUnit main branch must exactly double the size");
  if (u.branch1x1) {
    check_branch(*u.branch1x1, "RepUpsampleUnit 1x1 branch");
    const DeconvParams& d1 = u.branch1x1->deconv;
    if (d1.kernel_size() != 1) throw ValueError("RepUpsampleUnit 1x1 branch must be 1x1");
    if (d1.in_channels() != d3.in_channels() || d1.out_channels() != d3.out_channels()) {
      throw ShapeError("RepUpsampleUnit branches disagree on channel counts");
    }
    if (d1.stride != d3.stride || deconv_extent_offset(d1) != deconv_extent_offset(d3)) {
      throw ShapeError("RepUpsampleUnit branch output shapes disagree");
    }
    const int tap = alignment_tap(d3.padding, d1.padding);
    if (tap < 0 || tap > 2) throw ShapeError("RepUpsampleUnit 1x1 branch is not spatially aligned");
  }
}

ConvParams fold_bn_into_conv(const ConvParams& conv, const BatchNormParams& bn) {
  validate(conv);
  validate(bn);
  if (bn.channels() != conv.out_channels()) throw ShapeError("fold_bn_into_conv: channel count mismatch");
  ConvParams out = conv;
  const Shape& s = conv.kernel.shape();
  const std::size_t per_out = s.c * s.h * s.w;
  for (std::size_t o = 0; o < s.n; ++o) {
    const double scale = static_cast<double>(bn.gamma[o]) / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
    float* k = out.kernel.data() + o * per_out;
    for (std::size_t i = 0; i < per_out; ++i) k[i] = static_cast<float>(k[i] * scale);
    out.bias[o] = static_cast<float>(bn.beta[o] + (conv.bias[o] - static_cast<double>(bn.running_mean[o])) * scale);
  }
  return out;
}

DeconvParams fold_bn_into_deconv(const DeconvParams& deconv, const BatchNormParams& bn) {
  validate(deconv);
  validate(bn);
  if (bn.channels() != deconv.out_channels()) throw ShapeError("fold_bn_into_deconv: channel count mismatch");
  DeconvParams out = deconv;
  const Shape& s = deconv.kernel.shape();
  for (std::size_t o = 0; o < s.c; ++o) {
    const double scale = static_cast<double>(bn.gamma[o]) / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
    for (std::size_t i = 0; i < s.n; ++i) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          float& v = out.kernel(i, o, y, x);
          v = static_cast<float>(v * scale);
        }
      }
    }
    out.bias[o] = static_cast<float>(bn.beta[o] + (deconv.bias[o] - static_cast<double>(bn.running_mean[o])) * scale);
  }
  return out;
}

Tensor embed_1x1_into_3x3(const Tensor& kernel1x1) { return embed_1x1_at(kernel1x1, 1); }

Tensor identity_to_3x3(std::size_t in_channels, std::size_t out_channels) {
  if (in_channels != out_channels) {
    throw ValueError("identity kernel requires in == out channels, got " + std::to_string(in_channels) + " vs " +
                     std::to_string(out_channels));
  }
  Tensor k({out_channels, in_channels, 3, 3});
  for (std::size_t c = 0; c < out_channels; ++c) k(c, c, 1, 1) = 1.0f;
  return k;
}

FusedConv fuse_repvgg(const RepVggUnit& unit) {
  validate(unit);
  FusedConv f{fold_bn_into_conv(unit.branch3x3.conv, unit.branch3x3.bn)};
  auto accumulate = [&f](const ConvParams& folded) {
    add_inplace(f.conv.kernel, folded.kernel);
    for (std::size_t o = 0; o < f.conv.bias.size(); ++o) f.conv.bias[o] += folded.bias[o];
  };
  if (unit.branch1x1) {
    ConvParams c1 = unit.branch1x1->conv;
    c1.kernel = embed_1x1_into_3x3(c1.kernel);
    c1.padding = unit.branch3x3.conv.padding;
    accumulate(fold_bn_into_conv(c1, unit.branch1x1->bn));
  }
  if (unit.identity) {
    ConvParams id;
    id.kernel = identity_to_3x3(unit.in_channels(), unit.out_channels());
    id.bias.assign(unit.out_channels(), 0.0f);
    id.stride = 1;
    id.padding = 1;
    accumulate(fold_bn_into_conv(id, *unit.identity));
  }
  return f;
}

FusedDeconv fuse_repupsample(const RepUpsampleUnit& unit) {
  validate(unit);
  FusedDeconv f{fold_bn_into_deconv(unit.branch3x3.deconv, unit.branch3x3.bn)};
  if (unit.branch1x1) {
    DeconvParams d1 = unit.branch1x1->deconv;
    const DeconvParams& d3 = unit.branch3x3.deconv;
    d1.kernel = embed_1x1_at(d1.kernel, alignment_tap(d3.padding, d1.padding));
    d1.padding = d3.padding;
    d1.output_padding = d3.output_padding;
    const DeconvParams folded = fold_bn_into_deconv(d1, unit.branch1x1->bn);
    add_inplace(f.deconv.kernel, folded.kernel);
    for (std::size_t o = 0; o < f.deconv.bias.size(); ++o) f.deconv.bias[o] += folded.bias[o];
  }
  return f;
}

Tensor branch_sum_forward(const RepVggUnit& unit, const Tensor& x) {
  validate(unit);
  Tensor s = batchnorm_forward(conv2d_forward(x, unit.branch3x3.conv), unit.branch3x3.bn);
  if (unit.branch1x1) add_inplace(s, batchnorm_forward(conv2d_forward(x, unit.branch1x1->conv), unit.branch1x1->bn));
  if (unit.identity) add_inplace(s, batchnorm_forward(x, *unit.identity));
  return s;
}

Tensor branch_sum_forward(const RepUpsampleUnit& unit, const Tensor& x) {
  validate(unit);
  Tensor s = batchnorm_forward(deconv2d_forward(x, unit.branch3x3.deconv), unit.branch3x3.bn);
  if (unit.branch1x1) {
    add_inplace(s, batchnorm_forward(deconv2d_forward(x, unit.branch1x1->deconv), unit.branch1x1->bn));
  }
  return s;
}

// Branch convolutions are bias-free; each batchnorm contributes gamma and beta.
std::size_t parameter_count(const RepVggUnit& u) {
  std::size_t n = u.branch3x3.conv.kernel.size() + 2 * u.out_channels();
  if (u.branch1x1) n += u.branch1x1->conv.kernel.size() + 2 * u.out_channels();
  if (u.identity) n += 2 * u.out_channels();
  return n;
}

std::size_t parameter_count(const RepUpsampleUnit& u) {
  std::size_t n = u.branch3x3.deconv.kernel.size() + 2 * u.out_channels();
  if (u.branch1x1) n += u.branch1x1->deconv.kernel.size() + 2 * u.out_channels();
  return n;
}

std::size_t parameter_count(const FusedConv& f) { return f.conv.kernel.size() + f.conv.bias.size(); }
std::size_t parameter_count(const FusedDeconv& f) { return f.deconv.kernel.size() + f.deconv.bias.size(); }

}  // namespace repsnet
