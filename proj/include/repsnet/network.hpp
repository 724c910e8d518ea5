#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repsnet/blocks.hpp"

namespace repsnet {

/// Architecture description. Block i runs at 1/2^i of the input resolution with
/// base_width * 2^i channels; block 0 keeps full resolution, every later block
/// opens with a stride-2 unit.
struct RepSNetConfig {
  std::vector<int> units_per_block{2, 2, 3, 2};
  int base_width = 16;
  int in_channels = 3;
  int class_count = 7;
  int bd_channels = 4;
  bool multi_branch_encoder = true;   // false: plain 3x3 units
  bool multi_branch_decoder = true;   // false: plain 3x3 upsampling

  int num_blocks() const { return static_cast<int>(units_per_block.size()); }
  int width(int block) const { return base_width << block; }
  /// Input height and width must be multiples of this.
  int spatial_divisor() const { return 1 << (num_blocks() - 1); }

  void validate() const;
  std::string to_text() const;
  static RepSNetConfig from_text(const std::string& text);
  friend bool operator==(const RepSNetConfig&, const RepSNetConfig&) = default;
};

struct NetOutputs {
  Tensor np_logits;  // (N, 2, H, W)
  Tensor nt_logits;  // (N, class_count, H, W)
  Tensor bd;         // (N, bd_channels, H, W), non-negative
};

struct CostReport {
  std::size_t parameters = 0;
  double flops = 0.0;
};

class RepSNet {
 public:
  RepSNet(const RepSNetConfig& config, std::uint64_t seed);

  const RepSNetConfig& config() const { return config_; }
  bool fused() const { return fused_; }

  /// Inference forward. Throws ShapeError when H or W is not a multiple of
  /// config().spatial_divisor().
  NetOutputs forward(const Tensor& image) const;
  /// Training forward with batch statistics; caches activations for backward().
  NetOutputs train_forward(const Tensor& image);
  /// Accumulates parameter gradients from gradients w.r.t. the three outputs
  /// of the last train_forward(). `grads.bd` is taken w.r.t. the post-relu map.
  void backward(const NetOutputs& grads);
  void zero_grad();

  std::vector<ParamView> parameters();
  std::size_t parameter_count() const;

  NamedTensors state_dict() const;
  static RepSNet from_state_dict(const NamedTensors& state);

  /// Replaces every multi-branch unit with its fused equivalent. No-op when
  /// already fused.
  void reparameterize();

  // Structure access for tests and tools.
  const std::vector<std::vector<RepVggBlock>>& encoder() const { return encoder_; }
  const std::vector<RepUpsampleBlock>& decoder_a() const { return decoder_a_; }
  const std::vector<RepUpsampleBlock>& decoder_b() const { return decoder_b_; }
  std::vector<std::vector<RepVggBlock>>& encoder() { return encoder_; }
  HeadConv& np_head() { return np_head_; }
  HeadConv& nt_head() { return nt_head_; }
  HeadConv& bd_head() { return bd_head_; }

 private:
  RepSNet() = default;
  void check_input(const Tensor& image) const;

  RepSNetConfig config_;
  bool fused_ = false;
  std::vector<std::vector<RepVggBlock>> encoder_;
  // decoder_x_[i] upsamples from block i+1 to block i resolution.
  std::vector<RepUpsampleBlock> decoder_a_;
  std::vector<RepUpsampleBlock> decoder_b_;
  HeadConv np_head_;
  HeadConv nt_head_;
  HeadConv bd_head_;
  Tensor bd_pre_;
};

/// Returns a fused copy of `net`.
RepSNet reparameterize(const RepSNet& net);

/// Closed-form parameter count and inference FLOPs for an H x W input, derived
/// from the configuration alone. Multiply-accumulates count as two FLOPs; each
/// batchnorm is a per-element scale and shift, and bias adds, branch sums, skip
/// sums and relus cost one FLOP per output element.
CostReport analytic_cost(const RepSNetConfig& config, bool fused, int height, int width);

}  // namespace repsnet
