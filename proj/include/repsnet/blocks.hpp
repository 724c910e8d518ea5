#pragma once

// Trainable wrappers around the reparam units. Each block owns its parameters,
// their gradients, and the activations cached by the last training forward.

#include <optional>
#include <string>
#include <vector>

#include "repsnet/optim.hpp"
#include "repsnet/reparam.hpp"
#include "repsnet/serialize.hpp"

namespace repsnet {

class RepVggBlock {
 public:
  explicit RepVggBlock(RepVggUnit unit);
  explicit RepVggBlock(FusedConv fused);

  bool fused() const { return fused_.has_value(); }
  const RepVggUnit& unit() const;
  const FusedConv& fused_params() const;

  /// Inference forward: running statistics, or the fused kernel.
  Tensor forward(const Tensor& x) const;
  /// Training forward: batch statistics, running-statistics update, activation cache.
  Tensor train_forward(const Tensor& x);
  /// Accumulates parameter gradients and returns the input gradient.
  Tensor backward(const Tensor& grad_out);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamView>& out);
  void save(const std::string& prefix, NamedTensors& out) const;
  void load(const std::string& prefix, const NamedTensors& in);
  void reparameterize();
  std::size_t parameter_count() const;

 private:
  struct BranchGrads {
    Tensor kernel;
    std::vector<float> gamma;
    std::vector<float> beta;
  };

  std::optional<RepVggUnit> unit_;
  std::optional<FusedConv> fused_;
  BranchGrads g3_;
  BranchGrads g1_;
  BranchGrads gid_;
  Tensor x_;
  Tensor pre3_;
  Tensor pre1_;
  Tensor sum_;
};

class RepUpsampleBlock {
 public:
  explicit RepUpsampleBlock(RepUpsampleUnit unit);
  explicit RepUpsampleBlock(FusedDeconv fused);

  bool fused() const { return fused_.has_value(); }
  const RepUpsampleUnit& unit() const;
  const FusedDeconv& fused_params() const;

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamView>& out);
  void save(const std::string& prefix, NamedTensors& out) const;
  void load(const std::string& prefix, const NamedTensors& in);
  void reparameterize();
  std::size_t parameter_count() const;

 private:
  struct BranchGrads {
    Tensor kernel;
    std::vector<float> gamma;
    std::vector<float> beta;
  };

  std::optional<RepUpsampleUnit> unit_;
  std::optional<FusedDeconv> fused_;
  BranchGrads g3_;
  BranchGrads g1_;
  Tensor x_;
  Tensor pre3_;
  Tensor pre1_;
  Tensor sum_;
};

/// Plain 1x1 convolution with bias, used for the output heads.
class HeadConv {
 public:
  HeadConv() = default;
  explicit HeadConv(ConvParams params);

  const ConvParams& params() const { return p_; }
  ConvParams& params() { return p_; }

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamView>& out);
  void save(const std::string& prefix, NamedTensors& out) const;
  void load(const std::string& prefix, const NamedTensors& in);
  std::size_t parameter_count() const { return p_.kernel.size() + p_.bias.size(); }

 private:
  ConvParams p_;
  Tensor grad_kernel_;
  std::vector<float> grad_bias_;
  Tensor x_;
};

}  // namespace repsnet
