#include "repsnet/blocks.hpp"

namespace repsnet {

namespace {

void save_vec(const std::string& name, const std::vector<float>& v, NamedTensors& out) {
  out.emplace_back(name, StoredTensor::vector(v));
}

void save_kernel(const std::string& name, const Tensor& t, NamedTensors& out) {
  out.emplace_back(name, StoredTensor::from(t));
}

void load_vec(const std::string& name, std::vector<float>& v, const NamedTensors& in) {
  const StoredTensor& t = find_entry(in, name);
  if (t.dims.size() != 1 || t.data.size() != v.size()) {
    throw FormatError("entry '" + name + "' has the wrong size");
  }
  v = t.data;
}

void load_kernel(const std::string& name, Tensor& k, const NamedTensors& in) {
  Tensor t = find_entry(in, name).to_tensor();
  if (t.shape() != k.shape()) {
    throw FormatError("entry '" + name + "' has shape " + to_string(t.shape()) + ", expected " + to_string(k.shape()));
  }
  k = std::move(t);
}

void save_bn(const std::string& prefix, const BatchNormParams& bn, NamedTensors& out) {
  save_vec(prefix + ".gamma", bn.gamma, out);
  save_vec(prefix + ".beta", bn.beta, out);
  save_vec(prefix + ".running_mean", bn.running_mean, out);
  save_vec(prefix + ".running_var", bn.running_var, out);
  out.emplace_back(prefix + ".batches_tracked",
                   StoredTensor{{1}, {static_cast<float>(bn.batches_tracked)}});
}

void load_bn(const std::string& prefix, BatchNormParams& bn, const NamedTensors& in) {
  load_vec(prefix + ".gamma", bn.gamma, in);
  load_vec(prefix + ".beta", bn.beta, in);
  load_vec(prefix + ".running_mean", bn.running_mean, in);
  load_vec(prefix + ".running_var", bn.running_var, in);
  const StoredTensor& t = find_entry(in, prefix + ".batches_tracked");
  if (t.data.size() != 1) throw FormatError("entry '" + prefix + ".batches_tracked' has the wrong size");
  bn.batches_tracked = static_cast<std::int64_t>(t.data[0]);
}

template <class Grads, class Params>
void reset(Grads& g, const Params& kernel_owner, const BatchNormParams& bn) {
  g.kernel = Tensor(kernel_owner.kernel.shape());
  g.gamma.assign(bn.channels(), 0.0f);
  g.beta.assign(bn.channels(), 0.0f);
}

void accumulate(std::vector<float>& acc, const std::vector<float>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void push(std::vector<ParamView>& out, std::string name, std::span<float> value, std::span<float> grad) {
  out.push_back({std::move(name), value, grad});
}

void require_stats(const BatchNormParams& bn, const std::string& what) {
  if (bn.batches_tracked <= 0) {
    throw ValueError(what + ": batchnorm has no running statistics; run training-mode batches before fusing");
  }
}

}  // namespace

// ---------------------------------------------------------------- RepVggBlock

RepVggBlock::RepVggBlock(RepVggUnit unit) : unit_(std::move(unit)) {
  validate(*unit_);
  zero_grad();
}

RepVggBlock::RepVggBlock(FusedConv fused) : fused_(std::move(fused)) { validate(fused_->conv); }

const RepVggUnit& RepVggBlock::unit() const {
  if (!unit_) throw ValueError("block is fused; the multi-branch unit is gone");
  return *unit_;
}

const FusedConv& RepVggBlock::fused_params() const {
  if (!fused_) throw ValueError("block is not fused");
  return *fused_;
}

Tensor RepVggBlock::forward(const Tensor& x) const {
  if (fused_) return relu_forward(conv2d_forward(x, fused_->conv));
  return relu_forward(branch_sum_forward(*unit_, x));
}

Tensor RepVggBlock::train_forward(const Tensor& x) {
  if (fused_) throw ValueError("fused blocks cannot be trained");
  RepVggUnit& u = *unit_;
  x_ = x;
  pre3_ = conv2d_forward(x, u.branch3x3.conv);
  sum_ = batchnorm_forward(pre3_, u.branch3x3.bn, true);
  if (u.branch1x1) {
    pre1_ = conv2d_forward(x, u.branch1x1->conv);
    add_inplace(sum_, batchnorm_forward(pre1_, u.branch1x1->bn, true));
  }
  if (u.identity) add_inplace(sum_, batchnorm_forward(x, *u.identity, true));
  return relu_forward(sum_);
}

Tensor RepVggBlock::backward(const Tensor& grad_out) {
  if (fused_) throw ValueError("fused blocks cannot be trained");
  if (x_.empty()) throw ValueError("backward called before train_forward");
  RepVggUnit& u = *unit_;
  const Tensor gs = relu_backward(sum_, grad_out);

  auto bn3 = batchnorm_backward(pre3_, u.branch3x3.bn, gs, true);
  accumulate(g3_.gamma, bn3.grad_gamma);
  accumulate(g3_.beta, bn3.grad_beta);
  auto c3 = conv2d_backward(x_, u.branch3x3.conv, bn3.grad_x);
  add_inplace(g3_.kernel, c3.grad_kernel);
  Tensor gx = std::move(c3.grad_x);

  if (u.branch1x1) {
    auto bn1 = batchnorm_backward(pre1_, u.branch1x1->bn, gs, true);
    accumulate(g1_.gamma, bn1.grad_gamma);
    accumulate(g1_.beta, bn1.grad_beta);
    auto c1 = conv2d_backward(x_, u.branch1x1->conv, bn1.grad_x);
    add_inplace(g1_.kernel, c1.grad_kernel);
    add_inplace(gx, c1.grad_x);
  }
  if (u.identity) {
    auto bni = batchnorm_backward(x_, *u.identity, gs, true);
    accumulate(gid_.gamma, bni.grad_gamma);
    accumulate(gid_.beta, bni.grad_beta);
    add_inplace(gx, bni.grad_x);
  }
  return gx;
}

void RepVggBlock::zero_grad() {
  if (!unit_) return;
  reset(g3_, unit_->branch3x3.conv, unit_->branch3x3.bn);
  if (unit_->branch1x1) reset(g1_, unit_->branch1x1->conv, unit_->branch1x1->bn);
  if (unit_->identity) {
    gid_.gamma.assign(unit_->identity->channels(), 0.0f);
    gid_.beta.assign(unit_->identity->channels(), 0.0f);
  }
}

void RepVggBlock::collect_params(const std::string& prefix, std::vector<ParamView>& out) {
  if (fused_) throw ValueError("fused blocks have no trainable parameters");
  RepVggUnit& u = *unit_;
  push(out, prefix + ".b3.kernel", u.branch3x3.conv.kernel.values(), g3_.kernel.values());
  push(out, prefix + ".b3.bn.gamma", u.branch3x3.bn.gamma, g3_.gamma);
  push(out, prefix + ".b3.bn.beta", u.branch3x3.bn.beta, g3_.beta);
  if (u.branch1x1) {
    push(out, prefix + ".b1.kernel", u.branch1x1->conv.kernel.values(), g1_.kernel.values());
    push(out, prefix + ".b1.bn.gamma", u.branch1x1->bn.gamma, g1_.gamma);
    push(out, prefix + ".b1.bn.beta", u.branch1x1->bn.beta, g1_.beta);
  }
  if (u.identity) {
    push(out, prefix + ".id.bn.gamma", u.identity->gamma, gid_.gamma);
    push(out, prefix + ".id.bn.beta", u.identity->beta, gid_.beta);
  }
}

void RepVggBlock::save(const std::string& prefix, NamedTensors& out) const {
  if (fused_) {
    save_kernel(prefix + ".fused.kernel", fused_->conv.kernel, out);
    save_vec(prefix + ".fused.bias", fused_->conv.bias, out);
    return;
  }
  save_kernel(prefix + ".b3.kernel", unit_->branch3x3.conv.kernel, out);
  save_bn(prefix + ".b3.bn", unit_->branch3x3.bn, out);
  if (unit_->branch1x1) {
    save_kernel(prefix + ".b1.kernel", unit_->branch1x1->conv.kernel, out);
    save_bn(prefix + ".b1.bn", unit_->branch1x1->bn, out);
  }
  if (unit_->identity) save_bn(prefix + ".id.bn", *unit_->identity, out);
}

void RepVggBlock::load(const std::string& prefix, const NamedTensors& in) {
  if (fused_) {
    load_kernel(prefix + ".fused.kernel", fused_->conv.kernel, in);
    load_vec(prefix + ".fused.bias", fused_->conv.bias, in);
    return;
  }
  load_kernel(prefix + ".b3.kernel", unit_->branch3x3.conv.kernel, in);
  load_bn(prefix + ".b3.bn", unit_->branch3x3.bn, in);
  if (unit_->branch1x1) {
    load_kernel(prefix + ".b1.kernel", unit_->branch1x1->conv.kernel, in);
    load_bn(prefix + ".b1.bn", unit_->branch1x1->bn, in);
  }
  if (unit_->identity) load_bn(prefix + ".id.bn", *unit_->identity, in);
}

void RepVggBlock::reparameterize() {
  if (fused_) return;
  require_stats(unit_->branch3x3.bn, "RepVggBlock");
  if (unit_->branch1x1) require_stats(unit_->branch1x1->bn, "RepVggBlock");
  if (unit_->identity) require_stats(*unit_->identity, "RepVggBlock");
  fused_ = fuse_repvgg(*unit_);
  unit_.reset();
  x_ = pre3_ = pre1_ = sum_ = Tensor();
}

std::size_t RepVggBlock::parameter_count() const {
  return fused_ ? repsnet::parameter_count(*fused_) : repsnet::parameter_count(*unit_);
}

// ----------------------------------------------------------- RepUpsampleBlock

RepUpsampleBlock::RepUpsampleBlock(RepUpsampleUnit unit) : unit_(std::move(unit)) {
  validate(*unit_);
  zero_grad();
}

RepUpsampleBlock::RepUpsampleBlock(FusedDeconv fused) : fused_(std::move(fused)) { validate(fused_->deconv); }

const RepUpsampleUnit& RepUpsampleBlock::unit() const {
  if (!unit_) throw ValueError("block is fused; the multi-branch unit is gone");
  return *unit_;
}

const FusedDeconv& RepUpsampleBlock::fused_params() const {
  if (!fused_) throw ValueError("block is not fused");
  return *fused_;
}

Tensor RepUpsampleBlock::forward(const Tensor& x) const {
  if (fused_) return relu_forward(deconv2d_forward(x, fused_->deconv));
  return relu_forward(branch_sum_forward(*unit_, x));
}

Tensor RepUpsampleBlock::train_forward(const Tensor& x) {
  if (fused_) throw ValueError("fused blocks cannot be trained");
  RepUpsampleUnit& u = *unit_;
  x_ = x;
  pre3_ = deconv2d_forward(x, u.branch3x3.deconv);
  sum_ = batchnorm_forward(pre3_, u.branch3x3.bn, true);
  if (u.branch1x1) {
    pre1_ = deconv2d_forward(x, u.branch1x1->deconv);
    add_inplace(sum_, batchnorm_forward(pre1_, u.branch1x1->bn, true));
  }
  return relu_forward(sum_);
}

Tensor RepUpsampleBlock::backward(const Tensor& grad_out) {
  if (fused_) throw ValueError("fused blocks cannot be trained");
  if (x_.empty()) throw ValueError("backward called before train_forward");
  RepUpsampleUnit& u = *unit_;
  const Tensor gs = relu_backward(sum_, grad_out);
  auto bn3 = batchnorm_backward(pre3_, u.branch3x3.bn, gs, true);
  accumulate(g3_.gamma, bn3.grad_gamma);
  accumulate(g3_.beta, bn3.grad_beta);
  auto d3 = deconv2d_backward(x_, u.branch3x3.deconv, bn3.grad_x);
  add_inplace(g3_.kernel, d3.grad_kernel);
  Tensor gx = std::move(d3.grad_x);
  if (u.branch1x1) {
    auto bn1 = batchnorm_backward(pre1_, u.branch1x1->bn, gs, true);
    accumulate(g1_.gamma, bn1.grad_gamma);
    accumulate(g1_.beta, bn1.grad_beta);
    auto d1 = deconv2d_backward(x_, u.branch1x1->deconv, bn1.grad_x);
    add_inplace(g1_.kernel, d1.grad_kernel);
    add_inplace(gx, d1.grad_x);
  }
  return gx;
}

void RepUpsampleBlock::zero_grad() {
  if (!unit_) return;
  reset(g3_, unit_->branch3x3.deconv, unit_->branch3x3.bn);
  if (unit_->branch1x1) reset(g1_, unit_->branch1x1->deconv, unit_->branch1x1->bn);
}

void RepUpsampleBlock::collect_params(const std::string& prefix, std::vector<ParamView>& out) {
  if (fused_) throw ValueError("fused blocks have no trainable parameters");
  RepUpsampleUnit& u = *unit_;
  push(out, prefix + ".b3.kernel", u.branch3x3.deconv.kernel.values(), g3_.kernel.values());
  push(out, prefix + ".b3.bn.gamma", u.branch3x3.bn.gamma, g3_.gamma);
  push(out, prefix + ".b3.bn.beta", u.branch3x3.bn.beta, g3_.beta);
  if (u.branch1x1) {
    push(out, prefix + ".b1.kernel", u.branch1x1->deconv.kernel.values(), g1_.kernel.values());
    push(out, prefix + ".b1.bn.gamma", u.branch1x1->bn.gamma, g1_.gamma);
    push(out, prefix + ".b1.bn.beta", u.branch1x1->bn.beta, g1_.beta);
  }
}

void RepUpsampleBlock::save(const std::string& prefix, NamedTensors& out) const {
  if (fused_) {
    save_kernel(prefix + ".fused.kernel", fused_->deconv.kernel, out);
    save_vec(prefix + ".fused.bias", fused_->deconv.bias, out);
    return;
  }
  save_kernel(prefix + ".b3.kernel", unit_->branch3x3.deconv.kernel, out);
  save_bn(prefix + ".b3.bn", unit_->branch3x3.bn, out);
  if (unit_->branch1x1) {
    save_kernel(prefix + ".b1.kernel", unit_->branch1x1->deconv.kernel, out);
    save_bn(prefix + ".b1.bn", unit_->branch1x1->bn, out);
  }
}

void RepUpsampleBlock::load(const std::string& prefix, const NamedTensors& in) {
  if (fused_) {
    load_kernel(prefix + ".fused.kernel", fused_->deconv.kernel, in);
    load_vec(prefix + ".fused.bias", fused_->deconv.bias, in);
    return;
  }
  load_kernel(prefix + ".b3.kernel", unit_->branch3x3.deconv.kernel, in);
  load_bn(prefix + ".b3.bn", unit_->branch3x3.bn, in);
  if (unit_->branch1x1) {
    load_kernel(prefix + ".b1.kernel", unit_->branch1x1->deconv.kernel, in);
    load_bn(prefix + ".b1.bn", unit_->branch1x1->bn, in);
  }
}

void RepUpsampleBlock::reparameterize() {
  if (fused_) return;
  require_stats(unit_->branch3x3.bn, "RepUpsampleBlock");
  if (unit_->branch1x1) require_stats(unit_->branch1x1->bn, "RepUpsampleBlock");
  fused_ = fuse_repupsample(*unit_);
  unit_.reset();
  x_ = pre3_ = pre1_ = sum_ = Tensor();
}

std::size_t RepUpsampleBlock::parameter_count() const {
  return fused_ ? repsnet::parameter_count(*fused_) : repsnet::parameter_count(*unit_);
}

// ------------------------------------------------------------------- HeadConv

HeadConv::HeadConv(ConvParams params) : p_(std::move(params)) {
  validate(p_);
  zero_grad();
}

Tensor HeadConv::forward(const Tensor& x) const { return conv2d_forward(x, p_); }

Tensor HeadConv::train_forward(const Tensor& x) {
  x_ = x;
  return conv2d_forward(x, p_);
}

Tensor HeadConv::backward(const Tensor& grad_out) {
  if (x_.empty()) throw ValueError("backward called before train_forward");
  auto g = conv2d_backward(x_, p_, grad_out);
  add_inplace(grad_kernel_, g.grad_kernel);
  accumulate(grad_bias_, g.grad_bias);
  return std::move(g.grad_x);
}

void HeadConv::zero_grad() {
  grad_kernel_ = Tensor(p_.kernel.shape());
  grad_bias_.assign(p_.bias.size(), 0.0f);
}

void HeadConv::collect_params(const std::string& prefix, std::vector<ParamView>& out) {
  push(out, prefix + ".kernel", p_.kernel.values(), grad_kernel_.values());
  push(out, prefix + ".bias", p_.bias, grad_bias_);
}

void HeadConv::save(const std::string& prefix, NamedTensors& out) const {
  save_kernel(prefix + ".kernel", p_.kernel, out);
  save_vec(prefix + ".bias", p_.bias, out);
}

void HeadConv::load(const std::string& prefix, const NamedTensors& in) {
  load_kernel(prefix + ".kernel", p_.kernel, in);
  load_vec(prefix + ".bias", p_.bias, in);
}

}  // namespace repsnet
