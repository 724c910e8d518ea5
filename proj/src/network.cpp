#include "repsnet/network.hpp"

#include <random>
#include <sstream>

#include "repsnet/config.hpp"

namespace repsnet {

void RepSNetConfig::validate() const {
  if (units_per_block.empty()) throw ValueError("network needs at least one block");
  for (int u : units_per_block) {
    if (u < 1) throw ValueError("every block needs at least one unit");
  }
  if (num_blocks() > 12) throw ValueError("too many blocks");
  if (base_width < 1 || in_channels < 1 || class_count < 2 || bd_channels != 4) {
    throw ValueError("invalid network widths (bd_channels must be 4, class_count >= 2)");
  }
}

std::string RepSNetConfig::to_text() const {
  std::ostringstream os;
  os << "units_per_block=";
  for (std::size_t i = 0; i < units_per_block.size(); ++i) os << (i ? "," : "") << units_per_block[i];
  os << "\nbase_width=" << base_width << "\nin_channels=" << in_channels << "\nclass_count=" << class_count
     << "\nbd_channels=" << bd_channels << "\nmulti_branch_encoder=" << (multi_branch_encoder ? 1 : 0)
     << "\nmulti_branch_decoder=" << (multi_branch_decoder ? 1 : 0) << '\n';
  return os.str();
}

RepSNetConfig RepSNetConfig::from_text(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  RepSNetConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "units_per_block") {
      c.units_per_block = parse_int_list(value);
    } else if (key == "base_width") {
      c.base_width = parse_int(value, key);
    } else if (key == "in_channels") {
      c.in_channels = parse_int(value, key);
    } else if (key == "class_count") {
      c.class_count = parse_int(value, key);
    } else if (key == "bd_channels") {
      c.bd_channels = parse_int(value, key);
    } else if (key == "multi_branch_encoder") {
      c.multi_branch_encoder = parse_bool(value, key);
    } else if (key == "multi_branch_decoder") {
      c.multi_branch_decoder = parse_bool(value, key);
    } else {
      throw ValueError("unknown network config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

namespace {

ConvParams make_head(std::size_t in, std::size_t out, float bias, std::mt19937_64& rng) {
  ConvParams p;
  std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
  p.kernel = Tensor({out, in, 1, 1});
  for (auto& v : p.kernel.values()) v = static_cast<float>(dist(rng));
  p.bias.assign(out, bias);
  return p;
}

}  // namespace

RepSNet::RepSNet(const RepSNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int n = config_.num_blocks();
  int in = config_.in_channels;
  for (int b = 0; b < n; ++b) {
    std::vector<RepVggBlock> block;
    const int out = config_.width(b);
    for (int u = 0; u < config_.units_per_block[b]; ++u) {
      const int stride = (u == 0 && b > 0) ? 2 : 1;
      block.emplace_back(make_repvgg_unit(static_cast<std::size_t>(in), static_cast<std::size_t>(out), stride,
                                          config_.multi_branch_encoder, rng));
      in = out;
    }
    encoder_.push_back(std::move(block));
  }
  for (auto* dec : {&decoder_a_, &decoder_b_}) {
    for (int i = 0; i + 1 < n; ++i) {
      dec->emplace_back(make_repupsample_unit(static_cast<std::size_t>(config_.width(i + 1)),
                                              static_cast<std::size_t>(config_.width(i)),
                                              config_.multi_branch_decoder, rng));
    }
  }
  const auto w0 = static_cast<std::size_t>(config_.base_width);
  np_head_ = HeadConv(make_head(w0, 2, 0.0f, rng));
  nt_head_ = HeadConv(make_head(w0, static_cast<std::size_t>(config_.class_count), 0.0f, rng));
  // A positive initial bias keeps the distance head out of the dead relu region.
  bd_head_ = HeadConv(make_head(w0, static_cast<std::size_t>(config_.bd_channels), 1.0f, rng));
}

void RepSNet::check_input(const Tensor& image) const {
  const Shape& s = image.shape();
  if (s.c != static_cast<std::size_t>(config_.in_channels)) {
    throw ShapeError("network expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     to_string(s));
  }
  const auto d = static_cast<std::size_t>(config_.spatial_divisor());
  if (s.h == 0 || s.w == 0 || s.h % d != 0 || s.w % d != 0) {
    const std::size_t ph = (d - s.h % d) % d;
    const std::size_t pw = (d - s.w % d) % d;
    throw ShapeError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is not divisible by " +
                     std::to_string(d) + "; pad the image by " + std::to_string(ph) + " rows and " +
                     std::to_string(pw) + " columns (to " + std::to_string(s.h + ph) + "x" +
                     std::to_string(s.w + pw) + ")");
  }
}

NetOutputs RepSNet::forward(const Tensor& image) const {
  check_input(image);
  const int n = config_.num_blocks();
  std::vector<Tensor> feats(static_cast<std::size_t>(n));
  Tensor h = image;
  for (int b = 0; b < n; ++b) {
    for (const auto& unit : encoder_[b]) h = unit.forward(h);
    feats[b] = h;
  }
  auto decode = [&](const std::vector<RepUpsampleBlock>& dec) {
    Tensor d = feats[n - 1];
    for (int i = n - 2; i >= 0; --i) {
      d = dec[i].forward(d);
      add_inplace(d, feats[i]);
    }
    return d;
  };
  const Tensor da = decode(decoder_a_);
  const Tensor db = decode(decoder_b_);
  return {np_head_.forward(da), nt_head_.forward(da), relu_forward(bd_head_.forward(db))};
}

NetOutputs RepSNet::train_forward(const Tensor& image) {
  if (fused_) throw ValueError("a fused network cannot be trained");
  check_input(image);
  const int n = config_.num_blocks();
  std::vector<Tensor> feats(static_cast<std::size_t>(n));
  Tensor h = image;
  for (int b = 0; b < n; ++b) {
    for (auto& unit : encoder_[b]) h = unit.train_forward(h);
    feats[b] = h;
  }
  auto decode = [&](std::vector<RepUpsampleBlock>& dec) {
    Tensor d = feats[n - 1];
    for (int i = n - 2; i >= 0; --i) {
      d = dec[i].train_forward(d);
      add_inplace(d, feats[i]);
    }
    return d;
  };
  const Tensor da = decode(decoder_a_);
  const Tensor db = decode(decoder_b_);
  bd_pre_ = bd_head_.train_forward(db);
  return {np_head_.train_forward(da), nt_head_.train_forward(da), relu_forward(bd_pre_)};
}

void RepSNet::backward(const NetOutputs& grads) {
  if (fused_) throw ValueError("a fused network cannot be trained");
  const int n = config_.num_blocks();
  Tensor ga = np_head_.backward(grads.np_logits);
  add_inplace(ga, nt_head_.backward(grads.nt_logits));
  Tensor gb = bd_head_.backward(relu_backward(bd_pre_, grads.bd));

  std::vector<Tensor> gfeat(static_cast<std::size_t>(n));
  auto decode_back = [&](std::vector<RepUpsampleBlock>& dec, Tensor g) {
    for (int i = 0; i + 1 < n; ++i) {
      if (gfeat[i].empty()) {
        gfeat[i] = g;
      } else {
        add_inplace(gfeat[i], g);
      }
      g = dec[i].backward(g);
    }
    if (gfeat[n - 1].empty()) {
      gfeat[n - 1] = std::move(g);
    } else {
      add_inplace(gfeat[n - 1], g);
    }
  };
  decode_back(decoder_a_, std::move(ga));
  decode_back(decoder_b_, std::move(gb));

  Tensor g = std::move(gfeat[n - 1]);
  for (int b = n - 1; b >= 0; --b) {
    for (auto it = encoder_[b].rbegin(); it != encoder_[b].rend(); ++it) g = it->backward(g);
    if (b > 0) add_inplace(g, gfeat[b - 1]);
  }
}

void RepSNet::zero_grad() {
  for (auto& block : encoder_) {
    for (auto& u : block) u.zero_grad();
  }
  for (auto& u : decoder_a_) u.zero_grad();
  for (auto& u : decoder_b_) u.zero_grad();
  np_head_.zero_grad();
  nt_head_.zero_grad();
  bd_head_.zero_grad();
}

std::vector<ParamView> RepSNet::parameters() {
  std::vector<ParamView> out;
  for (std::size_t b = 0; b < encoder_.size(); ++b) {
    for (std::size_t u = 0; u < encoder_[b].size(); ++u) {
      encoder_[b][u].collect_params("encoder." + std::to_string(b) + "." + std::to_string(u), out);
    }
  }
  for (std::size_t i = 0; i < decoder_a_.size(); ++i) {
    decoder_a_[i].collect_params("decoder_a." + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < decoder_b_.size(); ++i) {
    decoder_b_[i].collect_params("decoder_b." + std::to_string(i), out);
  }
  np_head_.collect_params("head.np", out);
  nt_head_.collect_params("head.nt", out);
  bd_head_.collect_params("head.bd", out);
  return out;
}

std::size_t RepSNet::parameter_count() const {
  std::size_t total = np_head_.parameter_count() + nt_head_.parameter_count() + bd_head_.parameter_count();
  for (const auto& block : encoder_) {
    for (const auto& u : block) total += u.parameter_count();
  }
  for (const auto& u : decoder_a_) total += u.parameter_count();
  for (const auto& u : decoder_b_) total += u.parameter_count();
  return total;
}

NamedTensors RepSNet::state_dict() const {
  NamedTensors out;
  out.emplace_back("config", text_to_tensor(config_.to_text()));
  out.emplace_back("mode", text_to_tensor(fused_ ? "fused" : "train"));
  for (std::size_t b = 0; b < encoder_.size(); ++b) {
    for (std::size_t u = 0; u < encoder_[b].size(); ++u) {
      encoder_[b][u].save("encoder." + std::to_string(b) + "." + std::to_string(u), out);
    }
  }
  for (std::size_t i = 0; i < decoder_a_.size(); ++i) decoder_a_[i].save("decoder_a." + std::to_string(i), out);
  for (std::size_t i = 0; i < decoder_b_.size(); ++i) decoder_b_[i].save("decoder_b." + std::to_string(i), out);
  np_head_.save("head.np", out);
  nt_head_.save("head.nt", out);
  bd_head_.save("head.bd", out);
  return out;
}

RepSNet RepSNet::from_state_dict(const NamedTensors& state) {
  const RepSNetConfig cfg = RepSNetConfig::from_text(tensor_to_text(find_entry(state, "config")));
  const std::string mode = tensor_to_text(find_entry(state, "mode"));
  if (mode != "fused" && mode != "train") throw FormatError("unknown network mode '" + mode + "'");
  RepSNet net(cfg, 0);
  if (mode == "fused") {
    // Swap in zero fused skeletons of matching geometry; load() fills them.
    for (auto& block : net.encoder_) {
      for (auto& u : block) {
        const ConvParams& c3 = u.unit().branch3x3.conv;
        ConvParams f = c3;
        f.kernel.fill(0.0f);
        u = RepVggBlock(FusedConv{std::move(f)});
      }
    }
    for (auto* dec : {&net.decoder_a_, &net.decoder_b_}) {
      for (auto& u : *dec) {
        DeconvParams f = u.unit().branch3x3.deconv;
        f.kernel.fill(0.0f);
        u = RepUpsampleBlock(FusedDeconv{std::move(f)});
      }
    }
    net.fused_ = true;
  }
  for (std::size_t b = 0; b < net.encoder_.size(); ++b) {
    for (std::size_t u = 0; u < net.encoder_[b].size(); ++u) {
      net.encoder_[b][u].load("encoder." + std::to_string(b) + "." + std::to_string(u), state);
    }
  }
  for (std::size_t i = 0; i < net.decoder_a_.size(); ++i) net.decoder_a_[i].load("decoder_a." + std::to_string(i), state);
  for (std::size_t i = 0; i < net.decoder_b_.size(); ++i) net.decoder_b_[i].load("decoder_b." + std::to_string(i), state);
  net.np_head_.load("head.np", state);
  net.nt_head_.load("head.nt", state);
  net.bd_head_.load("head.bd", state);
  net.zero_grad();
  return net;
}

void RepSNet::reparameterize() {
  if (fused_) return;
  for (auto& block : encoder_) {
    for (auto& u : block) u.reparameterize();
  }
  for (auto& u : decoder_a_) u.reparameterize();
  for (auto& u : decoder_b_) u.reparameterize();
  bd_pre_ = Tensor();
  fused_ = true;
}

RepSNet reparameterize(const RepSNet& net) {
  RepSNet copy = net;
  copy.reparameterize();
  return copy;
}

CostReport analytic_cost(const RepSNetConfig& cfg, bool fused, int height, int width) {
  cfg.validate();
  CostReport r;
  auto conv_unit = [&](double in, double out, double oh, double ow, bool multi, bool identity) {
    const double elems = out * oh * ow;
    if (fused) {
      r.parameters += static_cast<std::size_t>(9 * in * out + out);
      r.flops += 2.0 * 9 * in * out * oh * ow + elems /*bias*/ + elems /*relu*/;
      return;
    }
    r.parameters += static_cast<std::size_t>(9 * in * out + 2 * out);
    r.flops += 2.0 * 9 * in * out * oh * ow + 2.0 * elems;
    if (multi) {
      r.parameters += static_cast<std::size_t>(in * out + 2 * out);
      r.flops += 2.0 * in * out * oh * ow + 2.0 * elems + elems /*sum*/;
      if (identity) {
        r.parameters += static_cast<std::size_t>(2 * out);
        r.flops += 2.0 * elems + elems;
      }
    }
    r.flops += elems;  // relu
  };
  auto up_unit = [&](double in, double out, double ih, double iw, bool multi) {
    const double elems = out * (2 * ih) * (2 * iw);
    if (fused) {
      r.parameters += static_cast<std::size_t>(9 * in * out + out);
      r.flops += 2.0 * 9 * in * out * ih * iw + elems + elems;
      return;
    }
    r.parameters += static_cast<std::size_t>(9 * in * out + 2 * out);
    r.flops += 2.0 * 9 * in * out * ih * iw + 2.0 * elems;
    if (multi) {
      r.parameters += static_cast<std::size_t>(in * out + 2 * out);
      r.flops += 2.0 * in * out * ih * iw + 2.0 * elems + elems;
    }
    r.flops += elems;
  };
  const int n = cfg.num_blocks();
  double in = cfg.in_channels;
  for (int b = 0; b < n; ++b) {
    const double out = cfg.width(b);
    const double oh = static_cast<double>(height >> b);
    const double ow = static_cast<double>(width >> b);
    for (int u = 0; u < cfg.units_per_block[b]; ++u) {
      const bool identity = cfg.multi_branch_encoder && in == out && !(u == 0 && b > 0);
      conv_unit(in, out, oh, ow, cfg.multi_branch_encoder, identity);
      in = out;
    }
  }
  for (int dec = 0; dec < 2; ++dec) {
    for (int i = n - 2; i >= 0; --i) {
      up_unit(cfg.width(i + 1), cfg.width(i), height >> (i + 1), width >> (i + 1), cfg.multi_branch_decoder);
      r.flops += static_cast<double>(cfg.width(i)) * (height >> i) * (width >> i);  // skip sum
    }
  }
  const double px = static_cast<double>(height) * width;
  const double w0 = cfg.base_width;
  for (double out : {2.0, static_cast<double>(cfg.class_count), static_cast<double>(cfg.bd_channels)}) {
    r.parameters += static_cast<std::size_t>(w0 * out + out);
    r.flops += 2.0 * w0 * out * px + out * px;
  }
  r.flops += cfg.bd_channels * px;  // bd relu
  return r;
}

}  // namespace repsnet
