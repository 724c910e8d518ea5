#include "repsnet/losses.hpp"

#include <cmath>

namespace repsnet {

void IsoheightConfig::validate() const {
  if (tau < 1) throw ValueError("tau must be at least 1");
  if (!(e > 0.0)) throw ValueError("isoheight smoothing e must be positive");
}

namespace {

template <class T>
void check_label_batch(const BasicTensor<T>& x, const std::vector<Grid<std::uint8_t>>& maps, const char* what) {
  const auto& s = x.shape();
  if (maps.size() != s.n) throw ShapeError(std::string(what) + ": batch size mismatch");
  for (const auto& m : maps) {
    if (static_cast<std::size_t>(m.height) != s.h || static_cast<std::size_t>(m.width) != s.w) {
      throw ShapeError(std::string(what) + ": target map is " + std::to_string(m.height) + "x" +
                       std::to_string(m.width) + ", output is " + to_string(s));
    }
  }
}

}  // namespace

template <class T>
CeDiceResult<T> ce_plus_dice(const BasicTensor<T>& logits, const std::vector<Grid<std::uint8_t>>& targets) {
  check_label_batch(logits, targets, "ce_plus_dice");
  const auto& s = logits.shape();
  const std::size_t C = s.c;
  const std::size_t P = s.plane();
  for (const auto& t : targets) {
    for (auto v : t.data) {
      if (v >= C) throw ValueError("target class " + std::to_string(v) + " out of range for " + std::to_string(C) + " classes");
    }
  }
  const BasicTensor<T> prob = softmax_channels(logits);
  const double pixels = static_cast<double>(s.n * P);

  double ce = 0.0;
  std::vector<double> inter(C, 0.0), psum(C, 0.0), ysum(C, 0.0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < P; ++i) {
      const std::size_t y = targets[n].data[i];
      // log-softmax from the logits keeps CE finite when a probability underflows.
      double mx = logits.plane(n, 0)[i];
      for (std::size_t c = 1; c < C; ++c) mx = std::max<double>(mx, logits.plane(n, c)[i]);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(logits.plane(n, c)[i]) - mx);
      ce -= static_cast<double>(logits.plane(n, y)[i]) - mx - std::log(z);
      for (std::size_t c = 0; c < C; ++c) psum[c] += prob.plane(n, c)[i];
      inter[y] += prob.plane(n, y)[i];
      ysum[y] += 1.0;
    }
  }
  ce /= pixels;
  double mean_dice = 0.0;
  std::vector<double> denom(C), numer(C);
  for (std::size_t c = 0; c < C; ++c) {
    numer[c] = 2.0 * inter[c] + kDiceSmooth;
    denom[c] = psum[c] + ysum[c] + kDiceSmooth;
    mean_dice += numer[c] / denom[c];
  }
  mean_dice /= static_cast<double>(C);

  CeDiceResult<T> r;
  r.ce = ce;
  r.dice = 1.0 - mean_dice;
  r.value = r.ce + r.dice;
  r.grad = BasicTensor<T>(s);
  std::vector<double> g(C);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < P; ++i) {
      const std::size_t y = targets[n].data[i];
      // d(dice loss)/d p_c, then through the softmax Jacobian.
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double yc = c == y ? 1.0 : 0.0;
        g[c] = -(2.0 * yc * denom[c] - numer[c]) / (denom[c] * denom[c]) / static_cast<double>(C);
        dot += prob.plane(n, c)[i] * g[c];
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double p = prob.plane(n, c)[i];
        const double yc = c == y ? 1.0 : 0.0;
        r.grad.plane(n, c)[i] = static_cast<T>((p - yc) / pixels + p * (g[c] - dot));
      }
    }
  }
  return r;
}

template <class T>
LossGrad<T> smooth_l1(const BasicTensor<T>& pred, const Tensor& target, const std::vector<Mask>& fg) {
  const auto& s = pred.shape();
  if (target.shape() != s) throw ShapeError("smooth_l1: prediction " + to_string(s) + " vs target " + to_string(target.shape()));
  check_label_batch(pred, fg, "smooth_l1");
  LossGrad<T> r;
  r.grad = BasicTensor<T>(s);
  std::size_t count = 0;
  for (const auto& m : fg) {
    for (auto v : m.data) count += v != 0;
  }
  if (count == 0) return r;
  const double norm = static_cast<double>(count * s.c);
  double sum = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      if (!fg[n].data[i]) continue;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double d = static_cast<double>(pred.plane(n, c)[i]) - target.plane(n, c)[i];
        const double a = std::abs(d);
        sum += a < 1.0 ? 0.5 * d * d : a - 0.5;
        r.grad.plane(n, c)[i] = static_cast<T>((a < 1.0 ? d : (d > 0 ? 1.0 : -1.0)) / norm);
      }
    }
  }
  r.value = sum / norm;
  return r;
}

int ray_endpoint(int origin, double distance, int sign, int extent) {
  const long p = origin + sign * std::lround(distance);
  return static_cast<int>(std::clamp<long>(p, 0, extent - 1));
}

template <class T>
LossGrad<T> nb_loss(const BasicTensor<T>& bd_pred, const std::vector<Mask>& fg, const std::vector<IsoheightMap>& psi,
                    const IsoheightConfig& cfg) {
  cfg.validate();
  const auto& s = bd_pred.shape();
  if (s.c != 4) throw ShapeError("nb_loss: expected 4 distance channels, got " + to_string(s));
  check_label_batch(bd_pred, fg, "nb_loss");
  if (psi.size() != s.n) throw ShapeError("nb_loss: isoheight batch size mismatch");
  for (const auto& p : psi) {
    if (!p.same_dims(fg.front())) throw ShapeError("nb_loss: isoheight map size mismatch");
  }
  const int H = static_cast<int>(s.h);
  const int W = static_cast<int>(s.w);

  std::size_t rays = 0;
  for (const auto& m : fg) {
    for (auto v : m.data) rays += v ? 4 : 0;
  }
  const double denom = cfg.tau * static_cast<double>(rays) + cfg.e;

  LossGrad<T> r;
  r.grad = BasicTensor<T>(s);
  double sum = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto& ps = psi[n];
    auto at = [&](int rr, int cc) { return static_cast<double>(ps(std::clamp(rr, 0, H - 1), std::clamp(cc, 0, W - 1))); };
    for (int row = 0; row < H; ++row) {
      for (int col = 0; col < W; ++col) {
        if (!fg[n](row, col)) continue;
        const auto d = [&](int ch) { return static_cast<double>(bd_pred(n, ch, row, col)); };
        const int left = ray_endpoint(col, d(kBdLeft), -1, W);
        const int right = ray_endpoint(col, d(kBdRight), +1, W);
        const int up = ray_endpoint(row, d(kBdUp), -1, H);
        const int down = ray_endpoint(row, d(kBdDown), +1, H);
        sum += ps(row, left) + ps(row, right) + ps(up, col) + ps(down, col);
        // Position moves by -d (left/up) or +d (right/down).
        const double gl = -(at(row, left + 1) - at(row, left - 1)) / 2.0;
        const double gr = (at(row, right + 1) - at(row, right - 1)) / 2.0;
        const double gu = -(at(up + 1, col) - at(up - 1, col)) / 2.0;
        const double gd = (at(down + 1, col) - at(down - 1, col)) / 2.0;
        r.grad(n, kBdLeft, row, col) = static_cast<T>(gl / denom);
        r.grad(n, kBdRight, row, col) = static_cast<T>(gr / denom);
        r.grad(n, kBdUp, row, col) = static_cast<T>(gu / denom);
        r.grad(n, kBdDown, row, col) = static_cast<T>(gd / denom);
      }
    }
  }
  r.value = sum / denom;
  return r;
}

Targets make_targets(const std::vector<InstanceMap>& inst, const std::vector<TypeMap>& types, int tau) {
  if (inst.empty() || inst.size() != types.size()) throw ValueError("make_targets: need matching non-empty batches");
  Targets t;
  const int H = inst.front().height;
  const int W = inst.front().width;
  t.bd = Tensor({inst.size(), 4, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  for (std::size_t n = 0; n < inst.size(); ++n) {
    if (!inst[n].same_dims(inst.front()) || !inst[n].same_dims(types[n])) {
      throw ShapeError("make_targets: all maps in a batch must share one size");
    }
    t.np.push_back(foreground(inst[n]));
    t.nt.push_back(types[n]);
    const Tensor bd = bd_from_instances(inst[n]);
    std::copy(bd.values().begin(), bd.values().end(), &t.bd(n, 0, 0, 0));
    t.psi.push_back(isoheight_from_boundary(inner_boundary(inst[n]), tau));
  }
  return t;
}

LossReport total_loss(const NetOutputs& out, const Targets& t, const LossWeights& w, const IsoheightConfig& iso) {
  LossReport r;
  auto np = ce_plus_dice(out.np_logits, t.np);
  auto nt = ce_plus_dice(out.nt_logits, t.nt);
  auto bd = smooth_l1(out.bd, t.bd, t.np);
  auto nb = nb_loss(out.bd, t.np, t.psi, iso);
  r.np = np.value;
  r.nt = nt.value;
  r.bd = bd.value;
  r.nb = nb.value;
  const std::pair<const char*, double> parts[] = {{"L_np", r.np}, {"L_nt", r.nt}, {"L_bd", r.bd}, {"L_nb", r.nb}};
  for (auto [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component ") + name);
  }
  r.total = w.np * r.np + w.nt * r.nt + w.bd * r.bd + w.nb * r.nb;

  auto scaled = [](Tensor g, double s) {
    for (auto& v : g.values()) v = static_cast<float>(v * s);
    return g;
  };
  r.grads.np_logits = scaled(std::move(np.grad), w.np);
  r.grads.nt_logits = scaled(std::move(nt.grad), w.nt);
  r.grads.bd = scaled(std::move(bd.grad), w.bd);
  const Tensor nbg = scaled(std::move(nb.grad), w.nb);
  add_inplace(r.grads.bd, nbg);
  return r;
}

template CeDiceResult<float> ce_plus_dice(const Tensor&, const std::vector<Grid<std::uint8_t>>&);
template CeDiceResult<double> ce_plus_dice(const BasicTensor<double>&, const std::vector<Grid<std::uint8_t>>&);
template LossGrad<float> smooth_l1(const Tensor&, const Tensor&, const std::vector<Mask>&);
template LossGrad<double> smooth_l1(const BasicTensor<double>&, const Tensor&, const std::vector<Mask>&);
template LossGrad<float> nb_loss(const Tensor&, const std::vector<Mask>&, const std::vector<IsoheightMap>&,
                                 const IsoheightConfig&);
template LossGrad<double> nb_loss(const BasicTensor<double>&, const std::vector<Mask>&,
                                  const std::vector<IsoheightMap>&, const IsoheightConfig&);

}  // namespace repsnet
