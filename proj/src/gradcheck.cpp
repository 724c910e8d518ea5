#include "repsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "repsnet/losses.hpp"
#include "repsnet/ops.hpp"

namespace repsnet {

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  if (diff == 0.0) return 0.0;
  return diff / std::max(scale, 1e-12);
}

std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

namespace {

using D = BasicTensor<double>;

class Checker {
 public:
  explicit Checker(std::uint64_t seed) : rng_(seed) {}

  D random(Shape s, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    D t(s);
    for (auto& v : t.values()) v = u(rng_);
    return t;
  }
  std::vector<double> random_vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng_);
    return v;
  }
  std::mt19937_64& rng() { return rng_; }

  void compare(const std::string& name, std::span<const double> analytic, const std::vector<double>& numeric) {
    GradCheck c;
    c.name = name;
    c.error = relative_error(analytic, numeric);
    c.passed = c.error <= c.tolerance;
    results.push_back(c);
  }

  std::vector<GradCheck> results;

 private:
  std::mt19937_64 rng_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_conv(Checker& ck, const std::string& name, Shape xs, std::size_t out_c, int k, int stride, int padding) {
  D x = ck.random(xs);
  BasicConvParams<double> p;
  p.kernel = ck.random({out_c, xs.c, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  p.bias = ck.random_vec(out_c);
  p.stride = stride;
  p.padding = padding;
  const D g = ck.random(conv2d_output_shape(xs, out_c, k, stride, padding));
  const auto grads = conv2d_backward(x, p, g);
  auto f = [&] { return dot(conv2d_forward(x, p).values(), g.values()); };
  ck.compare(name + " dx", grads.grad_x.values(), numeric_gradient(f, x.values()));
  ck.compare(name + " dkernel", grads.grad_kernel.values(), numeric_gradient(f, p.kernel.values()));
  ck.compare(name + " dbias", grads.grad_bias, numeric_gradient(f, p.bias));
}

void check_deconv(Checker& ck, const std::string& name, Shape xs, std::size_t out_c, int k, int stride, int padding,
                  int output_padding) {
  D x = ck.random(xs);
  BasicDeconvParams<double> p;
  p.kernel = ck.random({xs.c, out_c, static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  p.bias = ck.random_vec(out_c);
  p.stride = stride;
  p.padding = padding;
  p.output_padding = output_padding;
  const D g = ck.random(deconv2d_output_shape(xs, out_c, k, stride, padding, output_padding));
  const auto grads = deconv2d_backward(x, p, g);
  auto f = [&] { return dot(deconv2d_forward(x, p).values(), g.values()); };
  ck.compare(name + " dx", grads.grad_x.values(), numeric_gradient(f, x.values()));
  ck.compare(name + " dkernel", grads.grad_kernel.values(), numeric_gradient(f, p.kernel.values()));
  ck.compare(name + " dbias", grads.grad_bias, numeric_gradient(f, p.bias));
}

void check_batchnorm(Checker& ck, bool training) {
  const Shape xs{2, 4, 6, 6};
  D x = ck.random(xs, -2.0, 2.0);
  auto p = make_batchnorm<double>(xs.c);
  p.gamma = ck.random_vec(xs.c, 0.5, 1.5);
  p.beta = ck.random_vec(xs.c);
  p.running_mean = ck.random_vec(xs.c, -0.5, 0.5);
  p.running_var = ck.random_vec(xs.c, 0.5, 2.0);
  const D g = ck.random(xs);
  const auto grads = batchnorm_backward(x, p, g, training);
  auto f = [&] {
    if (training) {
      auto scratch = p;  // the running-statistics update must not leak between probes
      return dot(batchnorm_forward(x, scratch, true).values(), g.values());
    }
    return dot(batchnorm_forward(x, std::as_const(p)).values(), g.values());
  };
  const std::string name = training ? "batchnorm train" : "batchnorm eval";
  ck.compare(name + " dx", grads.grad_x.values(), numeric_gradient(f, x.values()));
  ck.compare(name + " dgamma", grads.grad_gamma, numeric_gradient(f, p.gamma));
  ck.compare(name + " dbeta", grads.grad_beta, numeric_gradient(f, p.beta));
}

void check_relu(Checker& ck) {
  D x = ck.random({2, 4, 6, 6});
  // Keep every input away from the kink so the probes never cross it.
  for (auto& v : x.values()) v = v < 0 ? v - 0.05 : v + 0.05;
  const D g = ck.random(x.shape());
  auto f = [&] { return dot(relu_forward(x).values(), g.values()); };
  ck.compare("relu dx", relu_backward(x, g).values(), numeric_gradient(f, x.values()));
}

void check_softmax(Checker& ck) {
  // Closed-form Jacobian product p * (g - sum p g).
  D x = ck.random({2, 4, 6, 6}, -2.0, 2.0);
  const D g = ck.random(x.shape());
  const D p = softmax_channels(x);
  D analytic(x.shape());
  const auto& s = x.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      double pg = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) pg += p.plane(n, c)[i] * g.plane(n, c)[i];
      for (std::size_t c = 0; c < s.c; ++c) analytic.plane(n, c)[i] = p.plane(n, c)[i] * (g.plane(n, c)[i] - pg);
    }
  }
  auto f = [&] { return dot(softmax_channels(x).values(), g.values()); };
  ck.compare("softmax dx", analytic.values(), numeric_gradient(f, x.values()));
}

void check_ce_dice(Checker& ck) {
  const Shape s{2, 4, 6, 6};
  D logits = ck.random(s, -2.0, 2.0);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(s.c) - 1);
  std::vector<Grid<std::uint8_t>> targets;
  for (std::size_t n = 0; n < s.n; ++n) {
    Grid<std::uint8_t> t(6, 6);
    for (auto& v : t.data) v = static_cast<std::uint8_t>(cls(ck.rng()));
    targets.push_back(t);
  }
  const auto r = ce_plus_dice(logits, targets);
  auto f = [&] { return ce_plus_dice(logits, targets).value; };
  ck.compare("ce+dice dlogits", r.grad.values(), numeric_gradient(f, logits.values()));
}

std::vector<Mask> random_masks(Checker& ck, std::size_t n, int h, int w, double p) {
  std::bernoulli_distribution on(p);
  std::vector<Mask> out;
  for (std::size_t i = 0; i < n; ++i) {
    Mask m(h, w, 0);
    for (auto& v : m.data) v = on(ck.rng());
    m.data[0] = 1;
    out.push_back(m);
  }
  return out;
}

void check_smooth_l1(Checker& ck) {
  const Shape s{2, 4, 6, 6};
  Tensor target({2, 4, 6, 6});
  std::uniform_real_distribution<float> u(0.0f, 5.0f);
  for (auto& v : target.values()) v = u(ck.rng());
  // Residuals in [-3, 3] but never within 0.05 of the +-1 seam.
  D pred(s);
  std::uniform_real_distribution<double> r(-3.0, 3.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = r(ck.rng());
    if (std::abs(std::abs(d) - 1.0) < 0.05) d += d > 0 ? 0.1 : -0.1;
    pred[i] = target[i] + d;
  }
  const auto fg = random_masks(ck, s.n, 6, 6, 0.6);
  const auto res = smooth_l1(pred, target, fg);
  auto f = [&] { return smooth_l1(pred, target, fg).value; };
  ck.compare("smooth_l1 dpred", res.grad.values(), numeric_gradient(f, pred.values()));
}

// L_nb is piecewise constant in the distances, so a probe of 1e-4 at a stable
// point sees no change. Two checks: the loss is indeed flat under the probe,
// and the straight-through gradient equals the change of the loss when one
// distance moves by exactly one pixel either way (a central difference of
// psi at the landing pixel, evaluated through the loss value alone).
void check_nb(Checker& ck) {
  const int H = 6;
  const int W = 6;
  const Shape s{2, 4, H, W};
  std::uniform_int_distribution<int> level(0, 3);
  std::vector<IsoheightMap> psi;
  for (std::size_t n = 0; n < s.n; ++n) {
    IsoheightMap m(H, W);
    for (auto& v : m.data) v = static_cast<std::uint8_t>(level(ck.rng()));
    psi.push_back(m);
  }
  const auto fg = random_masks(ck, s.n, H, W, 0.6);
  IsoheightConfig cfg;
  cfg.tau = 3;

  // Rays land inside the image; fractional parts in [0.1, 0.4] keep the
  // rounding away from its seam.
  D bd(s);
  std::uniform_real_distribution<double> frac(0.1, 0.4);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (int row = 0; row < H; ++row) {
      for (int col = 0; col < W; ++col) {
        const int room[4] = {col, W - 1 - col, row, H - 1 - row};
        for (int ch = 0; ch < 4; ++ch) {
          std::uniform_int_distribution<int> whole(0, room[ch]);
          bd(n, ch, row, col) = whole(ck.rng()) + frac(ck.rng());
        }
      }
    }
  }
  const auto res = nb_loss(bd, fg, psi, cfg);
  auto f = [&] { return nb_loss(bd, fg, psi, cfg).value; };

  const std::vector<double> zero(bd.size(), 0.0);
  ck.compare("nb_loss flat under probe", numeric_gradient(f, bd.values()), zero);

  // Only distances of foreground pixels whose +-1 shift stays in the image.
  std::vector<double> analytic;
  std::vector<double> unit_step;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (int row = 0; row < H; ++row) {
      for (int col = 0; col < W; ++col) {
        if (!fg[n](row, col)) continue;
        const int room[4] = {col, W - 1 - col, row, H - 1 - row};
        for (int ch = 0; ch < 4; ++ch) {
          double& d = bd(n, ch, row, col);
          const int landing = static_cast<int>(std::lround(d));
          if (landing + 1 > room[ch] || landing - 1 < 0) continue;
          const double keep = d;
          d = keep + 1.0;
          const double up = f();
          d = keep - 1.0;
          const double down = f();
          d = keep;
          analytic.push_back(res.grad(n, ch, row, col));
          unit_step.push_back((up - down) / 2.0);
        }
      }
    }
  }
  ck.compare("nb_loss straight-through", analytic, unit_step);
}

}  // namespace

std::vector<GradCheck> run_gradient_checks(std::uint64_t seed) {
  Checker ck(seed);
  check_conv(ck, "conv3x3 s1", {2, 4, 6, 6}, 3, 3, 1, 1);
  check_conv(ck, "conv3x3 s2", {2, 4, 6, 6}, 3, 3, 2, 1);
  check_conv(ck, "conv1x1 s1", {2, 4, 6, 6}, 3, 1, 1, 0);
  check_conv(ck, "conv1x1 s2", {2, 4, 6, 6}, 3, 1, 2, 0);
  check_deconv(ck, "deconv3x3 s2", {2, 4, 3, 3}, 3, 3, 2, 1, 1);
  check_deconv(ck, "deconv1x1 s2", {2, 4, 3, 3}, 3, 1, 2, 0, 1);
  check_deconv(ck, "deconv3x3 s1", {2, 4, 6, 6}, 3, 3, 1, 1, 0);
  check_batchnorm(ck, true);
  check_batchnorm(ck, false);
  check_relu(ck);
  check_softmax(ck);
  check_ce_dice(ck);
  check_smooth_l1(ck);
  check_nb(ck);
  return ck.results;
}

}  // namespace repsnet
