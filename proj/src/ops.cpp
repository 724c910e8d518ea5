#include "repsnet/ops.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "gemm.hpp"

namespace repsnet {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
  return os.str();
}

template <class T>
BasicBatchNormParams<T> make_batchnorm(std::size_t channels) {
  BasicBatchNormParams<T> p;
  p.gamma.assign(channels, T{1});
  p.beta.assign(channels, T{0});
  p.running_mean.assign(channels, T{0});
  p.running_var.assign(channels, T{1});
  return p;
}

template <class T>
void validate(const BasicConvParams<T>& p) {
  const Shape& k = p.kernel.shape();
  if (k.h != k.w || (k.h != 1 && k.h != 3)) {
    throw ValueError("conv kernel must be 1x1 or 3x3, got " + to_string(k));
  }
  if (p.bias.size() != k.n) throw ShapeError("conv bias length does not match output channels");
  if (p.stride < 1) throw ValueError("conv stride must be positive");
  if (p.padding < 0) throw ValueError("conv padding must be non-negative");
}

template <class T>
void validate(const BasicDeconvParams<T>& p) {
  const Shape& k = p.kernel.shape();
  if (k.h != k.w || k.h == 0) throw ValueError("deconv kernel must be square, got " + to_string(k));
  if (p.bias.size() != k.c) throw ShapeError("deconv bias length does not match output channels");
  if (p.stride < 1) throw ValueError("deconv stride must be positive");
  if (p.padding < 0 || p.output_padding < 0) throw ValueError("deconv padding must be non-negative");
  if (p.output_padding >= p.stride) throw ValueError("deconv output_padding must be smaller than stride");
}

template <class T>
void validate(const BasicBatchNormParams<T>& p) {
  const std::size_t c = p.gamma.size();
  if (p.beta.size() != c || p.running_mean.size() != c || p.running_var.size() != c) {
    throw ShapeError("batchnorm parameter vectors differ in length");
  }
  for (T v : p.running_var) {
    if (v < T{0}) throw ValueError("batchnorm running_var must be non-negative");
  }
  if (!(p.eps >= 0.0)) throw ValueError("batchnorm eps must be non-negative");
  if (!(p.momentum > 0.0 && p.momentum < 1.0)) throw ValueError("batchnorm momentum must lie in (0,1)");
}

Shape conv2d_output_shape(const Shape& x, std::size_t out_channels, int k, int stride, int padding) {
  const long h = static_cast<long>(x.h) + 2L * padding;
  const long w = static_cast<long>(x.w) + 2L * padding;
  if (h < k || w < k) {
    throw ShapeError("conv input " + to_string(x) + " with padding " + std::to_string(padding) +
                     " is smaller than kernel " + std::to_string(k));
  }
  return {x.n, out_channels, static_cast<std::size_t>((h - k) / stride + 1),
          static_cast<std::size_t>((w - k) / stride + 1)};
}

Shape deconv2d_output_shape(const Shape& x, std::size_t out_channels, int k, int stride, int padding,
                            int output_padding) {
  const long h = (static_cast<long>(x.h) - 1) * stride - 2L * padding + k + output_padding;
  const long w = (static_cast<long>(x.w) - 1) * stride - 2L * padding + k + output_padding;
  if (x.h == 0 || x.w == 0 || h <= 0 || w <= 0) {
    throw ShapeError("deconv configuration yields non-positive output size for input " + to_string(x));
  }
  return {x.n, out_channels, static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
}

namespace {

detail::PatchGeometry conv_geometry(const Shape& image, const Shape& grid, int k, int stride, int padding) {
  detail::PatchGeometry g;
  g.channels = static_cast<int>(image.c);
  g.height = static_cast<int>(image.h);
  g.width = static_cast<int>(image.w);
  g.k = k;
  g.stride = stride;
  g.padding = padding;
  g.grid_h = static_cast<int>(grid.h);
  g.grid_w = static_cast<int>(grid.w);
  return g;
}

// A 1x1, stride-1, unpadded patch matrix is the image itself.
bool patches_are_identity(const detail::PatchGeometry& g) {
  return g.k == 1 && g.stride == 1 && g.padding == 0 && g.grid_h == g.height && g.grid_w == g.width;
}

template <class T>
void check_conv_input(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  validate(p);
  if (x.shape().c != p.in_channels()) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " has " + std::to_string(x.shape().c) +
                     " channels, kernel expects " + std::to_string(p.in_channels()));
  }
}

template <class T>
void check_deconv_input(const BasicTensor<T>& x, const BasicDeconvParams<T>& p) {
  validate(p);
  if (x.shape().c != p.in_channels()) {
    throw ShapeError("deconv2d: input " + to_string(x.shape()) + " has " + std::to_string(x.shape().c) +
                     " channels, kernel expects " + std::to_string(p.in_channels()));
  }
}

}  // namespace

template <class T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  check_conv_input(x, p);
  const int k = p.kernel_size();
  const Shape os = conv2d_output_shape(x.shape(), p.out_channels(), k, p.stride, p.padding);
  BasicTensor<T> y(os);
  const auto g = conv_geometry(x.shape(), os, k, p.stride, p.padding);
  const int M = static_cast<int>(os.c);
  const int N = g.cols();
  const int K = g.rows();
  const bool direct = patches_are_identity(g);
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(K) * N);
  for (std::size_t n = 0; n < os.n; ++n) {
    const T* in = x.plane(n, 0);
    if (!direct) {
      detail::im2col(in, g, col.data());
      in = col.data();
    }
    T* out = y.plane(n, 0);
    for (int oc = 0; oc < M; ++oc) std::fill(out + static_cast<std::ptrdiff_t>(oc) * N, out + static_cast<std::ptrdiff_t>(oc + 1) * N, p.bias[oc]);
    detail::gemm_nn(M, N, K, p.kernel.data(), K, in, N, out, N);
  }
  return y;
}

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                             const BasicTensor<T>& grad_out) {
  check_conv_input(x, p);
  const int k = p.kernel_size();
  const Shape os = conv2d_output_shape(x.shape(), p.out_channels(), k, p.stride, p.padding);
  if (grad_out.shape() != os) {
    throw ShapeError("conv2d_backward: grad_out " + to_string(grad_out.shape()) + " expected " + to_string(os));
  }
  const auto g = conv_geometry(x.shape(), os, k, p.stride, p.padding);
  const int M = static_cast<int>(os.c);
  const int N = g.cols();
  const int K = g.rows();
  const bool direct = patches_are_identity(g);

  ConvGrads<T> r{BasicTensor<T>(x.shape()), BasicTensor<T>(p.kernel.shape()), std::vector<T>(os.c, T{0})};
  std::vector<T> kernel_t(static_cast<std::size_t>(K) * M);
  detail::transpose(M, K, p.kernel.data(), kernel_t.data());
  std::vector<T> col(static_cast<std::size_t>(K) * N);
  std::vector<T> col_t(static_cast<std::size_t>(K) * N);
  std::vector<T> grad_col(direct ? 0 : static_cast<std::size_t>(K) * N);

  for (std::size_t n = 0; n < os.n; ++n) {
    const T* dy = grad_out.plane(n, 0);
    for (int oc = 0; oc < M; ++oc) {
      double s = 0.0;
      const T* row = dy + static_cast<std::ptrdiff_t>(oc) * N;
      for (int j = 0; j < N; ++j) s += row[j];
      r.grad_bias[oc] += static_cast<T>(s);
    }
    // grad_kernel += dy (M x N) * col^T (N x K)
    const T* patches = x.plane(n, 0);
    if (!direct) {
      detail::im2col(patches, g, col.data());
      patches = col.data();
    }
    detail::transpose(K, N, patches, col_t.data());
    detail::gemm_nn(M, K, N, dy, N, col_t.data(), K, r.grad_kernel.data(), K);
    // grad_col = kernel^T (K x M) * dy (M x N)
    if (direct) {
      detail::gemm_nn(K, N, M, kernel_t.data(), M, dy, N, r.grad_x.plane(n, 0), N);
    } else {
      std::fill(grad_col.begin(), grad_col.end(), T{0});
      detail::gemm_nn(K, N, M, kernel_t.data(), M, dy, N, grad_col.data(), N);
      detail::col2im(grad_col.data(), g, r.grad_x.plane(n, 0));
    }
  }
  return r;
}

template <class T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const BasicDeconvParams<T>& p) {
  check_deconv_input(x, p);
  const int k = p.kernel_size();
  const Shape os = deconv2d_output_shape(x.shape(), p.out_channels(), k, p.stride, p.padding, p.output_padding);
  BasicTensor<T> y(os);
  // The output plays the role of the image and the input the role of the grid.
  const auto g = conv_geometry(os, x.shape(), k, p.stride, p.padding);
  const int IC = static_cast<int>(p.in_channels());
  const int R = g.rows();  // outC*k*k
  const int N = g.cols();  // input pixels
  std::vector<T> kernel_t(static_cast<std::size_t>(R) * IC);
  detail::transpose(IC, R, p.kernel.data(), kernel_t.data());
  std::vector<T> col(static_cast<std::size_t>(R) * N);
  const std::size_t out_plane = os.plane();
  for (std::size_t n = 0; n < os.n; ++n) {
    std::fill(col.begin(), col.end(), T{0});
    detail::gemm_nn(R, N, IC, kernel_t.data(), IC, x.plane(n, 0), N, col.data(), N);
    T* out = y.plane(n, 0);
    detail::col2im(col.data(), g, out);
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      T* o = out + oc * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) o[i] += p.bias[oc];
    }
  }
  return y;
}

template <class T>
ConvGrads<T> deconv2d_backward(const BasicTensor<T>& x, const BasicDeconvParams<T>& p,
                               const BasicTensor<T>& grad_out) {
  check_deconv_input(x, p);
  const int k = p.kernel_size();
  const Shape os = deconv2d_output_shape(x.shape(), p.out_channels(), k, p.stride, p.padding, p.output_padding);
  if (grad_out.shape() != os) {
    throw ShapeError("deconv2d_backward: grad_out " + to_string(grad_out.shape()) + " expected " + to_string(os));
  }
  const auto g = conv_geometry(os, x.shape(), k, p.stride, p.padding);
  const int IC = static_cast<int>(p.in_channels());
  const int R = g.rows();
  const int N = g.cols();
  ConvGrads<T> r{BasicTensor<T>(x.shape()), BasicTensor<T>(p.kernel.shape()), std::vector<T>(os.c, T{0})};
  std::vector<T> col(static_cast<std::size_t>(R) * N);
  std::vector<T> col_t(static_cast<std::size_t>(R) * N);
  const std::size_t out_plane = os.plane();
  for (std::size_t n = 0; n < os.n; ++n) {
    const T* dy = grad_out.plane(n, 0);
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      double s = 0.0;
      const T* o = dy + oc * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) s += o[i];
      r.grad_bias[oc] += static_cast<T>(s);
    }
    detail::im2col(dy, g, col.data());
    // grad_x = kernel (IC x R) * col (R x N)
    detail::gemm_nn(IC, N, R, p.kernel.data(), R, col.data(), N, r.grad_x.plane(n, 0), N);
    // grad_kernel += x (IC x N) * col^T (N x R)
    detail::transpose(R, N, col.data(), col_t.data());
    detail::gemm_nn(IC, R, N, x.plane(n, 0), N, col_t.data(), R, r.grad_kernel.data(), R);
  }
  return r;
}

namespace {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

template <class T>
ChannelStats batch_stats(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  ChannelStats st{std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  const double count = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* pl = x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) sum += pl[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* pl = x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double d = pl[i] - mean;
        sq += d * d;
      }
    }
    st.mean[c] = mean;
    st.var[c] = sq / count;
  }
  return st;
}

template <class T>
void check_bn_input(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p) {
  validate(p);
  if (x.shape().c != p.channels()) {
    throw ShapeError("batchnorm: input " + to_string(x.shape()) + " vs " + std::to_string(p.channels()) +
                     " parameter channels");
  }
}

template <class T>
BasicTensor<T> normalize(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p, const std::vector<double>& mean,
                         const std::vector<double>& var) {
  const Shape& s = x.shape();
  BasicTensor<T> y(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + p.eps);
    const double scale = static_cast<double>(p.gamma[c]) * inv;
    const double shift = static_cast<double>(p.beta[c]) - mean[c] * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* in = x.plane(n, c);
      T* out = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) out[i] = static_cast<T>(in[i] * scale + shift);
    }
  }
  return y;
}

}  // namespace

template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p) {
  check_bn_input(x, p);
  std::vector<double> mean(p.running_mean.begin(), p.running_mean.end());
  std::vector<double> var(p.running_var.begin(), p.running_var.end());
  return normalize(x, p, mean, var);
}

template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BasicBatchNormParams<T>& p, bool training) {
  if (!training) return batchnorm_forward(x, static_cast<const BasicBatchNormParams<T>&>(p));
  check_bn_input(x, p);
  const ChannelStats st = batch_stats(x);
  BasicTensor<T> y = normalize(x, p, st.mean, st.var);
  const double count = static_cast<double>(x.shape().n * x.shape().plane());
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  for (std::size_t c = 0; c < p.channels(); ++c) {
    p.running_mean[c] = static_cast<T>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * st.mean[c]);
    p.running_var[c] = static_cast<T>((1.0 - p.momentum) * p.running_var[c] + p.momentum * st.var[c] * unbias);
  }
  ++p.batches_tracked;
  return y;
}

template <class T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p,
                                     const BasicTensor<T>& grad_out, bool training) {
  check_bn_input(x, p);
  if (grad_out.shape() != x.shape()) throw ShapeError("batchnorm_backward: grad_out shape mismatch");
  const Shape& s = x.shape();
  ChannelStats st;
  if (training) {
    st = batch_stats(x);
  } else {
    st.mean.assign(p.running_mean.begin(), p.running_mean.end());
    st.var.assign(p.running_var.begin(), p.running_var.end());
  }
  BatchNormGrads<T> r{BasicTensor<T>(s), std::vector<T>(s.c), std::vector<T>(s.c)};
  const double count = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv = 1.0 / std::sqrt(st.var[c] + p.eps);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* in = x.plane(n, c);
      const T* g = grad_out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (in[i] - st.mean[c]) * inv;
      }
    }
    r.grad_gamma[c] = static_cast<T>(sum_gx);
    r.grad_beta[c] = static_cast<T>(sum_g);
    const double gi = static_cast<double>(p.gamma[c]) * inv;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* in = x.plane(n, c);
      const T* g = grad_out.plane(n, c);
      T* dx = r.grad_x.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (training) {
          const double xhat = (in[i] - st.mean[c]) * inv;
          dx[i] = static_cast<T>(gi * (g[i] - sum_g / count - xhat * sum_gx / count));
        } else {
          dx[i] = static_cast<T>(gi * g[i]);
        }
      }
    }
  }
  return r;
}

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <class T>
BasicTensor<T> relu_forward(BasicTensor<T>&& x) {
  for (auto& v : x.values()) v = v > T{0} ? v : T{0};
  return std::move(x);
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu_backward: shape mismatch");
  BasicTensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <class T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  BasicTensor<T> y(s);
  const std::size_t plane = s.plane();
  std::vector<double> e(s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) mx = std::max(mx, static_cast<double>(x.plane(n, c)[i]));
      double sum = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        e[c] = std::exp(static_cast<double>(x.plane(n, c)[i]) - mx);
        sum += e[c];
      }
      for (std::size_t c = 0; c < s.c; ++c) y.plane(n, c)[i] = static_cast<T>(e[c] / sum);
    }
  }
  return y;
}

template <class T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  if (acc.shape() != x.shape()) {
    throw ShapeError("add: " + to_string(acc.shape()) + " vs " + to_string(x.shape()));
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

#define REPSNET_INSTANTIATE_OPS(T)                                                                          \
  template BasicBatchNormParams<T> make_batchnorm<T>(std::size_t);                                          \
  template void validate<T>(const BasicConvParams<T>&);                                                     \
  template void validate<T>(const BasicDeconvParams<T>&);                                                   \
  template void validate<T>(const BasicBatchNormParams<T>&);                                                \
  template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const BasicConvParams<T>&);              \
  template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const BasicConvParams<T>&,                \
                                           const BasicTensor<T>&);                                          \
  template BasicTensor<T> deconv2d_forward<T>(const BasicTensor<T>&, const BasicDeconvParams<T>&);          \
  template ConvGrads<T> deconv2d_backward<T>(const BasicTensor<T>&, const BasicDeconvParams<T>&,            \
                                             const BasicTensor<T>&);                                        \
  template BasicTensor<T> batchnorm_forward<T>(const BasicTensor<T>&, BasicBatchNormParams<T>&, bool);      \
  template BasicTensor<T> batchnorm_forward<T>(const BasicTensor<T>&, const BasicBatchNormParams<T>&);      \
  template BatchNormGrads<T> batchnorm_backward<T>(const BasicTensor<T>&, const BasicBatchNormParams<T>&,   \
                                                   const BasicTensor<T>&, bool);                            \
  template BasicTensor<T> relu_forward<T>(const BasicTensor<T>&);                                           \
  template BasicTensor<T> relu_forward<T>(BasicTensor<T>&&);                                                \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> softmax_channels<T>(const BasicTensor<T>&);                                       \
  template void add_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);

REPSNET_INSTANTIATE_OPS(float)
REPSNET_INSTANTIATE_OPS(double)

#undef REPSNET_INSTANTIATE_OPS

}  // namespace repsnet
