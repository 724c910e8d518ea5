#pragma once

// Layer kernels with hand-derived backward passes. Every op is a template
// instantiated for float (training and inference) and double (gradient checks).

#include <cstdint>
#include <vector>

#include "repsnet/tensor.hpp"

namespace repsnet {

template <class T>
struct BasicConvParams {
  BasicTensor<T> kernel;  // (outC, inC, k, k)
  std::vector<T> bias;    // outC
  int stride = 1;
  int padding = 0;

  std::size_t out_channels() const { return kernel.shape().n; }
  std::size_t in_channels() const { return kernel.shape().c; }
  int kernel_size() const { return static_cast<int>(kernel.shape().h); }
};

template <class T>
struct BasicDeconvParams {
  BasicTensor<T> kernel;  // (inC, outC, k, k)
  std::vector<T> bias;    // outC
  int stride = 1;
  int padding = 0;
  int output_padding = 0;

  std::size_t in_channels() const { return kernel.shape().n; }
  std::size_t out_channels() const { return kernel.shape().c; }
  int kernel_size() const { return static_cast<int>(kernel.shape().h); }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <class T>
struct BasicBatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double eps = kBatchNormEps;
  double momentum = kBatchNormMomentum;
  // Number of training-mode batches folded into the running statistics.
  std::int64_t batches_tracked = 0;

  std::size_t channels() const { return gamma.size(); }
};

using ConvParams = BasicConvParams<float>;
using DeconvParams = BasicDeconvParams<float>;
using BatchNormParams = BasicBatchNormParams<float>;

/// Identity BN over `channels` (gamma 1, beta 0, mean 0, var 1).
template <class T>
BasicBatchNormParams<T> make_batchnorm(std::size_t channels);

template <class T>
void validate(const BasicConvParams<T>& p);
template <class T>
void validate(const BasicDeconvParams<T>& p);
template <class T>
void validate(const BasicBatchNormParams<T>& p);

Shape conv2d_output_shape(const Shape& x, std::size_t out_channels, int k, int stride, int padding);
Shape deconv2d_output_shape(const Shape& x, std::size_t out_channels, int k, int stride, int padding,
                            int output_padding);

template <class T>
struct ConvGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_kernel;
  std::vector<T> grad_bias;
};

template <class T>
struct BatchNormGrads {
  BasicTensor<T> grad_x;
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;
};

template <class T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p);
template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                             const BasicTensor<T>& grad_out);

template <class T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const BasicDeconvParams<T>& p);
template <class T>
ConvGrads<T> deconv2d_backward(const BasicTensor<T>& x, const BasicDeconvParams<T>& p,
                               const BasicTensor<T>& grad_out);

/// Training mode normalizes with batch statistics and updates the running
/// statistics of `p` (exponential moving average, unbiased variance).
template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, BasicBatchNormParams<T>& p, bool training);
/// Inference-mode forward; never touches `p`.
template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p);
/// Gradients of the forward map used in `training` mode. Batch statistics are
/// recomputed from `x`; the running-statistics update has no gradient.
template <class T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicBatchNormParams<T>& p,
                                     const BasicTensor<T>& grad_out, bool training);

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
/// Clamps a temporary in place.
template <class T>
BasicTensor<T> relu_forward(BasicTensor<T>&& x);
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

/// Softmax across the channel axis at every (n, h, w).
template <class T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x);

template <class T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);

}  // namespace repsnet
