#pragma once

#include <cstddef>
#include <vector>

#include "rgc/nn/tensor.hpp"

namespace rgc::nn {

// Forward and backward kernels for every layer family. Backward functions take
// the forward inputs (or caches) explicitly and return input gradients plus any
// parameter gradients.

enum class Padding { Same, Valid };

/// out_ch × in_ch × kh × kw weights (row-major), one bias per output channel.
struct ConvKernel {
  int out_ch = 0;
  int in_ch = 0;
  int kh = 1;
  int kw = 1;
  int dilation = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  static ConvKernel zeros(int out_ch, int in_ch, int kh, int kw, int dilation);
  double& w(int o, int i, int a, int b) {
    return weights[((static_cast<std::size_t>(o) * in_ch + i) * kh + a) * kw + b];
  }
  double w(int o, int i, int a, int b) const {
    return weights[((static_cast<std::size_t>(o) * in_ch + i) * kh + a) * kw + b];
  }
  void validate() const;
};

/// Output rows/cols for an input extent under the given padding.
int conv_output_extent(int extent, int kernel, int dilation, Padding padding);

/// Dilated convolution in the kernel-flipped form
///   g(y, x) = b + Σ_i Σ_j k(i, j) · f(y + r·(a − i), x + r·(c − j))
/// with a = (kh−1)/2, c = (kw−1)/2 for Same padding and a = kh−1, c = kw−1
/// for Valid. Out-of-range samples read as zero.
Tensor4 atrous_conv_forward(const Tensor4& x, const ConvKernel& k, Padding padding);

struct ConvGrads {
  Tensor4 grad_x;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};

ConvGrads atrous_conv_backward(const Tensor4& grad_out, const Tensor4& x, const ConvKernel& k,
                               Padding padding);

// Pooling: non-overlapping k×k windows, stride k, trailing remainder dropped.
Tensor4 max_pool_forward(const Tensor4& x, int k, std::vector<std::size_t>* argmax);
Tensor4 max_pool_backward(const Tensor4& grad_out, const Shape& input_shape,
                          const std::vector<std::size_t>& argmax);
Tensor4 avg_pool_forward(const Tensor4& x, int k);
Tensor4 avg_pool_backward(const Tensor4& grad_out, const Shape& input_shape, int k);

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-3;
  double momentum = 0.9;

  static BatchNormParams identity(int channels);
};

struct BatchNormCache {
  std::vector<double> inv_std;
  Tensor4 x_hat;
  bool training = false;
};

/// Training mode normalises with batch statistics over (N, H, W) and folds them
/// into the running statistics; inference uses the running statistics.
Tensor4 batch_norm_forward(const Tensor4& x, BatchNormParams& p, bool training,
                           BatchNormCache* cache);

struct BatchNormGrads {
  Tensor4 grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};

BatchNormGrads batch_norm_backward(const Tensor4& grad_out, const BatchNormCache& cache,
                                   const BatchNormParams& p);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& x);

/// Softmax over the channel axis at every (n, y, x).
Tensor4 softmax_forward(const Tensor4& x);
Tensor4 softmax_backward(const Tensor4& grad_out, const Tensor4& y);

struct PadAmount {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};
Tensor4 zero_pad_forward(const Tensor4& x, const PadAmount& pad);
Tensor4 zero_pad_backward(const Tensor4& grad_out, const PadAmount& pad);

/// y = scale · x + shift.
Tensor4 scale_forward(const Tensor4& x, double scale, double shift);
Tensor4 scale_backward(const Tensor4& grad_out, double scale);

/// Bilinear resize with half-pixel centres and clamped borders.
Tensor4 resize_forward(const Tensor4& x, int out_h, int out_w);
Tensor4 resize_backward(const Tensor4& grad_out, const Shape& input_shape);

Tensor4 concat_forward(const std::vector<const Tensor4*>& parts);
std::vector<Tensor4> concat_backward(const Tensor4& grad_out, const std::vector<Shape>& shapes);

/// Same data, new per-sample shape (c·h·w preserved).
Tensor4 reshape(const Tensor4& x, int c, int h, int w);

/// units × in_features weights (row-major). Input is read per sample as a flat
/// vector, output has shape N × units × 1 × 1.
struct DenseParams {
  int units = 0;
  int in_features = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

Tensor4 dense_forward(const Tensor4& x, const DenseParams& p);

struct DenseGrads {
  Tensor4 grad_x;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};

DenseGrads dense_backward(const Tensor4& grad_out, const Tensor4& x, const DenseParams& p);

}  // namespace rgc::nn
