#include "rgc/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rgc/error.hpp"

namespace rgc::nn {
namespace {

struct ConvGeometry {
  int out_h;
  int out_w;
  int anchor_h;  // a in f(y + r·(a − i), ...)
  int anchor_w;
};

ConvGeometry geometry(const Shape& in, const ConvKernel& k, Padding padding) {
  ConvGeometry g{};
  g.out_h = conv_output_extent(in.h, k.kh, k.dilation, padding);
  g.out_w = conv_output_extent(in.w, k.kw, k.dilation, padding);
  g.anchor_h = padding == Padding::Same ? (k.kh - 1) / 2 : k.kh - 1;
  g.anchor_w = padding == Padding::Same ? (k.kw - 1) / 2 : k.kw - 1;
  return g;
}

// Output positions whose tap at offset `d` lands inside [0, extent).
std::pair<int, int> valid_range(int out_extent, int in_extent, int d) {
  return {std::max(0, -d), std::min(out_extent, in_extent - d)};
}

void require_same_shape(const Tensor4& a, const Shape& b, const char* what) {
  if (a.shape() != b) {
    throw ValidationError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " +
                          to_string(b));
  }
}

}  // namespace

ConvKernel ConvKernel::zeros(int out_ch, int in_ch, int kh, int kw, int dilation) {
  ConvKernel k;
  k.out_ch = out_ch;
  k.in_ch = in_ch;
  k.kh = kh;
  k.kw = kw;
  k.dilation = dilation;
  k.weights.assign(static_cast<std::size_t>(out_ch) * in_ch * kh * kw, 0.0);
  k.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
  return k;
}

void ConvKernel::validate() const {
  if (out_ch < 1 || in_ch < 1 || kh < 1 || kw < 1) {
    throw ValidationError("convolution kernel dimensions must be positive");
  }
  if (dilation < 1) throw ValidationError("dilation rate must be a positive integer");
  if (weights.size() != static_cast<std::size_t>(out_ch) * in_ch * kh * kw ||
      bias.size() != static_cast<std::size_t>(out_ch)) {
    throw ValidationError("convolution parameter sizes do not match kernel shape");
  }
}

int conv_output_extent(int extent, int kernel, int dilation, Padding padding) {
  if (padding == Padding::Same) return extent;
  return extent - dilation * (kernel - 1);
}

Tensor4 atrous_conv_forward(const Tensor4& x, const ConvKernel& k, Padding padding) {
  k.validate();
  if (x.c() != k.in_ch) {
    throw ValidationError("convolution expects " + std::to_string(k.in_ch) +
                          " input channels, got " + std::to_string(x.c()));
  }
  const ConvGeometry g = geometry(x.shape(), k, padding);
  if (g.out_h < 1 || g.out_w < 1) throw ValidationError("convolution output would be empty");
  const int r = k.dilation;
  Tensor4 out(Shape{x.n(), k.out_ch, g.out_h, g.out_w});
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < k.out_ch; ++o) {
      double* dst = out.plane(n, o);
      std::fill(dst, dst + out.shape().plane(), k.bias[static_cast<std::size_t>(o)]);
      for (int ci = 0; ci < k.in_ch; ++ci) {
        const double* src = x.plane(n, ci);
        for (int i = 0; i < k.kh; ++i) {
          const int dy = r * (g.anchor_h - i);
          const auto [y0, y1] = valid_range(g.out_h, x.h(), dy);
          for (int j = 0; j < k.kw; ++j) {
            const int dx = r * (g.anchor_w - j);
            const auto [x0, x1] = valid_range(g.out_w, x.w(), dx);
            const double wv = k.w(o, ci, i, j);
            for (int y = y0; y < y1; ++y) {
              double* drow = dst + static_cast<std::size_t>(y) * g.out_w;
              const double* srow = src + static_cast<std::size_t>(y + dy) * x.w() + dx;
              for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads atrous_conv_backward(const Tensor4& grad_out, const Tensor4& x, const ConvKernel& k,
                               Padding padding) {
  k.validate();
  const ConvGeometry g = geometry(x.shape(), k, padding);
  require_same_shape(grad_out, Shape{x.n(), k.out_ch, g.out_h, g.out_w}, "conv backward");
  const int r = k.dilation;
  ConvGrads out;
  out.grad_x = Tensor4(x.shape(), 0.0);
  out.grad_weights.assign(k.weights.size(), 0.0);
  out.grad_bias.assign(k.bias.size(), 0.0);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < k.out_ch; ++o) {
      const double* go = grad_out.plane(n, o);
      double bsum = 0.0;
      for (std::size_t p = 0; p < grad_out.shape().plane(); ++p) bsum += go[p];
      out.grad_bias[static_cast<std::size_t>(o)] += bsum;
      for (int ci = 0; ci < k.in_ch; ++ci) {
        const double* src = x.plane(n, ci);
        double* gx = out.grad_x.plane(n, ci);
        for (int i = 0; i < k.kh; ++i) {
          const int dy = r * (g.anchor_h - i);
          const auto [y0, y1] = valid_range(g.out_h, x.h(), dy);
          for (int j = 0; j < k.kw; ++j) {
            const int dx = r * (g.anchor_w - j);
            const auto [x0, x1] = valid_range(g.out_w, x.w(), dx);
            const double wv = k.w(o, ci, i, j);
            double wsum = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = go + static_cast<std::size_t>(y) * g.out_w;
              const auto in_off = static_cast<std::size_t>(y + dy) * x.w() + dx;
              const double* srow = src + in_off;
              double* gxrow = gx + in_off;
              for (int xx = x0; xx < x1; ++xx) {
                wsum += grow[xx] * srow[xx];
                gxrow[xx] += wv * grow[xx];
              }
            }
            out.grad_weights[((static_cast<std::size_t>(o) * k.in_ch + ci) * k.kh + i) * k.kw + j] +=
                wsum;
          }
        }
      }
    }
  }
  return out;
}

Tensor4 max_pool_forward(const Tensor4& x, int k, std::vector<std::size_t>* argmax) {
  if (k < 1) throw ValidationError("pool window must be positive");
  const int oh = x.h() / k, ow = x.w() / k;
  if (oh < 1 || ow < 1) throw ValidationError("pool window larger than input");
  Tensor4 out(Shape{x.n(), x.c(), oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      const std::size_t base = static_cast<std::size_t>(src - x.values().data());
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
              const std::size_t idx = static_cast<std::size_t>(y * k + a) * x.w() + (xx * k + b);
              if (src[idx] > best) {
                best = src[idx];
                best_i = base + idx;
              }
            }
          }
          out.values()[o] = best;
          if (argmax) (*argmax)[o] = best_i;
        }
      }
    }
  }
  return out;
}

Tensor4 max_pool_backward(const Tensor4& grad_out, const Shape& input_shape,
                          const std::vector<std::size_t>& argmax) {
  if (argmax.size() != grad_out.size()) throw ValidationError("max-pool cache size mismatch");
  Tensor4 gx(input_shape, 0.0);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gx.values()[argmax[o]] += grad_out.values()[o];
  return gx;
}

Tensor4 avg_pool_forward(const Tensor4& x, int k) {
  if (k < 1) throw ValidationError("pool window must be positive");
  const int oh = x.h() / k, ow = x.w() / k;
  if (oh < 1 || ow < 1) throw ValidationError("pool window larger than input");
  Tensor4 out(Shape{x.n(), x.c(), oh, ow});
  const double inv = 1.0 / (k * k);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) s += x.at(n, c, y * k + a, xx * k + b);
          }
          out.at(n, c, y, xx) = s * inv;
        }
      }
    }
  }
  return out;
}

Tensor4 avg_pool_backward(const Tensor4& grad_out, const Shape& input_shape, int k) {
  Tensor4 gx(input_shape, 0.0);
  const double inv = 1.0 / (k * k);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        for (int xx = 0; xx < grad_out.w(); ++xx) {
          const double g = grad_out.at(n, c, y, xx) * inv;
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) gx.at(n, c, y * k + a, xx * k + b) += g;
          }
        }
      }
    }
  }
  return gx;
}

BatchNormParams BatchNormParams::identity(int channels) {
  BatchNormParams p;
  const auto c = static_cast<std::size_t>(channels);
  p.gamma.assign(c, 1.0);
  p.beta.assign(c, 0.0);
  p.running_mean.assign(c, 0.0);
  p.running_var.assign(c, 1.0);
  return p;
}

Tensor4 batch_norm_forward(const Tensor4& x, BatchNormParams& p, bool training,
                           BatchNormCache* cache) {
  const auto channels = static_cast<std::size_t>(x.c());
  if (p.gamma.size() != channels || p.beta.size() != channels ||
      p.running_mean.size() != channels || p.running_var.size() != channels) {
    throw ValidationError("batch-norm parameters do not match channel count");
  }
  const std::size_t plane = x.shape().plane();
  const double m = static_cast<double>(plane) * x.n();
  Tensor4 out(x.shape());
  Tensor4 x_hat(x.shape());
  std::vector<double> inv_std(channels);
  for (int c = 0; c < x.c(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double mean = p.running_mean[ci];
    double var = p.running_var[ci];
    if (training) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* src = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) s += src[i];
      }
      mean = s / m;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* src = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) ss += (src[i] - mean) * (src[i] - mean);
      }
      var = ss / m;
      const double unbiased = m > 1.0 ? ss / (m - 1.0) : var;
      p.running_mean[ci] = p.momentum * p.running_mean[ci] + (1.0 - p.momentum) * mean;
      p.running_var[ci] = p.momentum * p.running_var[ci] + (1.0 - p.momentum) * unbiased;
    }
    const double is = 1.0 / std::sqrt(var + p.eps);
    inv_std[ci] = is;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.plane(n, c);
      double* xh = x_hat.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * is;
        dst[i] = p.gamma[ci] * xh[i] + p.beta[ci];
      }
    }
  }
  if (cache) {
    cache->inv_std = std::move(inv_std);
    cache->x_hat = std::move(x_hat);
    cache->training = training;
  }
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor4& grad_out, const BatchNormCache& cache,
                                   const BatchNormParams& p) {
  require_same_shape(grad_out, cache.x_hat.shape(), "batch-norm backward");
  const std::size_t plane = grad_out.shape().plane();
  const double m = static_cast<double>(plane) * grad_out.n();
  BatchNormGrads g;
  g.grad_x = Tensor4(grad_out.shape());
  g.grad_gamma.assign(p.gamma.size(), 0.0);
  g.grad_beta.assign(p.beta.size(), 0.0);
  for (int c = 0; c < grad_out.c(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* go = grad_out.plane(n, c);
      const double* xh = cache.x_hat.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += go[i];
        sum_gx += go[i] * xh[i];
      }
    }
    g.grad_beta[ci] = sum_g;
    g.grad_gamma[ci] = sum_gx;
    const double scale = p.gamma[ci] * cache.inv_std[ci];
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* go = grad_out.plane(n, c);
      const double* xh = cache.x_hat.plane(n, c);
      double* gx = g.grad_x.plane(n, c);
      if (cache.training) {
        for (std::size_t i = 0; i < plane; ++i) {
          gx[i] = scale * (go[i] - sum_g / m - xh[i] * sum_gx / m);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) gx[i] = scale * go[i];
      }
    }
  }
  return g;
}

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = std::max(0.0, x.values()[i]);
  return out;
}

Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& x) {
  require_same_shape(grad_out, x.shape(), "relu backward");
  Tensor4 gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    gx.values()[i] = x.values()[i] > 0.0 ? grad_out.values()[i] : 0.0;
  }
  return gx;
}

Tensor4 softmax_forward(const Tensor4& x) {
  Tensor4 out(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < x.c(); ++c) mx = std::max(mx, x.plane(n, c)[i]);
      double sum = 0.0;
      for (int c = 0; c < x.c(); ++c) {
        const double e = std::exp(x.plane(n, c)[i] - mx);
        out.plane(n, c)[i] = e;
        sum += e;
      }
      for (int c = 0; c < x.c(); ++c) out.plane(n, c)[i] /= sum;
    }
  }
  return out;
}

Tensor4 softmax_backward(const Tensor4& grad_out, const Tensor4& y) {
  require_same_shape(grad_out, y.shape(), "softmax backward");
  Tensor4 gx(y.shape());
  const std::size_t plane = y.shape().plane();
  for (int n = 0; n < y.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (int c = 0; c < y.c(); ++c) dot += grad_out.plane(n, c)[i] * y.plane(n, c)[i];
      for (int c = 0; c < y.c(); ++c) {
        gx.plane(n, c)[i] = y.plane(n, c)[i] * (grad_out.plane(n, c)[i] - dot);
      }
    }
  }
  return gx;
}

Tensor4 zero_pad_forward(const Tensor4& x, const PadAmount& pad) {
  if (pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0) {
    throw ValidationError("padding must be non-negative");
  }
  Tensor4 out(Shape{x.n(), x.c(), x.h() + pad.top + pad.bottom, x.w() + pad.left + pad.right}, 0.0);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < x.h(); ++y) {
        const double* src = x.plane(n, c) + static_cast<std::size_t>(y) * x.w();
        std::copy(src, src + x.w(),
                  out.plane(n, c) + static_cast<std::size_t>(y + pad.top) * out.w() + pad.left);
      }
    }
  }
  return out;
}

Tensor4 zero_pad_backward(const Tensor4& grad_out, const PadAmount& pad) {
  Tensor4 gx(Shape{grad_out.n(), grad_out.c(), grad_out.h() - pad.top - pad.bottom,
                   grad_out.w() - pad.left - pad.right});
  for (int n = 0; n < gx.n(); ++n) {
    for (int c = 0; c < gx.c(); ++c) {
      for (int y = 0; y < gx.h(); ++y) {
        const double* src =
            grad_out.plane(n, c) + static_cast<std::size_t>(y + pad.top) * grad_out.w() + pad.left;
        std::copy(src, src + gx.w(), gx.plane(n, c) + static_cast<std::size_t>(y) * gx.w());
      }
    }
  }
  return gx;
}

Tensor4 scale_forward(const Tensor4& x, double scale, double shift) {
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = scale * x.values()[i] + shift;
  return out;
}

Tensor4 scale_backward(const Tensor4& grad_out, double scale) {
  Tensor4 gx(grad_out.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) gx.values()[i] = scale * grad_out.values()[i];
  return gx;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double t;  // weight of i1
};

std::vector<Tap> bilinear_taps(int out_extent, int in_extent) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_extent));
  const double ratio = static_cast<double>(in_extent) / out_extent;
  for (int o = 0; o < out_extent; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_extent - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_extent - 1);
    taps[static_cast<std::size_t>(o)] = Tap{i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Tensor4 resize_forward(const Tensor4& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be positive");
  const auto ty = bilinear_taps(out_h, x.h());
  const auto tx = bilinear_taps(out_w, x.w());
  Tensor4 out(Shape{x.n(), x.c(), out_h, out_w});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        const double* r0 = src + static_cast<std::size_t>(a.i0) * x.w();
        const double* r1 = src + static_cast<std::size_t>(a.i1) * x.w();
        for (int xx = 0; xx < out_w; ++xx) {
          const Tap& b = tx[static_cast<std::size_t>(xx)];
          const double top = (1.0 - b.t) * r0[b.i0] + b.t * r0[b.i1];
          const double bot = (1.0 - b.t) * r1[b.i0] + b.t * r1[b.i1];
          dst[static_cast<std::size_t>(y) * out_w + xx] = (1.0 - a.t) * top + a.t * bot;
        }
      }
    }
  }
  return out;
}

Tensor4 resize_backward(const Tensor4& grad_out, const Shape& input_shape) {
  const auto ty = bilinear_taps(grad_out.h(), input_shape.h);
  const auto tx = bilinear_taps(grad_out.w(), input_shape.w);
  Tensor4 gx(input_shape, 0.0);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const double* go = grad_out.plane(n, c);
      double* dst = gx.plane(n, c);
      for (int y = 0; y < grad_out.h(); ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        double* r0 = dst + static_cast<std::size_t>(a.i0) * input_shape.w;
        double* r1 = dst + static_cast<std::size_t>(a.i1) * input_shape.w;
        for (int xx = 0; xx < grad_out.w(); ++xx) {
          const Tap& b = tx[static_cast<std::size_t>(xx)];
          const double g = go[static_cast<std::size_t>(y) * grad_out.w() + xx];
          r0[b.i0] += (1.0 - a.t) * (1.0 - b.t) * g;
          r0[b.i1] += (1.0 - a.t) * b.t * g;
          r1[b.i0] += a.t * (1.0 - b.t) * g;
          r1[b.i1] += a.t * b.t * g;
        }
      }
    }
  }
  return gx;
}

Tensor4 concat_forward(const std::vector<const Tensor4*>& parts) {
  if (parts.empty()) throw ValidationError("concat needs at least one input");
  Shape s = parts.front()->shape();
  s.c = 0;
  for (const Tensor4* p : parts) {
    if (p->n() != s.n || p->h() != s.h || p->w() != s.w) {
      throw ValidationError("concat inputs differ in batch or spatial size");
    }
    s.c += p->c();
  }
  Tensor4 out(s);
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const Tensor4* p : parts) {
      for (int c = 0; c < p->c(); ++c) {
        std::copy(p->plane(n, c), p->plane(n, c) + s.plane(), out.plane(n, c0 + c));
      }
      c0 += p->c();
    }
  }
  return out;
}

std::vector<Tensor4> concat_backward(const Tensor4& grad_out, const std::vector<Shape>& shapes) {
  std::vector<Tensor4> grads;
  grads.reserve(shapes.size());
  for (const Shape& s : shapes) grads.emplace_back(s);
  for (int n = 0; n < grad_out.n(); ++n) {
    int c0 = 0;
    for (auto& g : grads) {
      for (int c = 0; c < g.c(); ++c) {
        const double* src = grad_out.plane(n, c0 + c);
        std::copy(src, src + grad_out.shape().plane(), g.plane(n, c));
      }
      c0 += g.c();
    }
  }
  return grads;
}

Tensor4 reshape(const Tensor4& x, int c, int h, int w) {
  const Shape s{x.n(), c, h, w};
  if (s.per_sample() != x.shape().per_sample()) {
    throw ValidationError("reshape changes element count: " + to_string(x.shape()) + " -> " +
                          to_string(s));
  }
  return Tensor4(s, std::vector<double>(x.values().begin(), x.values().end()));
}

Tensor4 dense_forward(const Tensor4& x, const DenseParams& p) {
  const auto in = x.shape().per_sample();
  if (in != static_cast<std::size_t>(p.in_features)) {
    throw ValidationError("dense layer expects " + std::to_string(p.in_features) +
                          " features, got " + std::to_string(in));
  }
  Tensor4 out(Shape{x.n(), p.units, 1, 1});
  for (int n = 0; n < x.n(); ++n) {
    const double* src = x.values().data() + in * static_cast<std::size_t>(n);
    for (int u = 0; u < p.units; ++u) {
      const double* wrow = p.weights.data() + in * static_cast<std::size_t>(u);
      double s = p.bias[static_cast<std::size_t>(u)];
      for (std::size_t i = 0; i < in; ++i) s += wrow[i] * src[i];
      out.at(n, u, 0, 0) = s;
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor4& grad_out, const Tensor4& x, const DenseParams& p) {
  const auto in = x.shape().per_sample();
  require_same_shape(grad_out, Shape{x.n(), p.units, 1, 1}, "dense backward");
  DenseGrads g;
  g.grad_x = Tensor4(x.shape(), 0.0);
  g.grad_weights.assign(p.weights.size(), 0.0);
  g.grad_bias.assign(p.bias.size(), 0.0);
  for (int n = 0; n < x.n(); ++n) {
    const double* src = x.values().data() + in * static_cast<std::size_t>(n);
    double* gx = g.grad_x.values().data() + in * static_cast<std::size_t>(n);
    for (int u = 0; u < p.units; ++u) {
      const double go = grad_out.at(n, u, 0, 0);
      const double* wrow = p.weights.data() + in * static_cast<std::size_t>(u);
      double* gw = g.grad_weights.data() + in * static_cast<std::size_t>(u);
      g.grad_bias[static_cast<std::size_t>(u)] += go;
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += go * src[i];
        gx[i] += go * wrow[i];
      }
    }
  }
  return g;
}

}  // namespace rgc::nn
