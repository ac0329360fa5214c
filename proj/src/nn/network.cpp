#include "rgc/nn/network.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "rgc/error.hpp"
#include "rgc/nn/schedule.hpp"
#include "rgc/random.hpp"

namespace rgc::nn {
namespace {

constexpr std::array<std::string_view, 14> kKindNames = {
    "input", "conv",   "max_pool", "avg_pool", "batch_norm", "relu",    "softmax",
    "zero_pad", "scale", "resize", "concat", "reshape", "flatten", "dense"};

std::string where(const NetworkSpec& spec, std::size_t i) {
  const auto& l = spec.layers[i];
  return "layer " + std::to_string(i) + (l.name.empty() ? "" : " (" + l.name + ")");
}

ConvKernel conv_kernel(const LayerSpec& l, const Shape& in, const LayerParams& p) {
  ConvKernel k;
  k.out_ch = l.channels;
  k.in_ch = in.c;
  k.kh = l.kernel;
  k.kw = l.kernel;
  k.dilation = l.dilation;
  const std::size_t nw = static_cast<std::size_t>(k.out_ch) * k.in_ch * k.kh * k.kw;
  k.weights.assign(p.learnable.begin(), p.learnable.begin() + static_cast<std::ptrdiff_t>(nw));
  k.bias.assign(p.learnable.begin() + static_cast<std::ptrdiff_t>(nw), p.learnable.end());
  return k;
}

BatchNormParams bn_params(const LayerParams& p) {
  const std::size_t c = p.learnable.size() / 2;
  BatchNormParams b;
  b.gamma.assign(p.learnable.begin(), p.learnable.begin() + static_cast<std::ptrdiff_t>(c));
  b.beta.assign(p.learnable.begin() + static_cast<std::ptrdiff_t>(c), p.learnable.end());
  b.running_mean.assign(p.state.begin(), p.state.begin() + static_cast<std::ptrdiff_t>(c));
  b.running_var.assign(p.state.begin() + static_cast<std::ptrdiff_t>(c), p.state.end());
  return b;
}

DenseParams dense_params(const LayerSpec& l, const Shape& in, const LayerParams& p) {
  DenseParams d;
  d.units = l.units;
  d.in_features = static_cast<int>(in.per_sample());
  const std::size_t nw = static_cast<std::size_t>(d.units) * d.in_features;
  d.weights.assign(p.learnable.begin(), p.learnable.begin() + static_cast<std::ptrdiff_t>(nw));
  d.bias.assign(p.learnable.begin() + static_cast<std::ptrdiff_t>(nw), p.learnable.end());
  return d;
}

template <class... Vs>
std::vector<double> join(const Vs&... parts) {
  std::vector<double> out;
  (out.insert(out.end(), parts.begin(), parts.end()), ...);
  return out;
}

Shape batched(Shape s, int n) {
  s.n = n;
  return s;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  const auto i = static_cast<std::size_t>(kind);
  if (i >= kKindNames.size()) return "unknown";
  return kKindNames[i];
}

LayerKind parse_layer_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  }
  throw ValidationError("unknown layer kind: " + std::string(name));
}

int NetworkSpec::add(LayerSpec layer) {
  layers.push_back(std::move(layer));
  return static_cast<int>(layers.size()) - 1;
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty() || spec.layers.front().kind != LayerKind::Input) {
    throw ValidationError("network must start with an input layer");
  }
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto fail = [&](const std::string& msg) -> ValidationError {
      return ValidationError(where(spec, i) + ": " + msg);
    };
    const std::size_t want = l.kind == LayerKind::Input ? 0 : l.kind == LayerKind::Concat ? l.inputs.size() : 1;
    if (l.inputs.size() != want || (l.kind == LayerKind::Concat && want < 2)) {
      throw fail("wrong number of inputs for " + std::string(to_string(l.kind)));
    }
    for (int in : l.inputs) {
      if (in < 0 || static_cast<std::size_t>(in) >= i) throw fail("inputs must refer to earlier layers");
    }
    if (l.kind == LayerKind::Input && i != 0) throw fail("only the first layer may be an input");
    const Shape in = l.inputs.empty() ? Shape{} : shapes[static_cast<std::size_t>(l.inputs[0])];
    Shape s{1, in.c, in.h, in.w};
    switch (l.kind) {
      case LayerKind::Input:
        s = Shape{1, l.channels, l.out_h, l.out_w};
        break;
      case LayerKind::Conv:
        if (l.channels < 1 || l.kernel < 1 || l.dilation < 1) throw fail("bad convolution settings");
        s.c = l.channels;
        s.h = conv_output_extent(in.h, l.kernel, l.dilation, l.padding);
        s.w = conv_output_extent(in.w, l.kernel, l.dilation, l.padding);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        if (l.kernel < 1) throw fail("pool window must be positive");
        s.h = in.h / l.kernel;
        s.w = in.w / l.kernel;
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::Softmax:
      case LayerKind::Scale:
        break;
      case LayerKind::ZeroPad:
        if (l.pad.top < 0 || l.pad.bottom < 0 || l.pad.left < 0 || l.pad.right < 0) {
          throw fail("padding must be non-negative");
        }
        s.h = in.h + l.pad.top + l.pad.bottom;
        s.w = in.w + l.pad.left + l.pad.right;
        break;
      case LayerKind::Resize:
        s.h = l.out_h;
        s.w = l.out_w;
        break;
      case LayerKind::Concat:
        s.c = 0;
        for (int j : l.inputs) {
          const Shape& o = shapes[static_cast<std::size_t>(j)];
          if (o.h != in.h || o.w != in.w) throw fail("concat inputs differ in spatial size");
          s.c += o.c;
        }
        break;
      case LayerKind::Reshape:
        s = Shape{1, l.channels, l.out_h, l.out_w};
        if (s.per_sample() != in.per_sample()) throw fail("reshape changes element count");
        break;
      case LayerKind::Flatten:
        s = Shape{1, static_cast<int>(in.per_sample()), 1, 1};
        break;
      case LayerKind::Dense:
        s = Shape{1, l.units, 1, 1};
        break;
    }
    if (!s.positive()) throw fail("output shape " + to_string(s) + " is empty");
    shapes.push_back(s);
  }
  const auto n = static_cast<int>(spec.layers.size());
  if (spec.seg_output < 0 || spec.seg_output >= n) throw ValidationError("segmentation output index out of range");
  if (spec.cls_output < -1 || spec.cls_output >= n) throw ValidationError("classification output index out of range");
  return shapes;
}

ParameterCount count_parameters(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  ParameterCount pc;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape in = l.inputs.empty() ? Shape{} : shapes[static_cast<std::size_t>(l.inputs[0])];
    switch (l.kind) {
      case LayerKind::Conv:
        pc.learnable += static_cast<std::size_t>(l.kernel) * l.kernel * in.c * l.channels +
                        static_cast<std::size_t>(l.channels);
        break;
      case LayerKind::BatchNorm:
        pc.learnable += 2 * static_cast<std::size_t>(in.c);
        pc.non_learnable += 2 * static_cast<std::size_t>(in.c);
        break;
      case LayerKind::Dense:
        pc.learnable += in.per_sample() * l.units + static_cast<std::size_t>(l.units);
        break;
      default:
        break;
    }
  }
  return pc;
}

std::size_t NetworkWeights::learnable_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.learnable.size();
  return n;
}

std::size_t NetworkWeights::state_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.state.size();
  return n;
}

NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = infer_shapes(spec);
  NetworkWeights w;
  w.layers.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape in = l.inputs.empty() ? Shape{} : shapes[static_cast<std::size_t>(l.inputs[0])];
    std::mt19937_64 rng(derive_seed(seed, i));
    auto glorot = [&](std::size_t count, double fan_in, double fan_out) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<double> v(count);
      for (double& x : v) x = dist(rng);
      return v;
    };
    LayerParams& p = w.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const double area = static_cast<double>(l.kernel) * l.kernel;
        p.learnable = glorot(static_cast<std::size_t>(area) * in.c * l.channels, area * in.c,
                             area * l.channels);
        p.learnable.resize(p.learnable.size() + static_cast<std::size_t>(l.channels), 0.0);
        break;
      }
      case LayerKind::BatchNorm: {
        const auto c = static_cast<std::size_t>(in.c);
        p.learnable = join(std::vector<double>(c, 1.0), std::vector<double>(c, 0.0));
        p.state = join(std::vector<double>(c, 0.0), std::vector<double>(c, 1.0));
        break;
      }
      case LayerKind::Dense:
        p.learnable = glorot(in.per_sample() * l.units, static_cast<double>(in.per_sample()), l.units);
        p.learnable.resize(p.learnable.size() + static_cast<std::size_t>(l.units), 0.0);
        break;
      default:
        break;
    }
  }
  return w;
}

Network::Network(NetworkSpec spec, NetworkWeights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  shapes_ = infer_shapes(spec_);
  const NetworkWeights expected = init_weights(spec_, 0);
  if (weights_.layers.size() != expected.layers.size()) {
    throw ValidationError("weights do not match network: layer count");
  }
  for (std::size_t i = 0; i < expected.layers.size(); ++i) {
    if (weights_.layers[i].learnable.size() != expected.layers[i].learnable.size() ||
        weights_.layers[i].state.size() != expected.layers[i].state.size()) {
      throw ValidationError("weights do not match network at " + where(spec_, i));
    }
  }
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  shapes_ = infer_shapes(spec_);
  weights_ = init_weights(spec_, seed);
}

Shape Network::input_shape(int batch) const { return batched(shapes_.front(), batch); }

NetworkOutput Network::forward(const Tensor4& x, Mode mode, ForwardCache* cache) {
  return run(x, mode, cache, weights_);
}

NetworkOutput Network::predict(const Tensor4& x) const {
  NetworkWeights copy = weights_;
  return run(x, Mode::Inference, nullptr, copy);
}

NetworkOutput Network::run(const Tensor4& x, Mode mode, ForwardCache* cache,
                           NetworkWeights& w) const {
  if (shapes_.empty()) throw ValidationError("network is empty");
  if (x.n() < 1 || x.shape() != input_shape(x.n())) {
    throw ValidationError("network input shape " + to_string(x.shape()) + " does not match " +
                          to_string(input_shape(std::max(1, x.n()))));
  }
  const std::size_t count = spec_.layers.size();
  const bool training = mode == Mode::Training;
  std::vector<Tensor4> act(count);
  std::vector<std::vector<std::size_t>> argmax(count);
  std::vector<BatchNormCache> bn(count);
  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Tensor4* in = l.inputs.empty() ? &x : &act[static_cast<std::size_t>(l.inputs[0])];
    switch (l.kind) {
      case LayerKind::Input:
        act[i] = x;
        break;
      case LayerKind::Conv:
        act[i] = atrous_conv_forward(
            *in, conv_kernel(l, shapes_[static_cast<std::size_t>(l.inputs[0])], w.layers[i]),
            l.padding);
        break;
      case LayerKind::MaxPool:
        act[i] = max_pool_forward(*in, l.kernel, cache ? &argmax[i] : nullptr);
        break;
      case LayerKind::AvgPool:
        act[i] = avg_pool_forward(*in, l.kernel);
        break;
      case LayerKind::BatchNorm: {
        BatchNormParams p = bn_params(w.layers[i]);
        act[i] = batch_norm_forward(*in, p, training, cache ? &bn[i] : nullptr);
        if (training) w.layers[i].state = join(p.running_mean, p.running_var);
        break;
      }
      case LayerKind::Relu:
        act[i] = relu_forward(*in);
        break;
      case LayerKind::Softmax:
        act[i] = softmax_forward(*in);
        break;
      case LayerKind::ZeroPad:
        act[i] = zero_pad_forward(*in, l.pad);
        break;
      case LayerKind::Scale:
        act[i] = scale_forward(*in, l.scale, l.shift);
        break;
      case LayerKind::Resize:
        act[i] = resize_forward(*in, l.out_h, l.out_w);
        break;
      case LayerKind::Concat: {
        std::vector<const Tensor4*> parts;
        for (int j : l.inputs) parts.push_back(&act[static_cast<std::size_t>(j)]);
        act[i] = concat_forward(parts);
        break;
      }
      case LayerKind::Reshape:
        act[i] = reshape(*in, l.channels, l.out_h, l.out_w);
        break;
      case LayerKind::Flatten:
        act[i] = reshape(*in, static_cast<int>(in->shape().per_sample()), 1, 1);
        break;
      case LayerKind::Dense:
        act[i] = dense_forward(
            *in, dense_params(l, shapes_[static_cast<std::size_t>(l.inputs[0])], w.layers[i]));
        break;
    }
  }
  NetworkOutput out;
  out.seg = act[static_cast<std::size_t>(spec_.seg_output)];
  if (spec_.cls_output >= 0) out.cls = act[static_cast<std::size_t>(spec_.cls_output)];
  if (cache) {
    cache->activations = std::move(act);
    cache->argmax = std::move(argmax);
    cache->batch_norm = std::move(bn);
    cache->filled = true;
  }
  return out;
}

WeightGrads Network::backward(const ForwardCache& cache, const Tensor4& grad_seg,
                              const Tensor4& grad_cls) const {
  if (!cache.filled || cache.activations.size() != spec_.layers.size()) {
    throw ValidationError("backward called without a matching forward cache");
  }
  const std::size_t count = spec_.layers.size();
  const auto& act = cache.activations;
  std::vector<Tensor4> grad(count);
  auto accumulate = [&](std::size_t node, Tensor4&& g) {
    if (g.shape() != act[node].shape()) {
      throw ValidationError("gradient shape mismatch at " + where(spec_, node));
    }
    if (grad[node].size() == 0) {
      grad[node] = std::move(g);
    } else {
      auto dst = grad[node].values();
      auto src = g.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  };
  if (grad_seg.size() > 0) accumulate(static_cast<std::size_t>(spec_.seg_output), Tensor4(grad_seg));
  if (grad_cls.size() > 0) {
    if (spec_.cls_output < 0) throw ValidationError("network has no classification output");
    accumulate(static_cast<std::size_t>(spec_.cls_output), Tensor4(grad_cls));
  }

  WeightGrads wg;
  wg.layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) wg.layers[i].assign(weights_.layers[i].learnable.size(), 0.0);

  for (std::size_t idx = count; idx-- > 0;) {
    if (grad[idx].size() == 0) continue;
    const LayerSpec& l = spec_.layers[idx];
    const Tensor4 g = std::move(grad[idx]);
    grad[idx] = Tensor4();
    if (l.kind == LayerKind::Input) {
      wg.grad_input = g;
      continue;
    }
    const auto src = static_cast<std::size_t>(l.inputs[0]);
    const Tensor4& in = act[src];
    switch (l.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv: {
        auto cg = atrous_conv_backward(g, in, conv_kernel(l, shapes_[src], weights_.layers[idx]), l.padding);
        wg.layers[idx] = join(cg.grad_weights, cg.grad_bias);
        accumulate(src, std::move(cg.grad_x));
        break;
      }
      case LayerKind::MaxPool:
        accumulate(src, max_pool_backward(g, in.shape(), cache.argmax[idx]));
        break;
      case LayerKind::AvgPool:
        accumulate(src, avg_pool_backward(g, in.shape(), l.kernel));
        break;
      case LayerKind::BatchNorm: {
        auto bg = batch_norm_backward(g, cache.batch_norm[idx], bn_params(weights_.layers[idx]));
        wg.layers[idx] = join(bg.grad_gamma, bg.grad_beta);
        accumulate(src, std::move(bg.grad_x));
        break;
      }
      case LayerKind::Relu:
        accumulate(src, relu_backward(g, in));
        break;
      case LayerKind::Softmax:
        accumulate(src, softmax_backward(g, act[idx]));
        break;
      case LayerKind::ZeroPad:
        accumulate(src, zero_pad_backward(g, l.pad));
        break;
      case LayerKind::Scale:
        accumulate(src, scale_backward(g, l.scale));
        break;
      case LayerKind::Resize:
        accumulate(src, resize_backward(g, in.shape()));
        break;
      case LayerKind::Concat: {
        std::vector<Shape> parts;
        for (int j : l.inputs) parts.push_back(act[static_cast<std::size_t>(j)].shape());
        auto gs = concat_backward(g, parts);
        for (std::size_t k = 0; k < gs.size(); ++k) {
          accumulate(static_cast<std::size_t>(l.inputs[k]), std::move(gs[k]));
        }
        break;
      }
      case LayerKind::Reshape:
      case LayerKind::Flatten:
        accumulate(src, reshape(g, in.c(), in.h(), in.w()));
        break;
      case LayerKind::Dense: {
        auto dg = dense_backward(g, in, dense_params(l, shapes_[src], weights_.layers[idx]));
        wg.layers[idx] = join(dg.grad_weights, dg.grad_bias);
        accumulate(src, std::move(dg.grad_x));
        break;
      }
    }
  }
  return wg;
}

NetworkSpec toy_network(const ToyNetOptions& o) {
  const int reduction = o.cls_avg_pool * o.cls_max_pool;
  if (o.cls_avg_pool < 1 || o.cls_max_pool < 1 || o.height % reduction != 0 ||
      o.width % reduction != 0) {
    throw ValidationError("toy network needs height and width divisible by " +
                          std::to_string(reduction));
  }
  NetworkSpec s;
  s.name = "toy_network";
  auto node = [&](LayerKind kind, std::string name, std::vector<int> inputs) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.inputs = std::move(inputs);
    return l;
  };
  auto conv = [&](std::string name, int in, int ch, int k, int rate, Padding pad) {
    LayerSpec l = node(LayerKind::Conv, std::move(name), {in});
    l.channels = ch;
    l.kernel = k;
    l.dilation = rate;
    l.padding = pad;
    return s.add(l);
  };
  auto bn_relu = [&](const std::string& name, int in) {
    const int b = s.add(node(LayerKind::BatchNorm, name + "_bn", {in}));
    return s.add(node(LayerKind::Relu, name + "_relu", {b}));
  };

  LayerSpec input = node(LayerKind::Input, "input", {});
  input.channels = 1;
  input.out_h = o.height;
  input.out_w = o.width;
  int x = s.add(input);

  LayerSpec centre = node(LayerKind::Scale, "centre", {x});
  centre.scale = 2.0;
  centre.shift = -1.0;
  x = s.add(centre);
  LayerSpec pad = node(LayerKind::ZeroPad, "stem_pad", {x});
  pad.pad = PadAmount{1, 1, 1, 1};
  x = s.add(pad);
  x = conv("stem_conv", x, o.stem_channels, 3, 1, Padding::Valid);
  const int skip = bn_relu("stem", x);

  LayerSpec pool = node(LayerKind::MaxPool, "enc_pool", {skip});
  pool.kernel = 2;
  x = s.add(pool);
  const auto schedule = make_schedule(o.block_depth, o.block_rate);
  for (std::size_t i = 0; i < schedule.rates.size(); ++i) {
    const std::string name = "atrous" + std::to_string(i + 1);
    x = conv(name + "_conv", x, o.block_channels, 3, schedule.rates[i], Padding::Same);
    x = bn_relu(name, x);
  }
  const int encoded = x;

  LayerSpec up = node(LayerKind::Resize, "dec_resize", {encoded});
  up.out_h = o.height;
  up.out_w = o.width;
  x = s.add(up);
  x = s.add(node(LayerKind::Concat, "dec_concat", {skip, x}));
  x = conv("dec_conv", x, o.decoder_channels, 1, 1, Padding::Same);
  x = bn_relu("dec", x);
  x = conv("seg_logits", x, kSegClasses, 3, 1, Padding::Same);
  LayerSpec flat_seg = node(LayerKind::Reshape, "seg_reshape", {x});
  flat_seg.channels = kSegClasses;
  flat_seg.out_h = o.height * o.width;
  flat_seg.out_w = 1;
  x = s.add(flat_seg);
  s.seg_output = s.add(node(LayerKind::Softmax, "seg_softmax", {x}));

  LayerSpec probs = node(LayerKind::Reshape, "cls_unflatten", {s.seg_output});
  probs.channels = kSegClasses;
  probs.out_h = o.height;
  probs.out_w = o.width;
  x = s.add(probs);
  LayerSpec avg = node(LayerKind::AvgPool, "cls_avg_pool", {x});
  avg.kernel = o.cls_avg_pool;
  x = s.add(avg);
  LayerSpec mx = node(LayerKind::MaxPool, "cls_max_pool", {x});
  mx.kernel = o.cls_max_pool;
  x = s.add(mx);
  x = s.add(node(LayerKind::Flatten, "cls_flatten", {x}));
  LayerSpec hidden = node(LayerKind::Dense, "cls_hidden", {x});
  hidden.units = o.hidden_units;
  x = s.add(hidden);
  x = s.add(node(LayerKind::Relu, "cls_relu", {x}));
  LayerSpec head = node(LayerKind::Dense, "cls_head", {x});
  head.units = kClsClasses;
  head.classification_head = true;
  x = s.add(head);
  s.cls_output = s.add(node(LayerKind::Softmax, "cls_softmax", {x}));
  return s;
}

// ---- binary container ----

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'G', 'C', 'N', 'E', 'T', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  int i32() { return static_cast<int>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    const std::uint64_t n = u64();
    if (n > (in_.size() - pos_) / 8) throw FormatError("network file truncated");
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("network file truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const NetworkSpec& spec, const NetworkWeights& weights) {
  if (weights.layers.size() != spec.layers.size()) {
    throw ValidationError("weights do not match network: layer count");
  }
  Writer w;
  w.bytes(std::string_view(kMagic.data(), kMagic.size()));
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(spec.name.size()));
  w.bytes(spec.name);
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const LayerSpec& l : spec.layers) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.name.size()));
    w.bytes(l.name);
    w.u32(static_cast<std::uint32_t>(l.inputs.size()));
    for (int in : l.inputs) w.i32(in);
    w.i32(l.channels);
    w.i32(l.kernel);
    w.i32(l.dilation);
    w.u32(l.padding == Padding::Same ? 0 : 1);
    w.i32(l.pad.top);
    w.i32(l.pad.bottom);
    w.i32(l.pad.left);
    w.i32(l.pad.right);
    w.f64(l.scale);
    w.f64(l.shift);
    w.i32(l.out_h);
    w.i32(l.out_w);
    w.i32(l.units);
    w.u32(l.classification_head ? 1 : 0);
  }
  w.i32(spec.seg_output);
  w.i32(spec.cls_output);
  for (const LayerParams& p : weights.layers) {
    w.vec(p.learnable);
    w.vec(p.state);
  }
  return w.take();
}

Network deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(kMagic.size()) != std::string(kMagic.data(), kMagic.size())) {
    throw FormatError("not a network file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("unsupported network file version " + std::to_string(version));
  }
  NetworkSpec spec;
  spec.name = r.str(r.u32());
  const std::uint32_t count = r.u32();
  if (count > 100000) throw FormatError("implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    const std::uint32_t kind = r.u32();
    if (kind >= kKindNames.size()) throw FormatError("unknown layer kind in network file");
    l.kind = static_cast<LayerKind>(kind);
    l.name = r.str(r.u32());
    const std::uint32_t n_in = r.u32();
    if (n_in > count) throw FormatError("implausible input count");
    for (std::uint32_t k = 0; k < n_in; ++k) l.inputs.push_back(r.i32());
    l.channels = r.i32();
    l.kernel = r.i32();
    l.dilation = r.i32();
    l.padding = r.u32() == 0 ? Padding::Same : Padding::Valid;
    l.pad.top = r.i32();
    l.pad.bottom = r.i32();
    l.pad.left = r.i32();
    l.pad.right = r.i32();
    l.scale = r.f64();
    l.shift = r.f64();
    l.out_h = r.i32();
    l.out_w = r.i32();
    l.units = r.i32();
    l.classification_head = r.u32() != 0;
    spec.layers.push_back(std::move(l));
  }
  spec.seg_output = r.i32();
  spec.cls_output = r.i32();
  NetworkWeights weights;
  weights.layers.resize(count);
  for (auto& p : weights.layers) {
    p.learnable = r.vec();
    p.state = r.vec();
  }
  if (!r.done()) throw FormatError("trailing bytes in network file");
  try {
    return Network(std::move(spec), std::move(weights));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("network file is inconsistent: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net.spec(), net.weights());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace rgc::nn
