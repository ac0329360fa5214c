#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rgc/nn/layers.hpp"
#include "rgc/nn/tensor.hpp"

namespace rgc::nn {

enum class LayerKind : std::uint32_t {
  Input = 0,
  Conv = 1,
  MaxPool = 2,
  AvgPool = 3,
  BatchNorm = 4,
  Relu = 5,
  Softmax = 6,
  ZeroPad = 7,
  Scale = 8,
  Resize = 9,
  Concat = 10,
  Reshape = 11,
  Flatten = 12,
  Dense = 13,
};

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// One node of the network graph. Inputs refer to earlier nodes by index.
/// Only the fields relevant to `kind` are read.
struct LayerSpec {
  LayerKind kind = LayerKind::Input;
  std::string name;
  std::vector<int> inputs;

  int channels = 0;  // Conv out_ch, Input channels
  int kernel = 3;    // Conv kernel (square), pool window
  int dilation = 1;
  Padding padding = Padding::Same;
  PadAmount pad;
  double scale = 1.0;  // Scale lambda
  double shift = 0.0;
  int out_h = 0;  // Resize target / Reshape
  int out_w = 0;
  int units = 0;  // Dense
  /// Dense layer acting as the scan-level classification head.
  bool classification_head = false;
};

/// Graph with one input node, a per-pixel segmentation output, and a
/// per-scan classification output that share the encoder.
struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  int seg_output = -1;
  int cls_output = -1;

  int add(LayerSpec layer);
};

/// Per-sample (c, h, w) of every node; throws ValidationError on any mismatch.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

struct ParameterCount {
  std::size_t learnable = 0;
  std::size_t non_learnable = 0;
  std::size_t total() const noexcept { return learnable + non_learnable; }
  friend bool operator==(const ParameterCount&, const ParameterCount&) = default;
};

/// Shape-checks the spec first. Convolutions: kh·kw·Cin·Cout + Cout; batch
/// norm: 2C learnable + 2C running statistics; dense: in·units + units.
ParameterCount count_parameters(const NetworkSpec& spec);

/// Parameters of one layer. `learnable` layout: conv weights then bias; batch
/// norm gamma then beta; dense weights then bias. `state` holds batch-norm
/// running mean then running variance.
struct LayerParams {
  std::vector<double> learnable;
  std::vector<double> state;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkWeights {
  std::vector<LayerParams> layers;

  std::size_t learnable_count() const;
  std::size_t state_count() const;
  friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases, unit
/// batch-norm scale and variance.
NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed);

enum class Mode { Inference, Training };

struct NetworkOutput {
  Tensor4 seg;  // N × classes × H × W probabilities
  Tensor4 cls;  // N × classes × 1 × 1 probabilities
};

/// Activations and per-layer auxiliaries needed for the backward pass.
struct ForwardCache {
  std::vector<Tensor4> activations;
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<BatchNormCache> batch_norm;
  bool filled = false;
};

/// Gradients of every layer's learnable parameters, parallel to
/// NetworkWeights::layers.
struct WeightGrads {
  std::vector<std::vector<double>> layers;
  Tensor4 grad_input;
};

class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, NetworkWeights weights);
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const NetworkWeights& weights() const noexcept { return weights_; }
  NetworkWeights& weights() noexcept { return weights_; }
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  Shape input_shape(int batch) const;

  /// Training mode updates batch-norm running statistics.
  NetworkOutput forward(const Tensor4& x, Mode mode, ForwardCache* cache);
  NetworkOutput predict(const Tensor4& x) const;

  /// Backpropagates gradients on the two output probability tensors. Either
  /// may be empty, meaning zero. Throws if `cache` is not filled.
  WeightGrads backward(const ForwardCache& cache, const Tensor4& grad_seg,
                       const Tensor4& grad_cls) const;

 private:
  NetworkOutput run(const Tensor4& x, Mode mode, ForwardCache* cache, NetworkWeights& w) const;

  NetworkSpec spec_;
  NetworkWeights weights_;
  std::vector<Shape> shapes_;
};

/// Scaled-down hybrid segmentation/classification network with the full layer
/// family composition: zero-pad stem, a max-pooled atrous block on a variable
/// dilation schedule, bilinear-resize decoder with a skip concatenation, a
/// per-pixel softmax over {background, RNFL, GC-IPL}, and a classification
/// head over {healthy, glaucoma} that average/max pools the per-pixel
/// probabilities, then flatten → dense → relu → dense.
struct ToyNetOptions {
  int height = 256;
  int width = 128;
  int stem_channels = 8;
  int block_channels = 12;
  int block_depth = 3;
  int block_rate = 2;
  int decoder_channels = 8;
  int cls_avg_pool = 8;
  int cls_max_pool = 4;
  int hidden_units = 96;
};

NetworkSpec toy_network(const ToyNetOptions& opts = {});

inline constexpr int kSegClasses = 3;
inline constexpr int kClsClasses = 2;

// Binary container: "RGCNET\0\0", u32 version, network name, u32 layer count, layer table,
// u32 seg/cls output indices, then per layer u64 counts and raw f64 values.
// All integers and floats little-endian.
std::vector<std::uint8_t> serialize(const NetworkSpec& spec, const NetworkWeights& weights);
Network deserialize(std::span<const std::uint8_t> bytes);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace rgc::nn
