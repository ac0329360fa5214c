#pragma once

#include <vector>

#include "rgc/nn/network.hpp"
#include "rgc/scan.hpp"

namespace rgc::segment {

/// Per-pixel argmax of sample `n` of a segmentation output whose planes hold
/// h·w values in row-major order.
LabelGrid argmax_labels(const nn::Tensor4& seg, int n, int h, int w);

/// Makes a raw label map satisfy the per-column ordering: keeps the longest
/// RNFL run and the longest GC-IPL run that starts below it, clears the rest.
LayerMask regularize(const LabelGrid& raw);

struct Prediction {
  LayerMask mask;
  double glaucoma_probability = 0.0;
};

/// Inference in batches of `batch_size`; scans must match the network input.
std::vector<Prediction> predict(const nn::Network& net, const std::vector<Scan>& scans,
                                int batch_size = 4);

}  // namespace rgc::segment
