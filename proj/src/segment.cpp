#include "rgc/segment.hpp"

#include <algorithm>

#include "rgc/error.hpp"
#include "rgc/train.hpp"

namespace rgc::segment {
namespace {

struct Run {
  int start = -1;
  int length = 0;
};

// Longest run of `label` in column `c` starting at or below `from`; the first
// wins ties.
Run longest_run(const LabelGrid& g, int c, std::uint8_t label, int from) {
  Run best, cur;
  for (int r = from; r < g.height(); ++r) {
    if (g(r, c) == label) {
      if (cur.length == 0) cur.start = r;
      ++cur.length;
      if (cur.length > best.length) best = cur;
    } else {
      cur = Run{};
    }
  }
  return best;
}

}  // namespace

LabelGrid argmax_labels(const nn::Tensor4& seg, int n, int h, int w) {
  if (seg.shape().plane() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw ValidationError("segmentation output does not cover a " + std::to_string(h) + "x" +
                          std::to_string(w) + " image");
  }
  LabelGrid out(h, w, 0);
  auto labels = out.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int best = 0;
    for (int c = 1; c < seg.c(); ++c) {
      if (seg.plane(n, c)[i] > seg.plane(n, best)[i]) best = c;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

LayerMask regularize(const LabelGrid& raw) {
  LabelGrid out(raw.height(), raw.width(), 0);
  for (int c = 0; c < raw.width(); ++c) {
    const Run rnfl = longest_run(raw, c, 1, 0);
    const Run gcipl = longest_run(raw, c, 2, rnfl.length > 0 ? rnfl.start + rnfl.length : 0);
    for (int r = rnfl.start; r >= 0 && r < rnfl.start + rnfl.length; ++r) out(r, c) = 1;
    for (int r = gcipl.start; r >= 0 && r < gcipl.start + gcipl.length; ++r) out(r, c) = 2;
  }
  return LayerMask(std::move(out));
}

std::vector<Prediction> predict(const nn::Network& net, const std::vector<Scan>& scans,
                                int batch_size) {
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  std::vector<Prediction> out;
  out.reserve(scans.size());
  for (std::size_t first = 0; first < scans.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t last = std::min(scans.size(), first + static_cast<std::size_t>(batch_size));
    std::vector<const Scan*> batch;
    for (std::size_t i = first; i < last; ++i) batch.push_back(&scans[i]);
    const auto y = net.predict(train::input_batch(batch));
    for (std::size_t i = first; i < last; ++i) {
      const int n = static_cast<int>(i - first);
      Prediction p;
      p.mask = regularize(argmax_labels(y.seg, n, scans[i].height(), scans[i].width()));
      if (y.cls.size() > 0) p.glaucoma_probability = y.cls.at(n, 1, 0, 0);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace rgc::segment
