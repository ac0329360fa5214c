#include "rgc/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "rgc/error.hpp"

namespace rgc::preprocess {
namespace {

double frobenius(const RealGrid& g) {
  double s = 0.0;
  for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

void validate(const PreprocessConfig& cfg) {
  if (!(cfg.smoothing_sigma > 0.0)) throw ValidationError("smoothing sigma must be positive");
  if (cfg.tau_px < 1) throw ValidationError("tau must be at least 1 px");
  if (cfg.median_window < 1 || cfg.median_window % 2 == 0) {
    throw ValidationError("median window must be an odd positive integer");
  }
  if (cfg.binarize == Binarization::Fixed &&
      !(cfg.fixed_threshold >= 0.0 && cfg.fixed_threshold <= 1.0)) {
    throw ValidationError("fixed threshold must lie in [0,1]");
  }
}

GradientField gradients(const RealGrid& image) {
  const int h = image.height();
  const int w = image.width();
  GradientField g{RealGrid(h, w), RealGrid(h, w)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int cl = std::max(c - 1, 0), cr = std::min(c + 1, w - 1);
      const int ru = std::max(r - 1, 0), rd = std::min(r + 1, h - 1);
      g.gx(r, c) = 0.5 * (image(r, cr) - image(r, cl));
      g.gy(r, c) = 0.5 * (image(rd, c) - image(ru, c));
    }
  }
  return g;
}

RealGrid gaussian_blur(const RealGrid& image, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = image.height();
  const int w = image.width();
  RealGrid tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += k[static_cast<std::size_t>(i + radius)] * image(r, std::clamp(c + i, 0, w - 1));
      }
      tmp(r, c) = s;
    }
  }
  RealGrid out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += k[static_cast<std::size_t>(i + radius)] * tmp(std::clamp(r + i, 0, h - 1), c);
      }
      out(r, c) = s;
    }
  }
  return out;
}

StructureTensorField structure_tensor(const Scan& scan, const PreprocessConfig& cfg) {
  validate(cfg);
  const GradientField g = gradients(scan.pixels());
  const int h = scan.height();
  const int w = scan.width();
  RealGrid xx(h, w), xy(h, w), yy(h, w);
  for (std::size_t i = 0; i < xx.size(); ++i) {
    const double gx = g.gx.storage()[i];
    const double gy = g.gy.storage()[i];
    xx.storage()[i] = gx * gx;
    xy.storage()[i] = gx * gy;
    yy.storage()[i] = gy * gy;
  }
  return {gaussian_blur(xx, cfg.smoothing_sigma), gaussian_blur(xy, cfg.smoothing_sigma),
          gaussian_blur(yy, cfg.smoothing_sigma)};
}

TensorComponent most_coherent_component(const StructureTensorField& st) {
  const std::array<double, 3> norms{frobenius(st.sxx), frobenius(st.sxy), frobenius(st.syy)};
  const auto best = std::max_element(norms.begin(), norms.end()) - norms.begin();
  return static_cast<TensorComponent>(best);
}

Scan coherent_tensor_image(const StructureTensorField& st) {
  const TensorComponent which = most_coherent_component(st);
  const RealGrid& src = which == TensorComponent::Sxx   ? st.sxx
                        : which == TensorComponent::Sxy ? st.sxy
                                                        : st.syy;
  const auto [lo_it, hi_it] = std::minmax_element(src.values().begin(), src.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  RealGrid out(src.height(), src.width(), 0.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double byte = std::round(255.0 * (src.storage()[i] - lo) / (hi - lo));
      out.storage()[i] = byte / 255.0;
    }
  }
  return Scan(std::move(out), 1.0, "tensor");
}

double otsu_threshold(const RealGrid& image) {
  std::array<double, 256> hist{};
  for (double v : image.values()) {
    const auto bin = static_cast<std::size_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
    hist[bin] += 1.0;
  }
  const double total = static_cast<double>(image.size());
  double sum_all = 0.0;
  for (std::size_t i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];

  double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
  std::size_t best = 0;
  for (std::size_t t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best_var) {
      best_var = between;
      best = t;
    }
  }
  if (best_var < 0.0) {
    // Single-valued image: threshold at that value so nothing is foreground.
    const auto it = std::find_if(hist.begin(), hist.end(), [](double v) { return v > 0.0; });
    best = it == hist.end() ? 0 : static_cast<std::size_t>(it - hist.begin());
  }
  return static_cast<double>(best) / 255.0;
}

int Trace::valid_count() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), true));
}

TransitionCandidates find_transitions(const Scan& tensor_image, const PreprocessConfig& cfg) {
  validate(cfg);
  const RealGrid& img = tensor_image.pixels();
  const double t = cfg.binarize == Binarization::Otsu ? otsu_threshold(img) : cfg.fixed_threshold;
  const int h = img.height();
  const int w = img.width();
  TransitionCandidates out;
  out.first.assign(static_cast<std::size_t>(w), -1);
  out.last.assign(static_cast<std::size_t>(w), -1);
  // Foreground compares on the 8-bit scale so the threshold and image agree.
  const long t_byte = std::lround(t * 255.0);
  auto fg = [&](int r, int c) { return std::lround(img(r, c) * 255.0) > t_byte; };

  for (int c = 0; c < w; ++c) {
    int first = -1;
    for (int r = 0; r < h; ++r) {
      if (fg(r, c)) {
        first = r;
        break;
      }
    }
    if (first < 0) continue;
    int last = h - 1;
    while (!fg(last, c)) --last;

    if (cfg.refine_to_peak) {
      int peak = first;
      for (int r = first; r < h && fg(r, c); ++r) {
        if (img(r, c) > img(peak, c)) peak = r;
      }
      first = peak;
      peak = last;
      for (int r = last; r >= 0 && fg(r, c); --r) {
        if (img(r, c) > img(peak, c)) peak = r;
      }
      last = peak;
    }
    out.first[static_cast<std::size_t>(c)] = first;
    out.last[static_cast<std::size_t>(c)] = last;
  }
  return out;
}

Trace track_with_distance_check(const std::vector<int>& candidates, int tau_px) {
  Trace tr;
  tr.rows.assign(candidates.size(), 0.0);
  tr.valid.assign(candidates.size(), false);
  bool have_anchor = false;
  int anchor = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const int p = candidates[c];
    if (p < 0) continue;
    if (!have_anchor || std::abs(p - anchor) <= tau_px) {
      anchor = p;
      have_anchor = true;
      tr.rows[c] = p;
      tr.valid[c] = true;
    }
  }
  return tr;
}

TracePair trace_boundaries(const Scan& tensor_image, const PreprocessConfig& cfg) {
  const TransitionCandidates cand = find_transitions(tensor_image, cfg);
  return {track_with_distance_check(cand.first, cfg.tau_px),
          track_with_distance_check(cand.last, cfg.tau_px)};
}

std::vector<double> interpolate_gaps(const Trace& trace) {
  const int n = trace.size();
  std::vector<int> idx;
  for (int c = 0; c < n; ++c) {
    if (trace.valid[static_cast<std::size_t>(c)]) idx.push_back(c);
  }
  if (idx.size() < 2) {
    throw StageError("preprocess", "boundary tracing failed: fewer than 2 valid columns (" +
                                       std::to_string(idx.size()) + " of " + std::to_string(n) +
                                       ")");
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto at = [&](int c) { return trace.rows[static_cast<std::size_t>(c)]; };
  for (int c = 0; c < idx.front(); ++c) out[static_cast<std::size_t>(c)] = at(idx.front());
  for (int c = idx.back(); c < n; ++c) out[static_cast<std::size_t>(c)] = at(idx.back());
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    const int a = idx[k], b = idx[k + 1];
    for (int c = a; c < b; ++c) {
      const double t = static_cast<double>(c - a) / (b - a);
      out[static_cast<std::size_t>(c)] = at(a) + t * (at(b) - at(a));
    }
  }
  return out;
}

std::vector<double> median_smooth(const std::vector<double>& values, int window) {
  if (window < 1 || window % 2 == 0) throw ValidationError("median window must be odd");
  const int n = static_cast<int>(values.size());
  const int half = window / 2;
  std::vector<double> out(values.size());
  std::vector<double> buf(static_cast<std::size_t>(window));
  for (int c = 0; c < n; ++c) {
    for (int k = -half; k <= half; ++k) {
      buf[static_cast<std::size_t>(k + half)] = values[static_cast<std::size_t>(std::clamp(c + k, 0, n - 1))];
    }
    std::nth_element(buf.begin(), buf.begin() + half, buf.end());
    out[static_cast<std::size_t>(c)] = buf[static_cast<std::size_t>(half)];
  }
  return out;
}

Trace fill_and_smooth(const Trace& trace, int median_window) {
  Trace out;
  out.rows = median_smooth(interpolate_gaps(trace), median_window);
  out.valid.assign(out.rows.size(), true);
  return out;
}

LabelGrid retina_mask(int height, const Trace& ilm, const Trace& choroid) {
  const int w = ilm.size();
  if (choroid.size() != w) throw ValidationError("trace widths differ");
  LabelGrid mask(height, w, 0);
  for (int c = 0; c < w; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const int top = std::max(0, static_cast<int>(std::lround(ilm.rows[i])));
    const int bottom = std::min(height - 1, static_cast<int>(std::lround(choroid.rows[i])));
    for (int r = top; r <= bottom; ++r) mask(r, c) = 1;
  }
  return mask;
}

RetinaExtraction extract_retina(const Scan& scan, const PreprocessConfig& cfg) {
  validate(cfg);
  RetinaExtraction out;
  const Scan tensor_img = coherent_tensor_image(structure_tensor(scan, cfg));
  out.raw_traces = trace_boundaries(tensor_img, cfg);
  out.smoothed_traces.ilm = fill_and_smooth(out.raw_traces.ilm, cfg.median_window);
  out.smoothed_traces.choroid = fill_and_smooth(out.raw_traces.choroid, cfg.median_window);
  out.mask = retina_mask(scan.height(), out.smoothed_traces.ilm, out.smoothed_traces.choroid);
  RealGrid px = scan.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    px.storage()[i] *= static_cast<double>(out.mask.storage()[i]);
  }
  out.retina = Scan(std::move(px), scan.axial_scale(), scan.id());
  return out;
}

}  // namespace rgc::preprocess
