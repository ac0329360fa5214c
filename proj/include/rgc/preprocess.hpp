#pragma once

#include <vector>

#include "rgc/scan.hpp"

namespace rgc::preprocess {

enum class Binarization { Otsu, Fixed };

struct PreprocessConfig {
  double smoothing_sigma = 1.5;
  int tau_px = 20;
  Binarization binarize = Binarization::Otsu;
  /// Threshold in [0,1] used when `binarize == Fixed`; foreground is `> t`.
  double fixed_threshold = 0.5;
  int median_window = 5;
  /// Move each transition to the strongest tensor response inside its
  /// foreground run (first maximum for the ILM, last for the choroid).
  bool refine_to_peak = true;
};

void validate(const PreprocessConfig& cfg);

/// Central-difference gradients with replicated borders. gx runs along
/// columns (0°), gy along rows (90°).
struct GradientField {
  RealGrid gx;
  RealGrid gy;
};

/// The three unique entries of the smoothed gradient outer product.
struct StructureTensorField {
  RealGrid sxx;
  RealGrid sxy;
  RealGrid syy;
};

GradientField gradients(const RealGrid& image);

/// Separable Gaussian blur truncated at ceil(3σ), replicated borders.
RealGrid gaussian_blur(const RealGrid& image, double sigma);

StructureTensorField structure_tensor(const Scan& scan, const PreprocessConfig& cfg);

enum class TensorComponent { Sxx, Sxy, Syy };

/// Component with the largest Frobenius norm over the whole image.
TensorComponent most_coherent_component(const StructureTensorField& st);

/// Selected component rescaled to [0,255], quantized to 8 bits and returned
/// as intensities in [0,1]. A constant component gives an all-zero image.
Scan coherent_tensor_image(const StructureTensorField& st);

/// 8-bit Otsu threshold of an image in [0,1]; returned in [0,1].
double otsu_threshold(const RealGrid& image);

/// Per-column row trace with validity flags.
struct Trace {
  std::vector<double> rows;
  std::vector<bool> valid;

  int size() const noexcept { return static_cast<int>(rows.size()); }
  int valid_count() const;
};

struct TracePair {
  Trace ilm;
  Trace choroid;
};

/// Candidate rows before the distance check. A column without foreground has
/// no candidate.
struct TransitionCandidates {
  std::vector<int> first;  // -1 when absent
  std::vector<int> last;
};

TransitionCandidates find_transitions(const Scan& tensor_image, const PreprocessConfig& cfg);

/// Greedy tracker: the first column with a candidate initialises the trace;
/// afterwards a candidate is accepted only within `tau_px` of the last
/// accepted value.
Trace track_with_distance_check(const std::vector<int>& candidates, int tau_px);

TracePair trace_boundaries(const Scan& tensor_image, const PreprocessConfig& cfg);

/// Linear interpolation across invalid gaps, nearest-value extension at the
/// ends. Needs at least two valid columns.
std::vector<double> interpolate_gaps(const Trace& trace);
/// Sliding median with replicated ends.
std::vector<double> median_smooth(const std::vector<double>& values, int window);
/// interpolate_gaps then median_smooth. Every column of the result is valid.
Trace fill_and_smooth(const Trace& trace, int median_window);

/// Binary mask, 1 for round(ilm) <= row <= round(choroid).
LabelGrid retina_mask(int height, const Trace& ilm, const Trace& choroid);

struct RetinaExtraction {
  Scan retina;
  LabelGrid mask;
  TracePair raw_traces;
  TracePair smoothed_traces;
};

/// Structure tensor, coherent image, traces, mask, and pixelwise product.
RetinaExtraction extract_retina(const Scan& scan, const PreprocessConfig& cfg);

}  // namespace rgc::preprocess
