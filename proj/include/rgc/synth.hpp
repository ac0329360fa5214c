#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rgc/scan.hpp"

namespace rgc {

/// Reference thickness statistics (µm) per grade. Early and advanced values
/// are the published cohort means; the healthy cohort is a synthetic choice
/// placed above the early cohort.
struct CohortStats {
  double rnfl_mean_um;
  double rnfl_std_um;
  double gcipl_mean_um;
  double gcipl_std_um;
};

inline constexpr CohortStats kEarlyCohort{93.50, 9.84, 62.23, 5.67};
inline constexpr CohortStats kAdvancedCohort{69.46, 5.17, 33.96, 7.53};
inline constexpr CohortStats kHealthyCohort{108.0, 6.0, 74.0, 5.0};

/// Midpoint of the early and advanced RNFL means.
inline constexpr double kEarlyAdvancedRnflMidpointUm =
    (kEarlyCohort.rnfl_mean_um + kAdvancedCohort.rnfl_mean_um) / 2.0;
inline constexpr double kHealthyEarlyRnflMidpointUm =
    (kHealthyCohort.rnfl_mean_um + kEarlyCohort.rnfl_mean_um) / 2.0;

/// Grade assigned from an RNFL thickness by nearest cohort mean.
GradeLabel grade_from_rnfl(double rnfl_um);

struct CupRegion {
  int center_col = 0;
  int width = 0;
  double depth_px = 10.0;
};

struct SynthConfig {
  int height = 256;
  int width = 128;
  double axial_scale_um_per_px = kDefaultAxialScaleUm;

  double ilm_offset_px = 40.0;
  double ilm_amplitude_px = 0.0;
  double ilm_period_px = 200.0;
  double ilm_phase_rad = 0.0;

  double rnfl_thickness_px = 36.0;
  double gcipl_thickness_px = 24.0;
  double outer_retina_px = 40.0;
  double rpe_px = 4.0;
  double choroid_px = 16.0;

  std::optional<CupRegion> cup;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  /// Overrides the thickness-derived grade (cohort generation sets this).
  std::optional<GradeLabel> grade;
};

/// Rendering intensities for each tissue band.
struct TissueIntensity {
  static constexpr double kVitreous = 0.05;
  static constexpr double kRnfl = 0.85;
  static constexpr double kGcipl = 0.50;
  static constexpr double kOuterRetina = 0.28;
  static constexpr double kRpe = 0.95;
  static constexpr double kChoroid = 0.68;
  static constexpr double kCupTissue = 0.62;
  static constexpr double kSclera = 0.05;
};

struct SyntheticSample {
  Scan scan;
  LayerMask mask;
  /// ilm is the retinal surface row and choroid the last choroid row for every
  /// column; `valid` marks columns where both segmented layers are present.
  BoundarySet boundaries;
  GradeLabel grade = GradeLabel::Healthy;
};

/// Analytic ILM surface row for a column (before cupping).
double analytic_ilm(const SynthConfig& cfg, int col);

void validate(const SynthConfig& cfg);
SyntheticSample generate_synthetic(const SynthConfig& cfg);

struct CohortSpec {
  GradeLabel grade = GradeLabel::Healthy;
  int count = 0;
};

struct CohortOptions {
  int height = 256;
  int width = 128;
  double axial_scale_um_per_px = kDefaultAxialScaleUm;
  double noise_std = 0.03;
  std::uint64_t seed = 1;
};

/// Draws thickness, waveform, and cup parameters for one scan of a cohort.
SynthConfig sample_cohort_config(GradeLabel grade, const CohortOptions& opts,
                                 std::uint64_t scan_seed);

/// Scans for each cohort in order, fully determined by `opts.seed`.
std::vector<SyntheticSample> generate_cohorts(const std::vector<CohortSpec>& cohorts,
                                              const CohortOptions& opts);

}  // namespace rgc
