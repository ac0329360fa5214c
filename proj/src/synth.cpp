#include "rgc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include "rgc/error.hpp"
#include "rgc/random.hpp"

namespace rgc {
namespace {

int round_row(double v) { return static_cast<int>(std::lround(v)); }

double cup_dip(const SynthConfig& cfg, int col) {
  if (!cfg.cup) return 0.0;
  const double half = cfg.cup->width / 2.0;
  const double d = std::abs(col - cfg.cup->center_col);
  if (d >= half) return 0.0;
  return cfg.cup->depth_px * 0.5 * (1.0 + std::cos(std::numbers::pi * d / half));
}

bool in_cup(const SynthConfig& cfg, int col) {
  if (!cfg.cup) return false;
  return std::abs(col - cfg.cup->center_col) < cfg.cup->width / 2.0;
}

struct ColumnLayout {
  int surface;    // first tissue row
  int gcl;        // first GC-IPL row
  int ipl;        // first outer-retina row
  int rpe_top;
  int choroid_top;
  int choroid_end;  // one past the last choroid row
  bool cupped;
};

ColumnLayout layout_column(const SynthConfig& cfg, int col) {
  const double ilm = analytic_ilm(cfg, col);
  ColumnLayout l{};
  l.cupped = in_cup(cfg, col);
  const double rpe_top = ilm + cfg.rnfl_thickness_px + cfg.gcipl_thickness_px + cfg.outer_retina_px;
  l.rpe_top = round_row(rpe_top);
  l.choroid_top = round_row(rpe_top + cfg.rpe_px);
  l.choroid_end = round_row(rpe_top + cfg.rpe_px + cfg.choroid_px);
  if (l.cupped) {
    l.surface = round_row(ilm + cup_dip(cfg, col));
    l.gcl = l.surface;
    l.ipl = l.surface;
  } else {
    l.surface = round_row(ilm);
    l.gcl = round_row(ilm + cfg.rnfl_thickness_px);
    l.ipl = round_row(ilm + cfg.rnfl_thickness_px + cfg.gcipl_thickness_px);
  }
  return l;
}

}  // namespace

GradeLabel grade_from_rnfl(double rnfl_um) {
  if (rnfl_um < kEarlyAdvancedRnflMidpointUm) return GradeLabel::AdvancedGlaucoma;
  if (rnfl_um < kHealthyEarlyRnflMidpointUm) return GradeLabel::EarlyGlaucoma;
  return GradeLabel::Healthy;
}

double analytic_ilm(const SynthConfig& cfg, int col) {
  if (cfg.ilm_amplitude_px == 0.0) return cfg.ilm_offset_px;
  return cfg.ilm_offset_px +
         cfg.ilm_amplitude_px *
             std::sin(2.0 * std::numbers::pi * col / cfg.ilm_period_px + cfg.ilm_phase_rad);
}

void validate(const SynthConfig& cfg) {
  if (cfg.height <= 0 || cfg.width <= 0) throw ValidationError("image size must be positive");
  if (!(cfg.axial_scale_um_per_px > 0.0)) throw ValidationError("axial scale must be positive");
  if (!(cfg.rnfl_thickness_px > 0.0) || !(cfg.gcipl_thickness_px > 0.0)) {
    throw ValidationError("layer thicknesses must be positive");
  }
  if (cfg.outer_retina_px < 0.0 || cfg.rpe_px < 0.0 || cfg.choroid_px < 0.0) {
    throw ValidationError("band thicknesses must be non-negative");
  }
  if (cfg.ilm_amplitude_px != 0.0 && !(cfg.ilm_period_px > 0.0)) {
    throw ValidationError("ILM period must be positive");
  }
  if (cfg.noise_std < 0.0) throw ValidationError("noise_std must be non-negative");
  if (cfg.cup) {
    if (cfg.cup->width <= 0) throw ValidationError("cup width must be positive");
    if (cfg.cup->depth_px < 0.0 ||
        cfg.cup->depth_px >=
            cfg.rnfl_thickness_px + cfg.gcipl_thickness_px + cfg.outer_retina_px) {
      throw ValidationError("cup depth must stay above the RPE");
    }
  }
  const double stack = cfg.rnfl_thickness_px + cfg.gcipl_thickness_px + cfg.outer_retina_px +
                       cfg.rpe_px + cfg.choroid_px;
  for (int c = 0; c < cfg.width; ++c) {
    const double top = analytic_ilm(cfg, c);
    if (round_row(top) < 0) {
      throw ValidationError("ILM leaves the image at column " + std::to_string(c));
    }
    if (round_row(top + stack) > cfg.height) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "layer stack of %.1f px below row %.1f exceeds image height %d at column %d",
                    stack, top, cfg.height, c);
      throw ValidationError(buf);
    }
  }
}

SyntheticSample generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  RealGrid pixels(cfg.height, cfg.width, TissueIntensity::kVitreous);
  LabelGrid labels(cfg.height, cfg.width, 0);
  BoundarySet bounds = BoundarySet::sized(cfg.width);

  for (int c = 0; c < cfg.width; ++c) {
    const ColumnLayout l = layout_column(cfg, c);
    for (int r = 0; r < cfg.height; ++r) {
      double v = TissueIntensity::kVitreous;
      if (r < l.surface) {
        v = TissueIntensity::kVitreous;
      } else if (l.cupped && r < l.rpe_top) {
        v = TissueIntensity::kCupTissue;
      } else if (r < l.gcl) {
        v = TissueIntensity::kRnfl;
        labels(r, c) = 1;
      } else if (r < l.ipl) {
        v = TissueIntensity::kGcipl;
        labels(r, c) = 2;
      } else if (r < l.rpe_top) {
        v = TissueIntensity::kOuterRetina;
      } else if (r < l.choroid_top) {
        v = TissueIntensity::kRpe;
      } else if (r < l.choroid_end) {
        v = TissueIntensity::kChoroid;
      } else {
        v = TissueIntensity::kSclera;
      }
      pixels(r, c) = v;
    }
    const auto i = static_cast<std::size_t>(c);
    bounds.ilm[i] = l.surface;
    bounds.gcl[i] = l.gcl;
    bounds.ipl[i] = l.ipl;
    bounds.choroid[i] = l.choroid_end - 1;
    bounds.valid[i] = !l.cupped;
  }

  if (cfg.noise_std > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (double& v : pixels.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }

  SyntheticSample out;
  out.grade = cfg.grade ? *cfg.grade
                        : grade_from_rnfl(cfg.rnfl_thickness_px * cfg.axial_scale_um_per_px);
  out.scan = Scan(std::move(pixels), cfg.axial_scale_um_per_px);
  out.mask = LayerMask(std::move(labels));
  out.boundaries = std::move(bounds);
  return out;
}

SynthConfig sample_cohort_config(GradeLabel grade, const CohortOptions& opts,
                                 std::uint64_t scan_seed) {
  std::mt19937_64 rng(scan_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto draw = [&](double mean, double sd) {
    return mean + sd * std::clamp(gauss(rng), -2.5, 2.5);
  };

  const CohortStats stats = grade == GradeLabel::Healthy         ? kHealthyCohort
                            : grade == GradeLabel::EarlyGlaucoma ? kEarlyCohort
                                                                 : kAdvancedCohort;
  const double h_scale = opts.height / 256.0;
  SynthConfig cfg;
  cfg.height = opts.height;
  cfg.width = opts.width;
  cfg.axial_scale_um_per_px = opts.axial_scale_um_per_px;
  cfg.ilm_offset_px = h_scale * (40.0 + uniform(-4.0, 4.0));
  cfg.ilm_amplitude_px = uniform(0.0, 6.0) * h_scale;
  cfg.ilm_period_px = uniform(1.2, 2.4) * opts.width;
  cfg.ilm_phase_rad = uniform(0.0, 2.0 * std::numbers::pi);
  cfg.rnfl_thickness_px = std::max(draw(stats.rnfl_mean_um, stats.rnfl_std_um), 10.0) /
                          opts.axial_scale_um_per_px;
  cfg.gcipl_thickness_px = std::max(draw(stats.gcipl_mean_um, stats.gcipl_std_um), 8.0) /
                           opts.axial_scale_um_per_px;
  cfg.outer_retina_px = 40.0 * h_scale;
  cfg.rpe_px = 4.0 * h_scale;
  cfg.choroid_px = 16.0 * h_scale;
  if (grade != GradeLabel::Healthy) {
    const bool advanced = grade == GradeLabel::AdvancedGlaucoma;
    CupRegion cup;
    const double frac = advanced ? uniform(0.28, 0.36) : uniform(0.18, 0.26);
    cup.width = std::max(2, static_cast<int>(std::lround(frac * opts.width)));
    cup.center_col = opts.width / 2 + static_cast<int>(std::lround(uniform(-0.05, 0.05) * opts.width));
    cup.depth_px = (advanced ? 14.0 : 9.0) * h_scale;
    cfg.cup = cup;
  }
  cfg.noise_std = opts.noise_std;
  cfg.seed = splitmix64(scan_seed ^ 0x5eedULL);
  cfg.grade = grade;
  return cfg;
}

std::vector<SyntheticSample> generate_cohorts(const std::vector<CohortSpec>& cohorts,
                                              const CohortOptions& opts) {
  std::vector<SyntheticSample> out;
  std::uint64_t index = 0;
  for (const auto& cohort : cohorts) {
    for (int k = 0; k < cohort.count; ++k, ++index) {
      const std::uint64_t seed = splitmix64(opts.seed * 0x9E3779B97F4A7C15ULL + index);
      auto sample = generate_synthetic(sample_cohort_config(cohort.grade, opts, seed));
      char id[32];
      std::snprintf(id, sizeof id, "syn_%04llu", static_cast<unsigned long long>(index));
      sample.scan = Scan(sample.scan.pixels(), sample.scan.axial_scale(), id);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace rgc
