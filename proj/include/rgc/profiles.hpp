#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rgc/scan.hpp"

namespace rgc::profiles {

/// Per-column thickness in µm. Invalid columns (no RNFL or no GC-IPL) hold 0.
struct ThicknessProfile {
  std::vector<double> rnfl_um;
  std::vector<double> gcip_um;
  std::vector<double> gcc_um;
  std::vector<bool> valid;
  double axial_scale_um_per_px = kDefaultAxialScaleUm;

  int width() const noexcept { return static_cast<int>(rnfl_um.size()); }
  std::size_t valid_count() const;
};

/// Means and population standard deviations over valid columns.
struct GradeFeatures {
  double mean_rnfl = 0.0;
  double mean_gcip = 0.0;
  double mean_gcc = 0.0;
  double std_rnfl = 0.0;
  double std_gcip = 0.0;
  double std_gcc = 0.0;
  double axial_scale = kDefaultAxialScaleUm;

  friend bool operator==(const GradeFeatures&, const GradeFeatures&) = default;
};

/// ilm = first RNFL row, gcl = last RNFL row + 1, ipl = last GC-IPL row + 1.
/// Columns missing either region are invalid. A mask carries no choroid, so
/// that boundary is NaN.
BoundarySet boundaries_from_mask(const LayerMask& mask);

ThicknessProfile thickness(const LayerMask& mask, double axial_scale_um_per_px);

/// Throws StageError("profile") when no column is valid.
GradeFeatures grade_features(const ThicknessProfile& profile);

/// `col,rnfl_um,gcip_um,gcc_um,valid`
std::string profile_csv(const ThicknessProfile& profile);
ThicknessProfile parse_profile_csv(std::string_view text, double axial_scale_um_per_px);

/// `{mean_rnfl, mean_gcip, mean_gcc, std_rnfl, std_gcip, std_gcc, axial_scale}`
std::string features_json(const GradeFeatures& f);
GradeFeatures parse_features_json(std::string_view text);

}  // namespace rgc::profiles
