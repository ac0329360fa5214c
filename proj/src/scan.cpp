#include "rgc/scan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "rgc/error.hpp"

namespace rgc {

Scan::Scan(RealGrid pixels, double axial_scale_um_per_px, std::string id)
    : pixels_(std::move(pixels)), axial_scale_(axial_scale_um_per_px), id_(std::move(id)) {
  if (pixels_.height() <= 0 || pixels_.width() <= 0) {
    throw ValidationError("scan must have positive dimensions");
  }
  if (!(axial_scale_ > 0.0) || !std::isfinite(axial_scale_)) {
    throw ValidationError("axial scale must be positive");
  }
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("scan intensities must lie in [0,1]");
    }
  }
}

LayerMask::LayerMask(LabelGrid labels) : labels_(std::move(labels)) {
  for (auto v : labels_.values()) {
    if (v > 2) {
      throw ValidationError("mask label " + std::to_string(v) + " outside {0,1,2}");
    }
  }
}

std::size_t LayerMask::count(Label label) const {
  const auto target = static_cast<std::uint8_t>(label);
  return static_cast<std::size_t>(
      std::count(labels_.values().begin(), labels_.values().end(), target));
}

std::size_t LayerMask::gcc_count() const {
  return static_cast<std::size_t>(std::count_if(labels_.values().begin(), labels_.values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

bool LayerMask::ordered(const LabelGrid& labels) {
  for (int c = 0; c < labels.width(); ++c) {
    bool seen_gcipl = false;
    for (int r = 0; r < labels.height(); ++r) {
      const auto v = labels(r, c);
      if (v == 2) seen_gcipl = true;
      if (v == 1 && seen_gcipl) return false;
    }
  }
  return true;
}

BoundarySet BoundarySet::sized(int width) {
  BoundarySet b;
  const auto n = static_cast<std::size_t>(width);
  b.ilm.assign(n, 0.0);
  b.gcl.assign(n, 0.0);
  b.ipl.assign(n, 0.0);
  b.choroid.assign(n, 0.0);
  b.valid.assign(n, false);
  return b;
}

std::string_view to_string(GradeLabel grade) {
  switch (grade) {
    case GradeLabel::Healthy:
      return "healthy";
    case GradeLabel::EarlyGlaucoma:
      return "early";
    case GradeLabel::AdvancedGlaucoma:
      return "advanced";
  }
  return "unknown";
}

std::optional<GradeLabel> parse_grade(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (s == "healthy" || s == "h" || s == "0") return GradeLabel::Healthy;
  if (s == "early" || s == "eg" || s == "early_glaucoma" || s == "1") {
    return GradeLabel::EarlyGlaucoma;
  }
  if (s == "advanced" || s == "ag" || s == "advanced_glaucoma" || s == "2") {
    return GradeLabel::AdvancedGlaucoma;
  }
  return std::nullopt;
}

}  // namespace rgc
