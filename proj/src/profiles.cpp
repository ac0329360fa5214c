#include "rgc/profiles.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "rgc/error.hpp"

namespace rgc::profiles {

using nlohmann::json;

std::size_t ThicknessProfile::valid_count() const {
  std::size_t n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

BoundarySet boundaries_from_mask(const LayerMask& mask) {
  BoundarySet b = BoundarySet::sized(mask.width());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int c = 0; c < mask.width(); ++c) {
    int first_rnfl = -1, last_rnfl = -1, last_gcipl = -1;
    for (int r = 0; r < mask.height(); ++r) {
      const auto v = mask(r, c);
      if (v == static_cast<std::uint8_t>(Label::Rnfl)) {
        if (first_rnfl < 0) first_rnfl = r;
        last_rnfl = r;
      } else if (v == static_cast<std::uint8_t>(Label::Gcipl)) {
        last_gcipl = r;
      }
    }
    const auto i = static_cast<std::size_t>(c);
    b.choroid[i] = nan;
    b.valid[i] = first_rnfl >= 0 && last_gcipl >= 0;
    if (!b.valid[i]) continue;
    b.ilm[i] = first_rnfl;
    b.gcl[i] = last_rnfl + 1;
    b.ipl[i] = last_gcipl + 1;
  }
  return b;
}

ThicknessProfile thickness(const LayerMask& mask, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("axial scale must be positive");
  const BoundarySet b = boundaries_from_mask(mask);
  ThicknessProfile p;
  const auto n = static_cast<std::size_t>(mask.width());
  p.rnfl_um.assign(n, 0.0);
  p.gcip_um.assign(n, 0.0);
  p.gcc_um.assign(n, 0.0);
  p.valid = b.valid;
  p.axial_scale_um_per_px = scale;
  for (std::size_t i = 0; i < n; ++i) {
    if (!b.valid[i]) continue;
    // Boundaries are integer rows, so these differences are exact and
    // gcc = rnfl + gcip holds bit for bit.
    p.rnfl_um[i] = std::abs(b.ilm[i] - b.gcl[i]) * scale;
    p.gcip_um[i] = std::abs(b.gcl[i] - b.ipl[i]) * scale;
    p.gcc_um[i] = p.rnfl_um[i] + p.gcip_um[i];
  }
  return p;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v, const std::vector<bool>& valid) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!valid[i]) continue;
    sum += v[i];
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (valid[i]) sq += (v[i] - mean) * (v[i] - mean);
  }
  return {mean, std::sqrt(sq / static_cast<double>(n))};
}

}  // namespace

GradeFeatures grade_features(const ThicknessProfile& p) {
  if (p.valid.size() != p.rnfl_um.size() || p.gcip_um.size() != p.rnfl_um.size() ||
      p.gcc_um.size() != p.rnfl_um.size()) {
    throw ValidationError("thickness profile columns differ in length");
  }
  if (p.valid_count() == 0) throw StageError("profile", "no valid columns to average");
  GradeFeatures f;
  std::tie(f.mean_rnfl, f.std_rnfl) = mean_std(p.rnfl_um, p.valid);
  std::tie(f.mean_gcip, f.std_gcip) = mean_std(p.gcip_um, p.valid);
  std::tie(f.mean_gcc, f.std_gcc) = mean_std(p.gcc_um, p.valid);
  f.axial_scale = p.axial_scale_um_per_px;
  return f;
}

std::string profile_csv(const ThicknessProfile& p) {
  std::ostringstream os;
  os << "col,rnfl_um,gcip_um,gcc_um,valid\n" << std::setprecision(17);
  for (int c = 0; c < p.width(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    os << c << ',' << p.rnfl_um[i] << ',' << p.gcip_um[i] << ',' << p.gcc_um[i] << ','
       << (p.valid[i] ? 1 : 0) << '\n';
  }
  return os.str();
}

ThicknessProfile parse_profile_csv(std::string_view text, double scale) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "col,rnfl_um,gcip_um,gcc_um,valid") {
    throw FormatError("bad thickness profile header");
  }
  ThicknessProfile p;
  p.axial_scale_um_per_px = scale;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int col = -1, valid = -1;
    double r = 0, g = 0, t = 0;
    char sep[4];
    if (!(row >> col >> sep[0] >> r >> sep[1] >> g >> sep[2] >> t >> sep[3] >> valid) ||
        sep[0] != ',' || sep[1] != ',' || sep[2] != ',' || sep[3] != ',' || col != expected ||
        (valid != 0 && valid != 1)) {
      throw FormatError("bad thickness profile row: " + line);
    }
    p.rnfl_um.push_back(r);
    p.gcip_um.push_back(g);
    p.gcc_um.push_back(t);
    p.valid.push_back(valid == 1);
    ++expected;
  }
  return p;
}

std::string features_json(const GradeFeatures& f) {
  json j = {{"mean_rnfl", f.mean_rnfl}, {"mean_gcip", f.mean_gcip}, {"mean_gcc", f.mean_gcc},
            {"std_rnfl", f.std_rnfl},   {"std_gcip", f.std_gcip},   {"std_gcc", f.std_gcc},
            {"axial_scale", f.axial_scale}};
  return j.dump(2) + "\n";
}

GradeFeatures parse_features_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    GradeFeatures f;
    f.mean_rnfl = j.at("mean_rnfl").get<double>();
    f.mean_gcip = j.at("mean_gcip").get<double>();
    f.mean_gcc = j.at("mean_gcc").get<double>();
    f.std_rnfl = j.at("std_rnfl").get<double>();
    f.std_gcip = j.at("std_gcip").get<double>();
    f.std_gcc = j.at("std_gcc").get<double>();
    f.axial_scale = j.value("axial_scale", kDefaultAxialScaleUm);
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad features JSON: ") + e.what());
  }
}

}  // namespace rgc::profiles
