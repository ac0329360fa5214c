#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rgc {

/// Row-major 2-D grid. Rows run along the axial (depth) direction, columns are
/// A-scans.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}
  Grid(int height, int width, std::vector<T> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
using LabelGrid = Grid<std::uint8_t>;

/// Default axial pixel pitch. The source device scale is not published, so
/// reports flag it as an assumption whenever it is used.
inline constexpr double kDefaultAxialScaleUm = 2.6;

/// Grayscale B-scan with intensities in [0,1].
class Scan {
 public:
  Scan() = default;
  Scan(RealGrid pixels, double axial_scale_um_per_px, std::string id = {});

  const RealGrid& pixels() const noexcept { return pixels_; }
  int height() const noexcept { return pixels_.height(); }
  int width() const noexcept { return pixels_.width(); }
  double axial_scale() const noexcept { return axial_scale_; }
  const std::string& id() const noexcept { return id_; }
  double operator()(int row, int col) const { return pixels_(row, col); }

 private:
  RealGrid pixels_;
  double axial_scale_ = kDefaultAxialScaleUm;
  std::string id_;
};

enum class Label : std::uint8_t { Background = 0, Rnfl = 1, Gcipl = 2 };

/// Per-pixel labels {0,1,2}. Within a column every RNFL pixel lies strictly
/// above every GC-IPL pixel. The ganglion cell complex is the union of both
/// labels and is never stored.
class LayerMask {
 public:
  LayerMask() = default;
  explicit LayerMask(LabelGrid labels);

  const LabelGrid& labels() const noexcept { return labels_; }
  int height() const noexcept { return labels_.height(); }
  int width() const noexcept { return labels_.width(); }
  std::uint8_t operator()(int row, int col) const { return labels_(row, col); }

  std::size_t count(Label label) const;
  std::size_t gcc_count() const;

  /// True when the per-column ordering invariant holds.
  static bool ordered(const LabelGrid& labels);

  friend bool operator==(const LayerMask&, const LayerMask&) = default;

 private:
  LabelGrid labels_;
};

/// Per-column boundary rows. Values are real-valued (smoothed traces).
struct BoundarySet {
  std::vector<double> ilm;
  std::vector<double> gcl;
  std::vector<double> ipl;
  std::vector<double> choroid;
  std::vector<bool> valid;

  int width() const noexcept { return static_cast<int>(ilm.size()); }
  static BoundarySet sized(int width);
};

enum class GradeLabel { Healthy = 0, EarlyGlaucoma = 1, AdvancedGlaucoma = 2 };

std::string_view to_string(GradeLabel grade);
std::optional<GradeLabel> parse_grade(std::string_view text);
/// Ordinal code used for correlation analysis: H=0, EG=1, AG=2.
inline int ordinal(GradeLabel grade) { return static_cast<int>(grade); }

inline bool is_glaucomatous(GradeLabel grade) {
  return grade != GradeLabel::Healthy;
}

// ---------------------------------------------------------------------------
// Template definitions

template <typename T>
Grid<T>::Grid(int height, int width, std::vector<T> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0 ||
      data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw std::invalid_argument("grid dimensions do not match data size");
  }
}

}  // namespace rgc
