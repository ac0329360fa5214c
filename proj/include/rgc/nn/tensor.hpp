#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rgc::nn {

/// Batch × channels × rows × cols.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t per_sample() const noexcept { return static_cast<std::size_t>(c) * plane(); }
  bool positive() const noexcept { return n > 0 && c > 0 && h > 0 && w > 0; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense NCHW tensor of doubles.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape shape, double fill = 0.0);
  Tensor4(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  /// Pointer to the first element of the (n, c) plane.
  double* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const double* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  /// Samples [first, first + count) as a new tensor.
  Tensor4 slice_batch(int first, int count) const;
  /// Concatenates along the batch axis. All parts must share C, H, W.
  static Tensor4 stack(std::span<const Tensor4> parts);

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  std::size_t offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(shape_.c) +
             static_cast<std::size_t>(c)) *
                static_cast<std::size_t>(shape_.h) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(shape_.w) +
           static_cast<std::size_t>(x);
  }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace rgc::nn
