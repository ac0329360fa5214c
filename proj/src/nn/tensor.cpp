#include "rgc/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "rgc/error.hpp"

namespace rgc::nn {

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w) + "]";
}

Tensor4::Tensor4(Shape shape, double fill) : shape_(shape), data_(shape.count(), fill) {
  if (!shape.positive()) throw ValidationError("tensor dimensions must be positive: " + to_string(shape));
}

Tensor4::Tensor4(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (!shape.positive()) throw ValidationError("tensor dimensions must be positive: " + to_string(shape));
  if (data_.size() != shape.count()) throw ValidationError("tensor data size mismatch");
}

Tensor4 Tensor4::slice_batch(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > shape_.n) {
    throw ValidationError("batch slice out of range");
  }
  Shape s = shape_;
  s.n = count;
  const auto per = shape_.per_sample();
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(per * first),
                        data_.begin() + static_cast<std::ptrdiff_t>(per * (first + count)));
  return Tensor4(s, std::move(d));
}

Tensor4 Tensor4::stack(std::span<const Tensor4> parts) {
  if (parts.empty()) throw ValidationError("cannot stack zero tensors");
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw ValidationError("stack: per-sample shapes differ");
    }
    s.n += p.n();
  }
  std::vector<double> d;
  d.reserve(s.count());
  for (const auto& p : parts) d.insert(d.end(), p.data_.begin(), p.data_.end());
  return Tensor4(s, std::move(d));
}

bool Tensor4::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace rgc::nn
