#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace expert {

// Dense row-major tensor of doubles. Rank 0 (scalar) through 8.
//
// Layout conventions used across the library:
//   feature maps  -> rank 3, (channels, height, width)
//   token blocks  -> rank 2, (tokens, dim)
//   linear weight -> rank 2, (out, in); bias rank 1, (out)
//   conv weight   -> rank 4, (out, in, kh, kw)
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);  // zero-filled
  Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor scalar(double value);

  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty() || !data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  // Rank-checked accessors for the common layouts.
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;
  double& at(std::int64_t c, std::int64_t y, std::int64_t x);
  double at(std::int64_t c, std::int64_t y, std::int64_t x) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double abs_max() const;
  void fill(double value) { data_.assign(data_.size(), value); }

  // Returns a copy with a new shape of equal element count.
  Tensor reshaped(std::vector<std::int64_t> new_shape) const;

  std::string shape_str() const;

private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// Throws ShapeError with a contextual message unless the two shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace expert
