#include "expert/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "expert/errors.hpp"

namespace expert {

namespace {

std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
  if (shape.size() > 8) {
    throw ShapeError("tensor rank " + std::to_string(shape.size()) + " exceeds maximum rank 8");
  }
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
    }
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(checked_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.shape_ = {};
  t.data_ = {value};
  return t;
}

namespace {

void check_rank(const Tensor& t, int expected) {
  if (t.rank() != expected) {
    throw ShapeError("rank-" + std::to_string(expected) + " accessor used on tensor of shape " +
                     t.shape_str());
  }
}

}  // namespace

double& Tensor::at(std::int64_t r, std::int64_t c) {
  check_rank(*this, 2);
  return data_[static_cast<std::size_t>(r * shape_[1] + c)];
}
double Tensor::at(std::int64_t r, std::int64_t c) const {
  check_rank(*this, 2);
  return data_[static_cast<std::size_t>(r * shape_[1] + c)];
}
double& Tensor::at(std::int64_t c, std::int64_t y, std::int64_t x) {
  check_rank(*this, 3);
  return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
}
double Tensor::at(std::int64_t c, std::int64_t y, std::int64_t x) const {
  check_rank(*this, 3);
  return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
  if (checked_numel(new_shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str() + " to a shape with different element count");
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace expert
