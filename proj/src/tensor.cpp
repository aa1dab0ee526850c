#include "nuq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nuq/errors.hpp"

namespace nuq {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw ShapeError("Tensor dims must be positive, got " + shape_str());
  }
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data_[0] = v;
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0); }

Tensor Tensor::ones(std::vector<int> shape) { return Tensor(std::move(shape), 1.0); }

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  if (shape_numel(t.shape_) != static_cast<int64_t>(data.size()))
    throw ShapeError("from_data: size mismatch for shape " + t.shape_str());
  t.data_ = std::move(data);
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("reshape: element count mismatch " + shape_str());
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::min() const {
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace nuq
