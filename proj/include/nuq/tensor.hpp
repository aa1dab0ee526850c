#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace nuq {

/// Dense row-major tensor of doubles. Shape {} is not used; scalars are {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor ones(std::vector<int> shape);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for up to 5 dims (row-major).
  double& at(int i0) { return data_[static_cast<size_t>(i0)]; }
  double& at(int i0, int i1) { return data_[idx2(i0, i1)]; }
  double& at(int i0, int i1, int i2) { return data_[idx3(i0, i1, i2)]; }
  double& at(int i0, int i1, int i2, int i3) { return data_[idx4(i0, i1, i2, i3)]; }
  double& at(int i0, int i1, int i2, int i3, int i4) { return data_[idx5(i0, i1, i2, i3, i4)]; }
  double at(int i0) const { return data_[static_cast<size_t>(i0)]; }
  double at(int i0, int i1) const { return data_[idx2(i0, i1)]; }
  double at(int i0, int i1, int i2) const { return data_[idx3(i0, i1, i2)]; }
  double at(int i0, int i1, int i2, int i3) const { return data_[idx4(i0, i1, i2, i3)]; }
  double at(int i0, int i1, int i2, int i3, int i4) const { return data_[idx5(i0, i1, i2, i3, i4)]; }

  void fill(double v);
  Tensor reshaped(std::vector<int> shape) const;

  double sum() const;
  double min() const;
  double max() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;

 private:
  size_t idx2(int i0, int i1) const {
    return static_cast<size_t>(i0) * shape_[1] + i1;
  }
  size_t idx3(int i0, int i1, int i2) const {
    return (static_cast<size_t>(i0) * shape_[1] + i1) * shape_[2] + i2;
  }
  size_t idx4(int i0, int i1, int i2, int i3) const {
    return ((static_cast<size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3;
  }
  size_t idx5(int i0, int i1, int i2, int i3, int i4) const {
    return (((static_cast<size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3) *
               shape_[4] +
           i4;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace nuq
