#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntmm {

/// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 cover
/// everything this library needs; higher ranks are allowed but unused.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  // Rank-2 accessors. rows()/cols() treat rank-1 as a single row.
  int rows() const;
  int cols() const;
  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols() + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double item() const;  // rank-0 or single-element tensor
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);

}  // namespace ntmm
