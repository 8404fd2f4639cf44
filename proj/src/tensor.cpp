#include "ntmm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ntmm {

namespace {
std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension in shape " + ntmm::shape_str(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + ntmm::shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_.assign(1, v);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

int Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() <= 1) return 1;
  throw std::logic_error("tensor: rows() on rank-" + std::to_string(shape_.size()) + " tensor");
}

int Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 1;
  throw std::logic_error("tensor: cols() on rank-" + std::to_string(shape_.size()) + " tensor");
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::logic_error("tensor: item() on tensor of size " + std::to_string(data_.size()));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const { return ntmm::shape_str(shape_); }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace ntmm
