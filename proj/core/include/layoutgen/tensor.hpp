#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace layoutgen::num {

// Dense row-major tensor of doubles, rank 1 or 2. Small on purpose: the models
// here are scalar-loss, few-thousand-parameter networks where binary64
// precision buys tight gradient-check tolerances.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor row_vector(std::vector<double> values);              // shape {n}
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }

  // Rank-2 accessors; rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// dst += src, shapes must match.
void axpy(Tensor& dst, const Tensor& src);

}  // namespace layoutgen::num
