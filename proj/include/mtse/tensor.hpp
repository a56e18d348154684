#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtse {

// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 everywhere in this
// project; sequences are handled as lists of matrices.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape, double fill = 0.0);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

  static Tensor row(std::vector<double> values);     // shape [1 x n]
  static Tensor vec(std::vector<double> values);     // shape [n]
  static Tensor matrix(std::int64_t rows, std::int64_t cols,
                       std::vector<double> values);
  static Tensor scalar(double v);                    // shape [1]
  static Tensor identity(std::int64_t n);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& at(std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> v_;
};

std::string shape_to_string(const std::vector<std::int64_t>& shape);

// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]. Throws a dimension error naming
// both shapes when the inner dimensions disagree.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

// Mean over masked rows of -log softmax(logits)[i, targets[i]].
double cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets,
                     const std::vector<double>& mask);

}  // namespace mtse
