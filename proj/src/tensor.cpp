#include "mtse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mtse/errors.hpp"

namespace mtse {

namespace {
std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) fail(errc::input, "tensor dimensions must be positive, got " +
                                      shape_to_string(shape));
    n *= d;
  }
  return n;
}
}  // namespace

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape, double fill)
    : shape_(std::move(shape)),
      v_(static_cast<std::size_t>(shape_product(shape_)), fill) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), v_(std::move(values)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(v_.size()))
    fail(errc::input, "tensor shape " + shape_to_string(shape_) +
                          " does not match value count " +
                          std::to_string(v_.size()));
}

Tensor Tensor::row(std::vector<double> values) {
  auto n = static_cast<std::int64_t>(values.size());
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::vec(std::vector<double> values) {
  auto n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::identity(std::int64_t n) {
  Tensor t({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::int64_t Tensor::rows() const {
  if (shape_.empty()) fail(errc::internal, "rows() on empty tensor");
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  fail(errc::internal, "cols() on tensor of rank " +
                           std::to_string(shape_.size()));
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
  return v_[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return v_[static_cast<std::size_t>(r * cols() + c)];
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

bool Tensor::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (auto& x : v_) x = v;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    fail(errc::input, "matmul dimension mismatch: " + a.shape_str() + " * " +
                          b.shape_str());
  const std::int64_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  // i-k-j order: cache friendly and a fixed accumulation order per output.
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * m;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + kk * m;
      for (std::int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows())
    fail(errc::input, "affine dimension mismatch: x " + x.shape_str() +
                          " vs W " + w.shape_str());
  if (b.size() != w.cols())
    fail(errc::input, "affine bias mismatch: b " + b.shape_str() + " vs W " +
                          w.shape_str());
  Tensor out = matmul(x, w);
  for (std::int64_t i = 0; i < out.rows(); ++i)
    for (std::int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += b.at(j);
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2)
    fail(errc::input, "softmax expects a 2-d tensor, got " +
                          logits.shape_str());
  Tensor out({logits.rows(), logits.cols()});
  for (std::int64_t i = 0; i < logits.rows(); ++i) {
    double mx = logits.at(i, 0);
    for (std::int64_t j = 1; j < logits.cols(); ++j)
      mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::int64_t j = 0; j < logits.cols(); ++j) {
      const double e = std::exp(logits.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (std::int64_t j = 0; j < logits.cols(); ++j) out.at(i, j) /= denom;
  }
  return out;
}

double cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets,
                     const std::vector<double>& mask) {
  const std::int64_t n = logits.rows(), c = logits.cols();
  if (static_cast<std::int64_t>(targets.size()) != n ||
      static_cast<std::int64_t>(mask.size()) != n)
    fail(errc::input, "cross_entropy: targets/mask length must equal rows");
  double total = 0.0, weight = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0.0) continue;
    const std::int64_t t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c)
      fail(errc::input, "cross_entropy: target " + std::to_string(t) +
                            " outside [0," + std::to_string(c) + ")");
    double mx = logits.at(i, 0);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(logits.at(i, j) - mx);
    total += mask[static_cast<std::size_t>(i)] *
             (std::log(denom) - (logits.at(i, t) - mx));
    weight += mask[static_cast<std::size_t>(i)];
  }
  if (weight == 0.0)
    fail(errc::degenerate, "cross_entropy: mask selects no positions");
  return total / weight;
}

}  // namespace mtse
