#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major float64 array. The universal value carrier: network
/// inputs/outputs, parameters, datasets. Immutable by convention once handed
/// to another component.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

  Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_))
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  static Tensor from_matrix(const RowMat& m) {
    Tensor t({m.rows(), m.cols()});
    Eigen::Map<RowMat>(t.data_.data(), m.rows(), m.cols()) = m;
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_.at(static_cast<std::size_t>(i)); }

  /// Rows/cols of a 2-D tensor; a 1-D tensor is treated as a column vector.
  std::int64_t rows() const {
    if (rank() == 1) return shape_[0];
    require_rank(2);
    return shape_[0];
  }
  std::int64_t cols() const {
    if (rank() == 1) return 1;
    require_rank(2);
    return shape_[1];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& buffer() { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& operator()(std::int64_t r, std::int64_t c) {
    return data_[static_cast<std::size_t>(r * cols() + c)];
  }
  double operator()(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * cols() + c)];
  }

  Eigen::Map<RowMat> mat() {
    return Eigen::Map<RowMat>(data_.data(), rows(), cols());
  }
  Eigen::Map<const RowMat> mat() const {
    return Eigen::Map<const RowMat>(data_.data(), rows(), cols());
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(std::vector<std::int64_t> shape) const {
    Tensor t(std::move(shape), data_);
    return t;
  }

 private:
  static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  void require_rank(std::int64_t r) const {
    if (rank() != r)
      throw std::invalid_argument("Tensor: expected rank " + std::to_string(r) +
                                  ", got " + std::to_string(rank()));
  }

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  Tensor c({a.rows(), b.cols()});
  c.mat().noalias() = a.mat() * b.mat();
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  t.mat().noalias() = a.mat().transpose();
  return t;
}

/// Minimum-norm least-squares solve: among all W minimizing ||A W - Y||_F,
/// returns the one of smallest Frobenius norm (SVD pseudoinverse route).
inline Tensor lstsq_min_norm(const Tensor& a, const Tensor& y) {
  if (!a.all_finite() || !y.all_finite())
    throw std::invalid_argument("lstsq_min_norm: non-finite input");
  if (a.rows() != y.rows())
    throw std::invalid_argument("lstsq_min_norm: row counts disagree");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a.mat(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd w = svd.solve(y.mat());
  Tensor out({a.cols(), y.cols()});
  out.mat() = w;
  return out;
}

}  // namespace pinn
