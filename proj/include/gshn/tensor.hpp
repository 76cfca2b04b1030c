#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gshn {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major tensor of 64-bit floats. The universal value carrier.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), v_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (count(shape_) != v_.size()) {
      throw std::invalid_argument("Tensor: shape/value length mismatch");
    }
  }

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    Tensor t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Tensor: ragged rows");
      for (double x : row) t.v_[i++] = x;
    }
    return t;
  }

  static Tensor vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return v_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  double& at(std::size_t i, std::size_t j) { return v_[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return v_[i * cols() + j]; }

  // 3-d access, layout [d0][d1][d2] row-major.
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i)
      os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  Eigen::Map<EigenRowMat> mat() {
    require_2d();
    return Eigen::Map<EigenRowMat>(v_.data(), static_cast<Eigen::Index>(rows()),
                                   static_cast<Eigen::Index>(cols()));
  }
  Eigen::Map<const EigenRowMat> mat() const {
    require_2d();
    return Eigen::Map<const EigenRowMat>(v_.data(),
                                         static_cast<Eigen::Index>(rows()),
                                         static_cast<Eigen::Index>(cols()));
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    return s.empty() ? 0 : n;
  }
  void require_2d() const {
    if (shape_.size() != 2) throw std::invalid_argument("Tensor: expected 2-d");
  }

  std::vector<std::size_t> shape_;
  std::vector<double> v_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
  }
  Tensor out({a.rows(), b.cols()});
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

// dA = upstream * B^T, dB = A^T * upstream.
inline std::pair<Tensor, Tensor> matmul_vjp(const Tensor& a, const Tensor& b,
                                            const Tensor& upstream) {
  if (a.cols() != b.rows() || upstream.rows() != a.rows() ||
      upstream.cols() != b.cols()) {
    throw std::invalid_argument("matmul_vjp: shape mismatch " + a.shape_str() +
                                ", " + b.shape_str() + ", " +
                                upstream.shape_str());
  }
  Tensor da({a.rows(), a.cols()});
  Tensor db({b.rows(), b.cols()});
  da.mat().noalias() = upstream.mat() * b.mat().transpose();
  db.mat().noalias() = a.mat().transpose() * upstream.mat();
  return {std::move(da), std::move(db)};
}

inline Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  out.mat() = a.mat().transpose();
  return out;
}

// Row-wise stabilized softmax; masked entries (mask==0) are exactly 0 in the
// output. A fully masked row is an error.
inline Tensor softmax_rows(const Tensor& x, const Tensor* mask = nullptr) {
  if (x.ndim() != 2) throw std::invalid_argument("softmax_rows: expected 2-d");
  if (mask) check_same_shape(x, *mask, "softmax_rows mask");
  Tensor out({x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask).at(i, j) == 0.0) continue;
      mx = std::max(mx, x.at(i, j));
    }
    if (!std::isfinite(mx)) {
      throw std::runtime_error("softmax_rows: degenerate row " +
                               std::to_string(i) + " (all entries masked)");
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask).at(i, j) == 0.0) continue;
      double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask && (*mask).at(i, j) == 0.0) {
        out.at(i, j) = 0.0;
      } else {
        out.at(i, j) /= denom;
      }
    }
  }
  return out;
}

// VJP of softmax_rows: dX = P .* (U - rowsum(U .* P)), respecting the mask.
inline Tensor softmax_rows_vjp(const Tensor& probs, const Tensor& upstream,
                               const Tensor* mask = nullptr) {
  check_same_shape(probs, upstream, "softmax_rows_vjp");
  Tensor dx({probs.rows(), probs.cols()});
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j)
      dot += upstream.at(i, j) * probs.at(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      if (mask && (*mask).at(i, j) == 0.0) {
        dx.at(i, j) = 0.0;
      } else {
        dx.at(i, j) = probs.at(i, j) * (upstream.at(i, j) - dot);
      }
    }
  }
  return dx;
}

inline double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace gshn
