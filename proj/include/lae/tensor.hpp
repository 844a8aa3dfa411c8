// Dense row-major tensor over float or double. The numeric substrate for all
// model math; matrix products are delegated to Eigen maps.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "lae/util.hpp"

namespace lae {

template <typename Real>
inline constexpr Real kLogZero = -std::numeric_limits<Real>::infinity();

// log(exp(a) + exp(b)) with explicit absorption of the -inf sentinel, so the
// DP code never produces (-inf) - (-inf) = NaN.
template <typename Real>
inline Real log_add(Real a, Real b) {
  if (a == kLogZero<Real>) return b;
  if (b == kLogZero<Real>) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <typename Real>
struct TensorT {
  std::vector<int> shape;
  std::vector<Real> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), Real(0));
  }
  TensorT(std::vector<int> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw ConfigError("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw ConfigError("tensor dimensions must be nonnegative");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : throw_shape()); }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : throw_shape()); }
  [[noreturn]] int throw_shape() const { throw ConfigError("expected rank-1 or rank-2 tensor"); }

  Real& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
  Real& operator[](size_t i) { return data[i]; }
  Real operator[](size_t i) const { return data[i]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static TensorT scalar(Real v) {
    TensorT t;
    t.data.assign(1, v);
    return t;  // rank-0
  }

  static TensorT zeros_like(const TensorT& o) { return o.rank() == 0 ? scalar(0) : TensorT(o.shape); }

  std::string shape_str() const {
    std::ostringstream ss;
    ss << '(';
    for (size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
    ss << ')';
    return ss.str();
  }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {
template <typename Real>
using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Map = Eigen::Map<EMat<Real>>;
template <typename Real>
using CMap = Eigen::Map<const EMat<Real>>;
}  // namespace detail

// C (+)= op(A) * op(B). Shapes are the caller's responsibility; checked here.
template <typename Real>
inline void gemm(const TensorT<Real>& a, bool trans_a, const TensorT<Real>& b, bool trans_b,
                 TensorT<Real>& c, bool accumulate) {
  const int am = trans_a ? a.cols() : a.rows();
  const int ak = trans_a ? a.rows() : a.cols();
  const int bk = trans_b ? b.cols() : b.rows();
  const int bn = trans_b ? b.rows() : b.cols();
  if (ak != bk) throw ConfigError("gemm inner dimensions differ: " + a.shape_str() + " vs " + b.shape_str());
  if (c.rows() != am || c.cols() != bn) throw ConfigError("gemm output shape mismatch");
  detail::CMap<Real> ma(a.data.data(), a.rows(), a.cols());
  detail::CMap<Real> mb(b.data.data(), b.rows(), b.cols());
  detail::Map<Real> mc(c.data.data(), c.rows(), c.cols());
  if (!trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma * mb; else mc.noalias() = ma * mb;
  } else if (!trans_a && trans_b) {
    if (accumulate) mc.noalias() += ma * mb.transpose(); else mc.noalias() = ma * mb.transpose();
  } else if (trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma.transpose() * mb; else mc.noalias() = ma.transpose() * mb;
  } else {
    if (accumulate) mc.noalias() += ma.transpose() * mb.transpose(); else mc.noalias() = ma.transpose() * mb.transpose();
  }
}

template <typename Real>
inline TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
  TensorT<Real> c({a.rows(), b.cols()});
  gemm(a, false, b, false, c, false);
  return c;
}

// Fan-based scaled uniform init, U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <typename Real>
inline TensorT<Real> uniform_init(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  TensorT<Real> t(std::move(shape));
  const Real bound = std::sqrt(Real(6) / Real(fan_in + fan_out));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  for (Real& v : t.data) v = dist(rng);
  return t;
}

}  // namespace lae
