#pragma once

// Differentiable building blocks of the encoder: products, row softmax,
// layer norm, GELU and cross-entropy, each with its backward rule.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "hlogformer/errors.hpp"
#include "hlogformer/matrix.hpp"

namespace hlog::kernels {

/// out = a * b, or out += a * b when `accumulate` is set.
template <class T>
void matmul(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out, bool accumulate = false) {
  assert(a.cols() == b.rows());
  if (!accumulate) out = Matrix<T>(a.rows(), b.cols());
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    T* __restrict orow = out.data() + i * m;
    const T* arow = a.data() + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const T s = arow[k];
      const T* __restrict brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += s * brow[j];
    }
  }
}

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out;
  matmul(a, b, out);
  return out;
}

/// out += a^T * b
template <class T>
void matmul_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  assert(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols());
  const std::size_t n = a.rows(), p = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.data() + i * p;
    const T* __restrict brow = b.data() + i * m;
    for (std::size_t k = 0; k < p; ++k) {
      const T s = arow[k];
      if (s == T{0}) continue;
      T* __restrict orow = out.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += s * brow[j];
    }
  }
}

template <class T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

/// out = a * b^T
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  assert(a.cols() == b.cols());
  return matmul(a, transpose(b));
}

template <class T>
void add_row_vector(Matrix<T>& m, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias[j];
  }
}

/// bias_grad (1 x cols) += column sums of m
template <class T>
void add_column_sums(const Matrix<T>& m, Matrix<T>& bias_grad) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) bias_grad[j] += r[j];
  }
}

/// Numerically stable softmax over one row, in place.
template <class T>
void softmax_inplace(std::span<T> row) {
  if (row.empty()) return;
  T mx = row[0];
  for (T v : row) mx = std::max(mx, v);
  T sum{0};
  for (T& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (T& v : row) v /= sum;
}

template <class T>
Matrix<T> softmax_rows(Matrix<T> m) {
  for (std::size_t i = 0; i < m.rows(); ++i) softmax_inplace(m.row(i));
  return m;
}

/// Per-row statistics kept for the layer-norm backward pass.
template <class T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> rstd;
};

/// Layer norm of a single vector using population variance.
template <class T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> scale, std::span<const T> shift,
                          T eps) {
  const std::size_t n = x.size();
  T mean{0};
  for (T v : x) mean += v;
  mean /= static_cast<T>(n);
  T var{0};
  for (T v : x) var += (v - mean) * (v - mean);
  var /= static_cast<T>(n);
  const T rstd = T{1} / std::sqrt(var + eps);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * rstd * scale[i] + shift[i];
  return out;
}

template <class T>
Matrix<T> layer_norm_rows(const Matrix<T>& x, const Matrix<T>& scale, const Matrix<T>& shift,
                          T eps, LayerNormCache<T>* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix<T> out(n, d);
  if (cache) {
    cache->xhat = Matrix<T>(n, d);
    cache->rstd.assign(n, T{0});
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    T mean{0};
    for (T v : r) mean += v;
    mean /= static_cast<T>(d);
    T var{0};
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (r[j] - mean) * rstd;
      if (cache) cache->xhat(i, j) = xh;
      o[j] = xh * scale[j] + shift[j];
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return out;
}

/// Returns dx and accumulates scale/shift gradients.
template <class T>
Matrix<T> layer_norm_rows_backward(const Matrix<T>& dy, const LayerNormCache<T>& cache,
                                   const Matrix<T>& scale, Matrix<T>& dscale, Matrix<T>& dshift) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix<T> dx(n, d);
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = dy.row(i);
    auto xh = cache.xhat.row(i);
    T mean_dxhat{0}, mean_dxhat_xhat{0};
    for (std::size_t j = 0; j < d; ++j) {
      dscale[j] += g[j] * xh[j];
      dshift[j] += g[j];
      dxhat[j] = g[j] * scale[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xh[j];
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    auto o = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = cache.rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
  }
  return dx;
}

/// Exact (erf) GELU.
template <class T>
T gelu(T x) {
  return T{0.5} * x * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T{0.5} * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T{-0.5} * x * x) / std::sqrt(T{2} * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

/// Negative log-likelihood of `target` under softmax(logits) for one row.
template <class T>
T row_nll(std::span<const T> logits, std::size_t target) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T sum{0};
  for (T v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[target];
}

/// Mean negative log-likelihood over rows. Optionally writes d(mean)/d(logits).
template <class T>
T cross_entropy(const Matrix<T>& logits, std::span<const int> targets, Matrix<T>* grad = nullptr) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (n == 0 || targets.size() != n) throw config_error("cross_entropy: row/target mismatch");
  if (grad) *grad = Matrix<T>(n, v);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw data_error("cross_entropy: target id " + std::to_string(targets[i]) +
                       " out of range for vocabulary of " + std::to_string(v));
    }
    auto row = logits.row(i);
    total += row_nll<T>(row, static_cast<std::size_t>(targets[i]));
    if (grad) {
      auto g = grad->row(i);
      std::copy(row.begin(), row.end(), g.begin());
      softmax_inplace(g);
      g[targets[i]] -= T{1};
      for (T& x : g) x /= static_cast<T>(n);
    }
  }
  return total / static_cast<T>(n);
}

}  // namespace hlog::kernels
