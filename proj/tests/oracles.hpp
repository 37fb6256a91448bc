#pragma once

// Reference implementations used only by the tests. They avoid the library's
// kernels on purpose: plain loops over std::vector.
#include <cmath>
#include <vector>

#include "hoft/matrix.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const hoft::Matrix& a) {
  Dense d(a.rows(), std::vector<double>(a.cols()));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d[i][j] = a(i, j);
  return d;
}

inline hoft::Matrix from_dense(const Dense& d) {
  hoft::Matrix a(d.size(), d.empty() ? 0 : d[0].size());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = d[i][j];
  return a;
}

inline Dense triple_loop(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i][p]) * b[p][j];
      c[i][j] = static_cast<double>(s);
    }
  return c;
}

inline hoft::Matrix product(const hoft::Matrix& a, const hoft::Matrix& b) {
  return from_dense(triple_loop(to_dense(a), to_dense(b)));
}

inline double frobenius(const hoft::Matrix& a) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s += static_cast<long double>(a(i, j)) * a(i, j);
  return static_cast<double>(std::sqrt(s));
}

/// I − 2uuᵀ/uᵀu, or I for a zero vector.
inline Dense reflection(const std::vector<double>& u) {
  const std::size_t m = u.size();
  double uu = 0.0;
  for (double x : u) uu += x * x;
  Dense h(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    h[i][i] = 1.0;
    if (uu == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) h[i][j] -= 2.0 * u[i] * u[j] / uu;
  }
  return h;
}

/// H(u₁)·H(u₂)···H(u_r), each reflection formed explicitly.
inline hoft::Matrix reflection_product(const hoft::Matrix& u) {
  const std::size_t m = u.rows();
  Dense q(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) q[i][i] = 1.0;
  for (std::size_t c = 0; c < u.cols(); ++c) q = triple_loop(q, reflection(u.column(c)));
  return from_dense(q);
}

/// ‖I − QQᵀ‖_F / √n, elementwise.
inline double orthogonality(const hoft::Matrix& q) {
  const std::size_t n = q.rows();
  long double s = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double e = (i == j) ? 1.0L : 0.0L;
      for (std::size_t p = 0; p < n; ++p) e -= static_cast<long double>(q(i, p)) * q(j, p);
      s += e * e;
    }
  return static_cast<double>(std::sqrt(s / n));
}

/// Σ_{i≠j} 1/‖wᵢ − wⱼ‖ over ordered pairs.
inline double hyperspherical_energy(const hoft::Matrix& w) {
  long double e = 0.0L;
  for (std::size_t i = 0; i < w.cols(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (i == j) continue;
      long double d2 = 0.0L;
      for (std::size_t k = 0; k < w.rows(); ++k) {
        const long double d = static_cast<long double>(w(k, i)) - w(k, j);
        d2 += d * d;
      }
      e += 1.0L / std::sqrt(d2);
    }
  return static_cast<double>(e);
}

}  // namespace oracle
