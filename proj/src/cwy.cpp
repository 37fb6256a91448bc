#include "hoft/cwy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hoft/error.hpp"

namespace hoft {

std::string_view to_string(InverseMode mode) {
  return mode == InverseMode::Exact ? "exact" : "neumann2";
}

InverseMode parse_inverse_mode(std::string_view text) {
  if (text == "exact") return InverseMode::Exact;
  if (text == "neumann2") return InverseMode::NeumannTwoTerm;
  throw Error("unknown inverse mode '" + std::string(text) + "' (expected exact|neumann2)");
}

CwyFactors build_factors(const Matrix& u, InverseMode mode, double clamp_eps) {
  const std::size_t m = u.rows(), r = u.cols();
  if (m == 0 || r == 0) throw DimensionError("build_factors: need m >= 1 and r >= 1");
  if (r > m) {
    throw DimensionError("build_factors: rank " + std::to_string(r) + " exceeds dimension " +
                         std::to_string(m));
  }
  if (!u.all_finite()) throw NonFiniteError("build_factors: non-finite Householder vectors");
  if (!(clamp_eps > 0.0)) throw Error("build_factors: clamp_eps must be positive");

  CwyFactors f;
  f.u = u;
  f.mode = mode;
  f.clamp_eps = clamp_eps;
  f.gram = matmul_tn(u, u);

  f.s = Matrix(r, r);
  f.a = Matrix(r, r);
  f.d_inv.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    f.s(i, i) = f.gram(i, i) / 2.0;
    for (std::size_t j = i + 1; j < r; ++j) {
      f.s(i, j) = f.gram(i, j);
      f.a(i, j) = f.gram(i, j);
    }
    f.d_inv[i] = 1.0 / std::max(f.s(i, i), clamp_eps);
  }

  if (mode == InverseMode::Exact) {
    f.core = triangular_solve_upper(clamped_s(f), Matrix::identity(r));
    f.core *= -1.0;
  } else {
    f.core = Matrix(r, r);
    for (std::size_t i = 0; i < r; ++i) {
      f.core(i, i) = -f.d_inv[i];
      for (std::size_t j = i + 1; j < r; ++j) f.core(i, j) = f.d_inv[i] * f.a(i, j) * f.d_inv[j];
    }
  }
  return f;
}

Matrix clamped_s(const CwyFactors& f) {
  Matrix s = f.s;
  for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) = std::max(s(i, i), f.clamp_eps);
  return s;
}

namespace {

// I + U·B·Uᵀ
Matrix materialize(const Matrix& u, const Matrix& b) {
  Matrix q = matmul_nt(matmul(u, b), u);
  for (std::size_t i = 0; i < q.rows(); ++i) q(i, i) += 1.0;
  return q;
}

void require_rows(const CwyFactors& f, const Matrix& x, const char* op) {
  if (x.rows() != f.dim()) {
    throw DimensionError(std::string(op) + ": input has " + std::to_string(x.rows()) +
                         " rows, factors act on dimension " + std::to_string(f.dim()));
  }
}

}  // namespace

Matrix exact_q(const CwyFactors& f) {
  if (f.mode != InverseMode::Exact) throw Error("exact_q: factors were built in neumann2 mode");
  return materialize(f.u, f.core);
}

Matrix neumann_inverse(const CwyFactors& f, std::size_t terms) {
  if (terms == 0) throw Error("neumann_inverse: terms must be >= 1");
  const std::size_t r = f.rank();
  // N = −D⁻¹A
  Matrix n(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < r; ++j) n(i, j) = -f.d_inv[i] * f.a(i, j);

  Matrix sum = Matrix::identity(r);
  Matrix power = Matrix::identity(r);
  for (std::size_t t = 1; t < terms; ++t) {
    power = matmul(power, n);
    sum += power;
  }
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) sum(i, j) *= f.d_inv[j];
  return sum;
}

Matrix approx_q(const CwyFactors& f) {
  if (f.mode != InverseMode::NeumannTwoTerm) {
    throw Error("approx_q: factors were built in exact mode");
  }
  return materialize(f.u, f.core);
}

Matrix materialize_q(const CwyFactors& f) { return materialize(f.u, f.core); }

Matrix apply_q(const CwyFactors& f, const Matrix& x) {
  require_rows(f, x, "apply_q");
  Matrix y = x;
  y += matmul(f.u, matmul(f.core, matmul_tn(f.u, x)));
  return y;
}

Matrix apply_q_transpose(const CwyFactors& f, const Matrix& x) {
  require_rows(f, x, "apply_q_transpose");
  Matrix y = x;
  y += matmul(f.u, matmul_tn(f.core, matmul_tn(f.u, x)));
  return y;
}

Matrix apply_q_right(const CwyFactors& f, const Matrix& x) {
  if (x.cols() != f.dim()) {
    throw DimensionError("apply_q_right: input has " + std::to_string(x.cols()) +
                         " columns, factors act on dimension " + std::to_string(f.dim()));
  }
  Matrix y = x;
  y += matmul_nt(matmul(matmul(x, f.u), f.core), f.u);
  return y;
}

double orthogonality_error(const Matrix& q) {
  if (!q.is_square()) throw DimensionError("orthogonality_error: matrix must be square");
  const std::size_t n = q.rows();
  // Upper triangle of Q·Qᵀ only; off-diagonal entries count twice.
  const Matrix qt = transpose(q);
  std::vector<double> row(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(row.begin() + static_cast<std::ptrdiff_t>(i), row.end(), 0.0);
    const double* qi = q.row(i).data();
    for (std::size_t p = 0; p < n; ++p) {
      const double a = qi[p];
      const double* qtp = qt.row(p).data();
      for (std::size_t j = i; j < n; ++j) row[j] += a * qtp[j];
    }
    const double d = row[i] - 1.0;
    sq += d * d;
    for (std::size_t j = i + 1; j < n; ++j) sq += 2.0 * row[j] * row[j];
  }
  return std::sqrt(sq) / std::sqrt(static_cast<double>(n));
}

double orthogonality_error(const CwyFactors& f) {
  const Matrix& b = f.core;
  Matrix c = add(b, transpose(b));
  c += matmul_nt(matmul(b, f.gram), b);
  const Matrix cg = matmul(c, f.gram);
  const double sq = trace(matmul(cg, cg));
  return std::sqrt(std::max(sq, 0.0)) / std::sqrt(static_cast<double>(f.dim()));
}

Matrix sequential_chain_q(const Matrix& u) {
  return apply_sequential_chain(u, Matrix::identity(u.rows()));
}

Matrix apply_sequential_chain(const Matrix& u, const Matrix& x) {
  if (x.rows() != u.rows()) throw DimensionError("apply_sequential_chain: row mismatch");
  const std::size_t m = u.rows(), k = x.cols();
  Matrix y = x;
  std::vector<double> proj(k);
  for (std::size_t col = u.cols(); col-- > 0;) {
    double tau = 0.0;
    for (std::size_t i = 0; i < m; ++i) tau += u(i, col) * u(i, col);
    tau /= 2.0;
    if (tau == 0.0) continue;
    std::fill(proj.begin(), proj.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double ui = u(i, col);
      const double* yi = y.row(i).data();
      for (std::size_t j = 0; j < k; ++j) proj[j] += ui * yi[j];
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double ui = u(i, col) / tau;
      double* yi = y.row(i).data();
      for (std::size_t j = 0; j < k; ++j) yi[j] -= ui * proj[j];
    }
  }
  return y;
}

}  // namespace hoft
