#include "hoft/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "hoft/error.hpp"

namespace hoft {
namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

void Matrix::set_column(std::size_t j, std::span<const double> values) {
  if (values.size() != rows_ || j >= cols_) throw DimensionError("Matrix::set_column: bad shape");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "sub");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double c) noexcept {
  for (double& v : data_) v *= c;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a) + " * " +
                         shape_str(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: inner dimensions disagree " + shape_str(a) + "^T * " +
                         shape_str(b));
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.row(p).data();
    const double* bp = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a) + " * " +
                         shape_str(b) + "^T");
  }
  return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  c += b;
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  c -= b;
  return c;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  out *= c;
  return out;
}

Matrix scale_rows(const Matrix& a, std::span<const double> d) {
  if (d.size() != a.rows()) throw DimensionError("scale_rows: length mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double& v : out.row(i)) v *= d[i];
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }
Matrix operator*(double c, const Matrix& a) { return scale(a, c); }

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_dot(a, a)); }

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  double s = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double trace(const Matrix& a) {
  if (!a.is_square()) throw DimensionError("trace: non-square " + shape_str(a));
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Matrix triangular_solve_upper(const Matrix& s, const Matrix& b, double min_pivot) {
  if (!s.is_square()) throw DimensionError("triangular_solve_upper: non-square " + shape_str(s));
  if (b.rows() != s.rows()) {
    throw DimensionError("triangular_solve_upper: rhs " + shape_str(b) + " vs " + shape_str(s));
  }
  const std::size_t r = s.rows(), k = b.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double d = s(i, i);
    if (d == 0.0 || std::abs(d) < min_pivot || !std::isfinite(d)) {
      throw SingularMatrixError("triangular_solve_upper: diagonal entry " + std::to_string(i) +
                                " is " + std::to_string(d));
    }
  }
  Matrix x = b;
  for (std::size_t ii = r; ii-- > 0;) {
    double* xi = x.row(ii).data();
    for (std::size_t p = ii + 1; p < r; ++p) {
      const double sip = s(ii, p);
      const double* xp = x.row(p).data();
      for (std::size_t j = 0; j < k; ++j) xi[j] -= sip * xp[j];
    }
    const double d = s(ii, ii);
    for (std::size_t j = 0; j < k; ++j) xi[j] /= d;
  }
  return x;
}

Matrix lu_inverse(const Matrix& a) {
  if (!a.is_square()) throw DimensionError("lu_inverse: non-square " + shape_str(a));
  const std::size_t n = a.rows();
  Matrix lu = a;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  const double scale_ref = std::max(max_abs(a), 1.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(lu(col, col));
    for (std::size_t i = col + 1; i < n; ++i) {
      if (std::abs(lu(i, col)) > best) {
        best = std::abs(lu(i, col));
        piv = i;
      }
    }
    if (!(best > 1e-300 * scale_ref)) {
      throw SingularMatrixError("lu_inverse: matrix is singular at column " + std::to_string(col));
    }
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(piv, j));
      std::swap(perm[col], perm[piv]);
    }
    const double d = lu(col, col);
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = lu(i, col) / d;
      lu(i, col) = f;
      if (f == 0.0) continue;
      for (std::size_t j = col + 1; j < n; ++j) lu(i, j) -= f * lu(col, j);
    }
  }

  // Solve L·U·X = P·I column block at once.
  Matrix x(n, n);
  for (std::size_t i = 0; i < n; ++i) x(i, perm[i]) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) {
      const double l = lu(i, p);
      if (l == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) x(i, j) -= l * x(p, j);
    }
  }
  return triangular_solve_upper(lu, x);
}

}  // namespace hoft
