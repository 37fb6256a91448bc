#pragma once

#include <string_view>
#include <vector>

#include "hoft/matrix.hpp"

namespace hoft {

enum class InverseMode {
  Exact,           ///< S⁻¹ by back-substitution
  NeumannTwoTerm,  ///< S⁻¹ ≈ D⁻¹ − D⁻¹·A·D⁻¹
};

std::string_view to_string(InverseMode mode);
InverseMode parse_inverse_mode(std::string_view text);

inline constexpr double kDefaultClampEps = 1e-6;

/// Compact WY factors of the accumulated Householder product
///   Q = H(u₁)·H(u₂)···H(u_r) = I − U·S⁻¹·Uᵀ,   H(u) = I − 2uuᵀ/uᵀu,
/// where S is the upper triangle of UᵀU with its diagonal halved, S = D + A.
///
/// `core` caches the r×r matrix B such that Q = I + U·B·Uᵀ:
///   Exact:           B = −S_c⁻¹
///   NeumannTwoTerm:  B = D⁻¹·A·D⁻¹ − D⁻¹
/// with S_c, D using the clamped diagonal max(sᵢᵢ, clamp_eps). A zero column
/// therefore contributes an identity factor in both modes.
struct CwyFactors {
  Matrix u;
  Matrix s;
  std::vector<double> d_inv;
  Matrix a;
  InverseMode mode = InverseMode::NeumannTwoTerm;
  double clamp_eps = kDefaultClampEps;
  Matrix gram;  // UᵀU
  Matrix core;

  std::size_t dim() const noexcept { return u.rows(); }
  std::size_t rank() const noexcept { return u.cols(); }
  bool clamped(std::size_t i) const noexcept { return s(i, i) < clamp_eps; }
};

CwyFactors build_factors(const Matrix& u, InverseMode mode, double clamp_eps = kDefaultClampEps);

/// S with the clamped diagonal substituted.
Matrix clamped_s(const CwyFactors& f);

/// I − U·S⁻¹·Uᵀ materialized. Requires mode == Exact.
Matrix exact_q(const CwyFactors& f);

/// (Σ_{i<terms} (−D⁻¹A)ⁱ)·D⁻¹. Equals S_c⁻¹ once terms ≥ r.
Matrix neumann_inverse(const CwyFactors& f, std::size_t terms);

/// I + U·(D⁻¹AD⁻¹ − D⁻¹)·Uᵀ materialized. Requires mode == NeumannTwoTerm.
Matrix approx_q(const CwyFactors& f);

/// Materializes Q for whichever mode the factors carry.
Matrix materialize_q(const CwyFactors& f);

/// Q·x = x + U·(B·(Uᵀx)) without forming the m×m matrix.
Matrix apply_q(const CwyFactors& f, const Matrix& x);
/// Qᵀ·x = x + U·(Bᵀ·(Uᵀx)).
Matrix apply_q_transpose(const CwyFactors& f, const Matrix& x);
/// x·Q = x + ((x·U)·B)·Uᵀ, for right multiplication.
Matrix apply_q_right(const CwyFactors& f, const Matrix& x);

/// ‖I − Q·Qᵀ‖_F / √n.
double orthogonality_error(const Matrix& q);
/// Same metric from the factors alone, in O(m·r²):
/// Q·Qᵀ = I + U·C·Uᵀ with C = B + Bᵀ + B·G·Bᵀ, so ‖I − QQᵀ‖_F² = tr(C·G·C·G).
double orthogonality_error(const CwyFactors& f);

/// Left-to-right product of (I − uᵢuᵢᵀ/τᵢ), τᵢ = uᵢᵀuᵢ/2. Zero columns are skipped.
Matrix sequential_chain_q(const Matrix& u);
/// Applies the same chain to x one reflection at a time, starting from u_r.
Matrix apply_sequential_chain(const Matrix& u, const Matrix& x);

}  // namespace hoft
