#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hoft/cwy.hpp"
#include "hoft/matrix.hpp"
#include "hoft/rng.hpp"

namespace hoft {

/// HE(W) = Σ_{i≠j} 1/‖wᵢ − wⱼ‖ over ordered column pairs.
/// Throws Error naming the pair when two columns coincide.
double hyperspherical_energy(const Matrix& w);

/// tr((WᵀW)^k) for k = 1..max_power.
std::vector<double> moment_traces(const Matrix& w, std::size_t max_power);

struct EnergyReport {
  std::size_t rank = 0;
  std::size_t dim = 0;
  std::size_t trials = 0;
  double mean_abs_diff = 0.0;       // mean |HE(M) − HE(Q_U·M·Q_V)|
  double max_abs_diff = 0.0;
  double mean_relative_diff = 0.0;  // mean |HE(M) − HE(Q_U·M·Q_V)| / HE(M)
  double left_only_max_relative = 0.0;  // max |HE(M) − HE(Q_U·M)| / HE(M), exact Q_U
};

/// Per trial t: M (dim×dim), U, V (dim×rank) gaussian from Rng(seed XOR t);
/// Q_U, Q_V built in `mode`.
EnergyReport energy_difference_experiment(std::size_t dim, std::size_t rank, std::size_t trials,
                                          const Rng& rng, InverseMode mode);

inline constexpr double kPolarTolerance = 1e-12;
inline constexpr std::size_t kPolarMaxIterations = 100;

/// Orthogonal polar factor by Newton iteration X ← (X + X⁻ᵀ)/2, stopping when
/// ‖X_{k+1} − X_k‖_F < 1e-12. Throws SingularMatrixError / ConvergenceError.
Matrix polar_orthogonal_factor(const Matrix& a);

struct ProcrustesCheck {
  double gap = 0.0;       // ‖M̂ − Q*·M‖_F with Q* the Procrustes optimum
  double bound = 0.0;     // 2√m·‖M‖_F
  double bound_n = 0.0;   // 2√n·‖M‖_F, logged alongside
  double envelope = 0.0;  // 2‖M‖_F, the Q = I triangle-inequality envelope
  bool holds = false;     // gap ≤ bound
  Matrix q_star;
};

/// M̂ = q_u·m0·q_v; Q* = polar factor of M̂·m0ᵀ.
ProcrustesCheck procrustes_bound_check(const Matrix& m0, const Matrix& q_u, const Matrix& q_v);

/// max over λ of ‖Q((1−λ)·U) − Q(U)‖_F. Values of λ outside (0, 1) act as general
/// rescalings by c = 1 − λ.
double weight_decay_invariance(const Matrix& u, std::span<const double> lambdas, InverseMode mode);

}  // namespace hoft
