#include "hoft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hoft/error.hpp"

namespace hoft {

double hyperspherical_energy(const Matrix& w) {
  // Columns become contiguous rows.
  const Matrix cols = transpose(w);
  const std::size_t n = cols.rows(), dim = cols.cols();
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* wi = cols.row(i).data();
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* wj = cols.row(j).data();
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = wi[k] - wj[k];
        sq += d * d;
      }
      if (sq == 0.0) {
        throw Error("hyperspherical_energy: columns " + std::to_string(i) + " and " +
                    std::to_string(j) + " coincide (zero distance)");
      }
      energy += 2.0 / std::sqrt(sq);
    }
  }
  return energy;
}

std::vector<double> moment_traces(const Matrix& w, std::size_t max_power) {
  const Matrix gram = matmul_tn(w, w);
  std::vector<double> out;
  Matrix power = gram;
  for (std::size_t k = 1; k <= max_power; ++k) {
    if (k > 1) power = matmul(power, gram);
    out.push_back(trace(power));
  }
  return out;
}

EnergyReport energy_difference_experiment(std::size_t dim, std::size_t rank, std::size_t trials,
                                          const Rng& rng, InverseMode mode) {
  if (rank == 0 || rank > dim) throw DimensionError("energy_difference_experiment: rank must be in [1, dim]");
  if (trials == 0) throw Error("energy_difference_experiment: trials must be >= 1");
  EnergyReport report;
  report.rank = rank;
  report.dim = dim;
  report.trials = trials;
  double sum_abs = 0.0, sum_rel = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng trial_rng = rng.child(t);
    const Matrix m = gaussian_matrix(trial_rng, dim, dim);
    const Matrix u = gaussian_matrix(trial_rng, dim, rank);
    const Matrix v = gaussian_matrix(trial_rng, dim, rank);
    const CwyFactors fu = build_factors(u, mode);
    const CwyFactors fv = build_factors(v, mode);
    const Matrix adapted = apply_q(fu, apply_q_right(fv, m));

    const double he = hyperspherical_energy(m);
    const double diff = std::abs(he - hyperspherical_energy(adapted));
    sum_abs += diff;
    sum_rel += diff / he;
    report.max_abs_diff = std::max(report.max_abs_diff, diff);

    const Matrix left = apply_q(build_factors(u, InverseMode::Exact), m);
    const double left_rel = std::abs(he - hyperspherical_energy(left)) / he;
    report.left_only_max_relative = std::max(report.left_only_max_relative, left_rel);
  }
  report.mean_abs_diff = sum_abs / static_cast<double>(trials);
  report.mean_relative_diff = sum_rel / static_cast<double>(trials);
  return report;
}

Matrix polar_orthogonal_factor(const Matrix& a) {
  if (!a.is_square()) throw DimensionError("polar_orthogonal_factor: matrix must be square");
  if (!a.all_finite()) throw NonFiniteError("polar_orthogonal_factor: non-finite input");
  Matrix x = a;
  for (std::size_t it = 0; it < kPolarMaxIterations; ++it) {
    Matrix next = transpose(lu_inverse(x));
    next += x;
    next *= 0.5;
    const double step = frobenius_norm(next - x);
    x = std::move(next);
    if (step < kPolarTolerance) return x;
  }
  throw ConvergenceError("polar_orthogonal_factor: no convergence after " +
                         std::to_string(kPolarMaxIterations) + " iterations");
}

ProcrustesCheck procrustes_bound_check(const Matrix& m0, const Matrix& q_u, const Matrix& q_v) {
  const Matrix adapted = matmul(matmul(q_u, m0), q_v);
  ProcrustesCheck out;
  out.q_star = polar_orthogonal_factor(matmul_nt(adapted, m0));
  out.gap = frobenius_norm(adapted - matmul(out.q_star, m0));
  const double norm = frobenius_norm(m0);
  out.bound = 2.0 * std::sqrt(static_cast<double>(m0.rows())) * norm;
  out.bound_n = 2.0 * std::sqrt(static_cast<double>(m0.cols())) * norm;
  out.envelope = 2.0 * norm;
  out.holds = out.gap <= out.bound;
  return out;
}

double weight_decay_invariance(const Matrix& u, std::span<const double> lambdas, InverseMode mode) {
  const Matrix q = materialize_q(build_factors(u, mode));
  double worst = 0.0;
  for (double lambda : lambdas) {
    const Matrix decayed = scale(u, 1.0 - lambda);
    worst = std::max(worst, frobenius_norm(materialize_q(build_factors(decayed, mode)) - q));
  }
  return worst;
}

}  // namespace hoft
