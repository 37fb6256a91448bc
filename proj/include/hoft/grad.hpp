#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hoft/adapter.hpp"

namespace hoft {

/// Gradients aligned one-to-one with parameters(adapter), plus the loss.
struct GradBundle {
  struct Entry {
    std::string name;
    Matrix value;
  };

  double loss = 0.0;
  std::vector<Entry> grads;

  bool has(std::string_view name) const;
  const Matrix& get(std::string_view name) const;

  const Matrix& d_u() const { return get("u"); }
  const Matrix& d_v() const { return get("v"); }
  const Matrix& d_m() const { return get("m_vec"); }
};

inline constexpr double kFiniteDiffStep = 1e-5;

/// Mean squared error over all m·k entries of forward(adapter, w0, x) − y_target.
double mse_loss(const Adapter& adapter, const Matrix& w0, const Matrix& x, const Matrix& y_target);

/// Reverse-mode gradients through the factored forward. The CWY core (exact
/// inverse or two-term Neumann truncation) is differentiated as defined, including
/// its dependence on UᵀU; clamped diagonal entries get zero derivative.
GradBundle loss_and_grads(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                          const Matrix& y_target);

/// Central differences, one parameter at a time, rerunning the whole forward.
GradBundle finite_diff_grads(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                             const Matrix& y_target, double h = kFiniteDiffStep);

/// (f(p + h) − f(p − h)) / 2h
double central_difference(const std::function<double(double)>& f, double p,
                          double h = kFiniteDiffStep);

/// Per tensor: max_i |a_i − b_i| / max(max_i |a_i|, max_i |b_i|, 1e-8); the
/// worst tensor wins.
double max_relative_error(const GradBundle& analytic, const GradBundle& numeric);

double grad_check(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                  const Matrix& y_target, double h = kFiniteDiffStep);

/// Backward of y = Q·x for a CWY factor set: returns x̄ and accumulates ∂L/∂U into u_grad.
Matrix cwy_backward(const CwyFactors& f, const Matrix& x, const Matrix& y_bar, Matrix& u_grad);

}  // namespace hoft
