#include "hoft/grad.hpp"

#include <algorithm>
#include <cmath>

#include "hoft/error.hpp"

namespace hoft {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ∂L/∂G for G = UᵀU, given ∂L/∂B for the CWY core B(G).
Matrix core_backward(const CwyFactors& f, const Matrix& b_bar) {
  const std::size_t r = f.rank();
  Matrix g_bar(r, r);
  if (f.mode == InverseMode::Exact) {
    // B = −S_c⁻¹  ⇒  S̄ = S_c⁻ᵀ·B̄·S_c⁻ᵀ = Bᵀ·B̄·Bᵀ
    const Matrix bt = transpose(f.core);
    const Matrix s_bar = matmul(matmul(bt, b_bar), bt);
    for (std::size_t i = 0; i < r; ++i) {
      if (!f.clamped(i)) g_bar(i, i) = s_bar(i, i) / 2.0;
      for (std::size_t j = i + 1; j < r; ++j) g_bar(i, j) = s_bar(i, j);
    }
    return g_bar;
  }

  // B_ij = p_i·A_ij·p_j (i<j), B_ii = −p_i, p = D⁻¹
  const auto& p = f.d_inv;
  std::vector<double> p_bar(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    p_bar[i] -= b_bar(i, i);
    for (std::size_t j = i + 1; j < r; ++j) {
      const double bb = b_bar(i, j);
      g_bar(i, j) = bb * p[i] * p[j];
      p_bar[i] += bb * f.a(i, j) * p[j];
      p_bar[j] += bb * p[i] * f.a(i, j);
    }
  }
  for (std::size_t i = 0; i < r; ++i) {
    if (f.clamped(i)) continue;
    const double d_bar = -p_bar[i] * p[i] * p[i];
    g_bar(i, i) = d_bar / 2.0;
  }
  return g_bar;
}

double mse_and_residual_grad(const Matrix& y, const Matrix& target, Matrix& y_bar) {
  if (y.rows() != target.rows() || y.cols() != target.cols()) {
    throw DimensionError("loss: target shape does not match output");
  }
  const double count = static_cast<double>(y.size());
  y_bar = Matrix(y.rows(), y.cols());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = y.data()[i] - target.data()[i];
    sum += diff * diff;
    y_bar.data()[i] = 2.0 * diff / count;
  }
  const double loss = sum / count;
  if (!std::isfinite(loss)) throw NonFiniteError("loss: non-finite forward output");
  return loss;
}

// Shared by HOFT and SHOFT; m_vec == nullptr means no scaling.
double householder_backward(const HoftAdapter& h, const Matrix* m_vec, const Matrix& w0,
                            const Matrix& x, const Matrix& target, Matrix& du, Matrix& dv,
                            Matrix* dm) {
  const CwyFactors fu = factors_u(h);
  const CwyFactors fv = factors_v(h);
  const Matrix a = apply_q(fv, x);
  const Matrix b = matmul(w0, a);
  const Matrix c = m_vec ? scale_rows(b, m_vec->data()) : b;
  const Matrix y = apply_q(fu, c);

  Matrix y_bar;
  const double loss = mse_and_residual_grad(y, target, y_bar);

  du = Matrix(h.u.rows(), h.u.cols());
  dv = Matrix(h.v.rows(), h.v.cols());
  const Matrix c_bar = cwy_backward(fu, c, y_bar, du);
  Matrix b_bar = c_bar;
  if (m_vec) {
    *dm = Matrix(m_vec->rows(), 1);
    for (std::size_t i = 0; i < b.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < b.cols(); ++j) s += c_bar(i, j) * b(i, j);
      (*dm)(i, 0) = s;
    }
    b_bar = scale_rows(c_bar, m_vec->data());
  }
  const Matrix a_bar = matmul_tn(w0, b_bar);
  cwy_backward(fv, x, a_bar, dv);
  return loss;
}

}  // namespace

bool GradBundle::has(std::string_view name) const {
  return std::any_of(grads.begin(), grads.end(), [&](const Entry& e) { return e.name == name; });
}

const Matrix& GradBundle::get(std::string_view name) const {
  for (const auto& e : grads)
    if (e.name == name) return e.value;
  throw Error("GradBundle: no gradient named '" + std::string(name) + "'");
}

Matrix cwy_backward(const CwyFactors& f, const Matrix& x, const Matrix& y_bar, Matrix& u_grad) {
  const Matrix& u = f.u;
  const Matrix w = matmul_tn(u, x);        // r×k
  const Matrix z = matmul(f.core, w);      // r×k
  const Matrix z_bar = matmul_tn(u, y_bar);
  const Matrix b_bar = matmul_nt(z_bar, w);
  const Matrix w_bar = matmul_tn(f.core, z_bar);

  u_grad += matmul_nt(y_bar, z);
  u_grad += matmul_nt(x, w_bar);
  const Matrix g_bar = core_backward(f, b_bar);
  u_grad += matmul(u, add(g_bar, transpose(g_bar)));

  Matrix x_bar = y_bar;
  x_bar += matmul(u, w_bar);
  return x_bar;
}

double mse_loss(const Adapter& adapter, const Matrix& w0, const Matrix& x, const Matrix& y_target) {
  const Matrix y = forward(adapter, w0, x);
  Matrix unused;
  return mse_and_residual_grad(y, y_target, unused);
}

GradBundle loss_and_grads(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                          const Matrix& y_target) {
  GradBundle out;
  std::visit(
      overloaded{
          [&](const HoftAdapter& h) {
            Matrix du, dv;
            out.loss = householder_backward(h, nullptr, w0, x, y_target, du, dv, nullptr);
            out.grads = {{"u", std::move(du)}, {"v", std::move(dv)}};
          },
          [&](const ShoftAdapter& s) {
            Matrix du, dv, dm;
            out.loss = householder_backward(s.hoft, &s.m_vec, w0, x, y_target, du, dv, &dm);
            out.grads = {{"u", std::move(du)}, {"v", std::move(dv)}, {"m_vec", std::move(dm)}};
          },
          [&](const LoraAdapter& l) {
            const Matrix bx = matmul(l.b, x);
            Matrix y = matmul(w0, x);
            y += l.scaling * matmul(l.a, bx);
            Matrix y_bar;
            out.loss = mse_and_residual_grad(y, y_target, y_bar);
            Matrix da = matmul_nt(y_bar, bx);
            da *= l.scaling;
            Matrix db = matmul_nt(matmul_tn(l.a, y_bar), x);
            db *= l.scaling;
            out.grads = {{"a", std::move(da)}, {"b", std::move(db)}};
          },
          [&](const OftCayleyAdapter& o) {
            const Matrix c = matmul(w0, x);
            const Matrix y = forward(adapter, w0, x);
            Matrix y_bar;
            out.loss = mse_and_residual_grad(y, y_target, y_bar);
            const std::size_t bs = o.block_size, k = x.cols();
            Matrix dtheta(o.theta.rows(), o.theta.cols());
            for (std::size_t blk = 0; blk < o.num_blocks(); ++blk) {
              const Matrix r = skew_block(o, blk);
              const Matrix kinv = lu_inverse(Matrix::identity(bs) - r);
              Matrix q = matmul(Matrix::identity(bs) + r, kinv);
              Matrix q_bar(bs, bs);
              for (std::size_t i = 0; i < bs; ++i)
                for (std::size_t j = 0; j < bs; ++j) {
                  double s = 0.0;
                  for (std::size_t t = 0; t < k; ++t) s += y_bar(blk * bs + i, t) * c(blk * bs + j, t);
                  q_bar(i, j) = s;
                }
              // dQ = (I + Q)·dR·K  ⇒  R̄ = (I + Q)ᵀ·Q̄·Kᵀ
              for (std::size_t i = 0; i < bs; ++i) q(i, i) += 1.0;
              const Matrix r_bar = matmul_nt(matmul_tn(q, q_bar), kinv);
              std::size_t idx = 0;
              for (std::size_t i = 0; i < bs; ++i)
                for (std::size_t j = i + 1; j < bs; ++j, ++idx)
                  dtheta(blk, idx) = r_bar(i, j) - r_bar(j, i);
            }
            out.grads = {{"theta", std::move(dtheta)}};
          },
      },
      adapter);
  for (const auto& g : out.grads) {
    if (!g.value.all_finite()) throw NonFiniteError("loss_and_grads: non-finite gradient " + g.name);
  }
  return out;
}

GradBundle finite_diff_grads(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                             const Matrix& y_target, double h) {
  if (!(h > 0.0)) throw Error("finite_diff_grads: step must be positive");
  Adapter probe = adapter;
  GradBundle out;
  out.loss = mse_loss(adapter, w0, x, y_target);
  for (auto& p : parameters(probe)) {
    Matrix g(p.value->rows(), p.value->cols());
    auto values = p.value->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = mse_loss(probe, w0, x, y_target);
      values[i] = saved - h;
      const double minus = mse_loss(probe, w0, x, y_target);
      values[i] = saved;
      g.data()[i] = (plus - minus) / (2.0 * h);
    }
    out.grads.push_back({std::string(p.name), std::move(g)});
  }
  return out;
}

double central_difference(const std::function<double(double)>& f, double p, double h) {
  return (f(p + h) - f(p - h)) / (2.0 * h);
}

double max_relative_error(const GradBundle& analytic, const GradBundle& numeric) {
  if (analytic.grads.size() != numeric.grads.size()) {
    throw DimensionError("max_relative_error: bundles describe different parameter sets");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.grads.size(); ++p) {
    const auto& a = analytic.grads[p].value;
    const auto& n = numeric.grads[p].value;
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      throw DimensionError("max_relative_error: shape mismatch for " + analytic.grads[p].name);
    }
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a.data()[i], y = n.data()[i];
      diff = std::max(diff, std::abs(x - y));
      scale = std::max({scale, std::abs(x), std::abs(y)});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

double grad_check(const Adapter& adapter, const Matrix& w0, const Matrix& x,
                  const Matrix& y_target, double h) {
  return max_relative_error(loss_and_grads(adapter, w0, x, y_target),
                            finite_diff_grads(adapter, w0, x, y_target, h));
}

}  // namespace hoft
