#include "hoft/adapter.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "hoft/error.hpp"

namespace hoft {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Gaussian pairs, each projected off the earlier pairs (Gram-Schmidt, two passes).
// With pairs mutually orthogonal the two-term inverse is exact here too.
Matrix paired_columns(std::size_t dim, std::size_t r, Rng& rng) {
  Matrix u(dim, r);
  std::vector<double> z(dim);
  for (std::size_t c = 0; c + 1 < r; c += 2) {
    for (double& v : z) v = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < c; p += 2) {
        double dot = 0.0, norm2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
          dot += z[i] * u(i, p);
          norm2 += u(i, p) * u(i, p);
        }
        for (std::size_t i = 0; i < dim; ++i) z[i] -= dot / norm2 * u(i, p);
      }
    }
    u.set_column(c, z);
    u.set_column(c + 1, z);
  }
  return u;
}

void require_base(const Adapter& adapter, const Matrix& w0, const char* op) {
  if (w0.rows() != out_dim(adapter) || w0.cols() != in_dim(adapter)) {
    throw DimensionError(std::string(op) + ": base weight is " + std::to_string(w0.rows()) + "x" +
                         std::to_string(w0.cols()) + ", adapter expects " +
                         std::to_string(out_dim(adapter)) + "x" + std::to_string(in_dim(adapter)));
  }
}

// Rows of x are partitioned into consecutive blocks of the OFT block size.
Matrix apply_block_diagonal(const OftCayleyAdapter& oft, const Matrix& x) {
  const std::size_t b = oft.block_size;
  Matrix y(x.rows(), x.cols());
  Matrix rows(b, x.cols());
  for (std::size_t blk = 0; blk < oft.num_blocks(); ++blk) {
    const Matrix r = skew_block(oft, blk);
    Matrix i_plus = Matrix::identity(b) + r;
    Matrix i_minus = Matrix::identity(b) - r;
    const Matrix q = matmul(i_plus, lu_inverse(i_minus));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) rows(i, j) = x(blk * b + i, j);
    const Matrix out = matmul(q, rows);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) y(blk * b + i, j) = out(i, j);
  }
  return y;
}

}  // namespace

AdapterKind kind_of(const Adapter& adapter) {
  return std::visit(overloaded{
                        [](const HoftAdapter&) { return AdapterKind::Hoft; },
                        [](const ShoftAdapter&) { return AdapterKind::Shoft; },
                        [](const LoraAdapter&) { return AdapterKind::Lora; },
                        [](const OftCayleyAdapter&) { return AdapterKind::Oft; },
                    },
                    adapter);
}

std::string_view to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::Hoft: return "hoft";
    case AdapterKind::Shoft: return "shoft";
    case AdapterKind::Lora: return "lora";
    case AdapterKind::Oft: return "oft";
  }
  return "?";
}

AdapterKind parse_adapter_kind(std::string_view text) {
  if (text == "hoft") return AdapterKind::Hoft;
  if (text == "shoft") return AdapterKind::Shoft;
  if (text == "lora") return AdapterKind::Lora;
  if (text == "oft") return AdapterKind::Oft;
  throw Error("unknown adapter kind '" + std::string(text) + "' (expected hoft|shoft|lora|oft)");
}

std::size_t out_dim(const Adapter& adapter) {
  return std::visit([](const auto& a) { return a.out_dim(); }, adapter);
}

std::size_t in_dim(const Adapter& adapter) {
  return std::visit([](const auto& a) { return a.in_dim(); }, adapter);
}

std::size_t rank_of(const Adapter& adapter) {
  return std::visit(overloaded{
                        [](const OftCayleyAdapter& o) { return o.block_size; },
                        [](const auto& a) { return a.rank(); },
                    },
                    adapter);
}

HoftAdapter init_identity(std::size_t m, std::size_t n, std::size_t r, Rng& rng, InverseMode mode,
                          double clamp_eps) {
  if (r == 0 || r > m || r > n) {
    throw DimensionError("init_identity: rank " + std::to_string(r) + " must lie in [1, min(" +
                         std::to_string(m) + ", " + std::to_string(n) + ")]");
  }
  HoftAdapter h;
  h.u = paired_columns(m, r, rng);
  h.v = paired_columns(n, r, rng);
  h.mode = mode;
  h.clamp_eps = clamp_eps;
  return h;
}

ShoftAdapter init_shoft(std::size_t m, std::size_t n, std::size_t r, Rng& rng, InverseMode mode,
                        double clamp_eps) {
  ShoftAdapter s;
  s.hoft = init_identity(m, n, r, rng, mode, clamp_eps);
  s.m_vec = Matrix(m, 1, 1.0);
  return s;
}

LoraAdapter init_lora(std::size_t m, std::size_t n, std::size_t r, Rng& rng, double scaling) {
  if (r == 0 || r > m || r > n) throw DimensionError("init_lora: rank out of range");
  LoraAdapter l;
  l.a = gaussian_matrix(rng, m, r);
  l.a *= 1.0 / std::sqrt(static_cast<double>(m));
  l.b = Matrix(r, n);
  l.scaling = scaling;
  return l;
}

OftCayleyAdapter init_oft(std::size_t m, std::size_t n, std::size_t block_size) {
  if (block_size == 0 || m % block_size != 0) {
    throw DimensionError("init_oft: block size " + std::to_string(block_size) +
                         " must divide " + std::to_string(m));
  }
  OftCayleyAdapter o;
  o.out_features = m;
  o.in_features = n;
  o.block_size = block_size;
  o.theta = Matrix(m / block_size, block_size * (block_size - 1) / 2);
  return o;
}

Adapter init_adapter(AdapterKind kind, std::size_t m, std::size_t n, std::size_t rank, Rng& rng,
                     InverseMode mode) {
  switch (kind) {
    case AdapterKind::Hoft: return init_identity(m, n, rank, rng, mode);
    case AdapterKind::Shoft: return init_shoft(m, n, rank, rng, mode);
    case AdapterKind::Lora: return init_lora(m, n, rank, rng);
    case AdapterKind::Oft: return init_oft(m, n, rank);
  }
  throw Error("init_adapter: unknown kind");
}

CwyFactors factors_u(const HoftAdapter& h) { return build_factors(h.u, h.mode, h.clamp_eps); }
CwyFactors factors_v(const HoftAdapter& h) { return build_factors(h.v, h.mode, h.clamp_eps); }

Matrix skew_block(const OftCayleyAdapter& oft, std::size_t block) {
  const std::size_t b = oft.block_size;
  Matrix r(b, b);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j, ++idx) {
      r(i, j) = oft.theta(block, idx);
      r(j, i) = -oft.theta(block, idx);
    }
  }
  return r;
}

Matrix cayley_q(const OftCayleyAdapter& oft) {
  return apply_block_diagonal(oft, Matrix::identity(oft.out_features));
}

Matrix adapted_weight(const Adapter& adapter, const Matrix& w0) {
  require_base(adapter, w0, "adapted_weight");
  return std::visit(
      overloaded{
          [&](const HoftAdapter& h) {
            return apply_q(factors_u(h), apply_q_right(factors_v(h), w0));
          },
          [&](const ShoftAdapter& s) {
            const Matrix scaled = scale_rows(w0, s.m_vec.data());
            return apply_q(factors_u(s.hoft), apply_q_right(factors_v(s.hoft), scaled));
          },
          [&](const LoraAdapter& l) { return w0 + l.scaling * matmul(l.a, l.b); },
          [&](const OftCayleyAdapter& o) { return apply_block_diagonal(o, w0); },
      },
      adapter);
}

Matrix forward(const Adapter& adapter, const Matrix& w0, const Matrix& x) {
  require_base(adapter, w0, "forward");
  if (x.rows() != w0.cols()) {
    throw DimensionError("forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(w0.cols()));
  }
  return std::visit(
      overloaded{
          [&](const HoftAdapter& h) {
            return apply_q(factors_u(h), matmul(w0, apply_q(factors_v(h), x)));
          },
          [&](const ShoftAdapter& s) {
            const Matrix inner = matmul(w0, apply_q(factors_v(s.hoft), x));
            return apply_q(factors_u(s.hoft), scale_rows(inner, s.m_vec.data()));
          },
          [&](const LoraAdapter& l) { return lora_forward(l, w0, x); },
          [&](const OftCayleyAdapter& o) { return apply_block_diagonal(o, matmul(w0, x)); },
      },
      adapter);
}

Matrix merge(const Adapter& adapter, const Matrix& w0) { return adapted_weight(adapter, w0); }

Matrix lora_forward(const LoraAdapter& lora, const Matrix& w0, const Matrix& x) {
  if (w0.rows() != lora.out_dim() || w0.cols() != lora.in_dim() || x.rows() != w0.cols()) {
    throw DimensionError("lora_forward: shape mismatch");
  }
  Matrix y = matmul(w0, x);
  y += lora.scaling * matmul(lora.a, matmul(lora.b, x));
  return y;
}

std::size_t param_count(const Adapter& adapter) {
  return std::visit(overloaded{
                        [](const HoftAdapter& h) { return h.u.size() + h.v.size(); },
                        [](const ShoftAdapter& s) {
                          return s.hoft.u.size() + s.hoft.v.size() + s.m_vec.size();
                        },
                        [](const LoraAdapter& l) { return l.a.size() + l.b.size(); },
                        [](const OftCayleyAdapter& o) { return o.theta.size(); },
                    },
                    adapter);
}

std::vector<ParamRef> parameters(Adapter& adapter) {
  return std::visit(overloaded{
                        [](HoftAdapter& h) {
                          return std::vector<ParamRef>{{"u", &h.u}, {"v", &h.v}};
                        },
                        [](ShoftAdapter& s) {
                          return std::vector<ParamRef>{
                              {"u", &s.hoft.u}, {"v", &s.hoft.v}, {"m_vec", &s.m_vec}};
                        },
                        [](LoraAdapter& l) {
                          return std::vector<ParamRef>{{"a", &l.a}, {"b", &l.b}};
                        },
                        [](OftCayleyAdapter& o) {
                          return std::vector<ParamRef>{{"theta", &o.theta}};
                        },
                    },
                    adapter);
}

std::vector<ConstParamRef> parameters(const Adapter& adapter) {
  auto& mutable_adapter = const_cast<Adapter&>(adapter);
  std::vector<ConstParamRef> out;
  for (const auto& p : parameters(mutable_adapter)) out.push_back({p.name, p.value});
  return out;
}

}  // namespace hoft
