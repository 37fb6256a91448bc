#pragma once

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

#include "hoft/cwy.hpp"
#include "hoft/matrix.hpp"
#include "hoft/rng.hpp"

namespace hoft {

// All adapters wrap a frozen linear map y = W0·x with W0 ∈ ℝ^{m×n}. Orthogonal
// factors act as M̂ = Q_U·W0·Q_V: Q_V on the input side, Q_U on the output side.

/// Two-sided Householder adapter: Householder vectors U (m×r) and V (n×r).
struct HoftAdapter {
  Matrix u;
  Matrix v;
  InverseMode mode = InverseMode::NeumannTwoTerm;
  double clamp_eps = kDefaultClampEps;

  std::size_t out_dim() const noexcept { return u.rows(); }
  std::size_t in_dim() const noexcept { return v.rows(); }
  std::size_t rank() const noexcept { return u.cols(); }
};

/// HOFT plus a per-output-row magnitude: M̂ = Q_U·diag(m)·W0·Q_V.
struct ShoftAdapter {
  HoftAdapter hoft;
  Matrix m_vec;  // m×1, unconstrained

  std::size_t out_dim() const noexcept { return hoft.out_dim(); }
  std::size_t in_dim() const noexcept { return hoft.in_dim(); }
  std::size_t rank() const noexcept { return hoft.rank(); }
};

/// W0 + scaling·A·B with A m×r and B r×n.
struct LoraAdapter {
  Matrix a;
  Matrix b;
  double scaling = 1.0;

  std::size_t out_dim() const noexcept { return a.rows(); }
  std::size_t in_dim() const noexcept { return b.cols(); }
  std::size_t rank() const noexcept { return a.cols(); }
};

/// Block-diagonal Cayley OFT on the output side. Row i of `theta` holds the
/// strict upper triangle (row-major) of the i-th skew-symmetric block R_i, and
/// Q_i = (I + R_i)(I − R_i)⁻¹.
struct OftCayleyAdapter {
  std::size_t out_features = 0;
  std::size_t in_features = 0;
  std::size_t block_size = 1;
  Matrix theta;

  std::size_t out_dim() const noexcept { return out_features; }
  std::size_t in_dim() const noexcept { return in_features; }
  std::size_t num_blocks() const noexcept { return out_features / block_size; }
};

using Adapter = std::variant<HoftAdapter, ShoftAdapter, LoraAdapter, OftCayleyAdapter>;

enum class AdapterKind { Hoft, Shoft, Lora, Oft };

AdapterKind kind_of(const Adapter& adapter);
std::string_view to_string(AdapterKind kind);
AdapterKind parse_adapter_kind(std::string_view text);

std::size_t out_dim(const Adapter& adapter);
std::size_t in_dim(const Adapter& adapter);
/// Householder vectors per side for HOFT/SHOFT, inner rank for LoRA, block size for OFT.
std::size_t rank_of(const Adapter& adapter);

/// Identity initialization: ⌊r/2⌋ gaussian column pairs (uᵢ|uᵢ), orthogonal across
/// pairs, plus a zero column when r is odd, for both U and V. Both orthogonal factors evaluate to I.
HoftAdapter init_identity(std::size_t m, std::size_t n, std::size_t r, Rng& rng,
                          InverseMode mode = InverseMode::NeumannTwoTerm,
                          double clamp_eps = kDefaultClampEps);
ShoftAdapter init_shoft(std::size_t m, std::size_t n, std::size_t r, Rng& rng,
                        InverseMode mode = InverseMode::NeumannTwoTerm,
                        double clamp_eps = kDefaultClampEps);
/// A ~ N(0, 1/m) entrywise, B = 0.
LoraAdapter init_lora(std::size_t m, std::size_t n, std::size_t r, Rng& rng, double scaling = 1.0);
/// All blocks zero. Requires block_size | m.
OftCayleyAdapter init_oft(std::size_t m, std::size_t n, std::size_t block_size);

Adapter init_adapter(AdapterKind kind, std::size_t m, std::size_t n, std::size_t rank, Rng& rng,
                     InverseMode mode = InverseMode::NeumannTwoTerm);

CwyFactors factors_u(const HoftAdapter& h);
CwyFactors factors_v(const HoftAdapter& h);

/// Skew-symmetric block i of an OFT adapter.
Matrix skew_block(const OftCayleyAdapter& oft, std::size_t block);
/// Block-diagonal (I + R)(I − R)⁻¹.
Matrix cayley_q(const OftCayleyAdapter& oft);

/// Materialized adapted weight.
Matrix adapted_weight(const Adapter& adapter, const Matrix& w0);
/// Adapted forward y = M̂·x via factored applications, never forming M̂ or Q.
Matrix forward(const Adapter& adapter, const Matrix& w0, const Matrix& x);
/// Fold the adapter into the base weight.
Matrix merge(const Adapter& adapter, const Matrix& w0);
Matrix lora_forward(const LoraAdapter& lora, const Matrix& w0, const Matrix& x);

std::size_t param_count(const Adapter& adapter);

/// Named view over one trainable tensor.
struct ParamRef {
  std::string_view name;
  Matrix* value;
};
struct ConstParamRef {
  std::string_view name;
  const Matrix* value;
};

/// Trainable tensors in a fixed order:
///   hoft: u, v   shoft: u, v, m_vec   lora: a, b   oft: theta
std::vector<ParamRef> parameters(Adapter& adapter);
std::vector<ConstParamRef> parameters(const Adapter& adapter);

}  // namespace hoft
