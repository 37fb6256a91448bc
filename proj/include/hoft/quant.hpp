#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "hoft/adapter.hpp"
#include "hoft/grad.hpp"
#include "hoft/matrix.hpp"

namespace hoft {

inline constexpr std::size_t kNf4BlockSize = 64;
inline constexpr std::size_t kDoubleQuantGroupSize = 256;

/// The 16 NormalFloat4 levels, ascending, in [−1, 1].
///
/// Built as in QLoRA with offset δ = 0.9677083:
///   positive: Φ⁻¹(δ + i·(0.5 − δ)/8), i = 0..7   (8 values)
///   negative: −Φ⁻¹(δ + i·(0.5 − δ)/7), i = 0..6  (7 values)
///   plus an exact 0, then everything divided by Φ⁻¹(δ).
const std::array<double, 16>& nf4_levels();

/// Index of the nearest NF4 level to a normalized value; ties go to the lower index.
std::uint8_t nearest_nf4_code(double normalized);

/// Blockwise NF4 quantized matrix. Blocks are consecutive runs of `block_size`
/// elements in row-major order; the last block may be short.
struct Nf4Tensor {
  /// Second-level 8-bit affine quantization of the block scales, per group.
  struct ScaleQuant {
    std::size_t group_size = kDoubleQuantGroupSize;
    std::vector<std::uint8_t> codes;  // one per block
    std::vector<float> offsets;       // group minimum
    std::vector<float> steps;         // (max − min) / 255

    friend bool operator==(const ScaleQuant&, const ScaleQuant&) = default;
  };

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t block_size = kNf4BlockSize;
  std::vector<std::uint8_t> codes;  // one per element, each in [0, 15]
  std::vector<float> absmax;        // per block; empty when scales are double-quantized
  std::optional<ScaleQuant> scale_quant;

  std::size_t num_blocks() const noexcept {
    return (rows * cols + block_size - 1) / block_size;
  }
  bool double_quantized() const noexcept { return scale_quant.has_value(); }

  friend bool operator==(const Nf4Tensor&, const Nf4Tensor&) = default;
};

Nf4Tensor quantize(const Matrix& w, std::size_t block_size = kNf4BlockSize,
                   bool double_quant = false);
Matrix dequantize(const Nf4Tensor& q);

/// Per-block scale used at dequantization (reconstructed under double quantization).
std::vector<double> block_scales(const Nf4Tensor& q);

/// RMS(dequantize(quantize(w)) − w) / RMS(w).
double relative_rms_error(const Matrix& w, const Nf4Tensor& q);

/// Codes packed two per byte, element 2i in the low nibble.
std::vector<std::uint8_t> pack_codes(const std::vector<std::uint8_t>& codes);
std::vector<std::uint8_t> unpack_codes(const std::vector<std::uint8_t>& packed, std::size_t count);

/// Adapted forward over the dequantized frozen base.
Matrix qforward(const Adapter& adapter, const Nf4Tensor& qbase, const Matrix& x);
/// Adapter gradients with the dequantized base held constant.
GradBundle qloss_and_grads(const Adapter& adapter, const Nf4Tensor& qbase, const Matrix& x,
                           const Matrix& y_target);

}  // namespace hoft
