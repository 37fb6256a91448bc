#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "hoft/adapter.hpp"
#include "hoft/quant.hpp"

namespace hoft {

inline constexpr int kCheckpointSchema = 1;

/// Adapter parameters plus optional frozen/merged weights.
///
/// JSON layout:
///   { "schema": 1, "kind": "hoft"|"shoft"|"lora"|"oft", "m": int, "n": int, "rank": int,
///     "mode": "exact"|"neumann2", "clamp_eps": float,
///     "tensors": { name: { "shape": [rows, cols], "data_b64": <little-endian f64, row-major> } } }
///
/// Adapter tensors: hoft {u, v}; shoft {u, v, m_vec}; lora {a, b, scaling (1×1)}; oft {theta}.
/// For oft, "rank" is the block size. Optional tensors: "merged" (dense m×n) and "base"
/// (NF4, see below). NF4 entries carry "codec": "nf4", "shape", "block_size",
/// "codes_b64" (two codes per byte, low nibble first) and either "absmax_b64"
/// (little-endian f32 per block) or the double-quantization triple
/// "dq_group_size", "dq_codes_b64" (u8), "dq_offsets_b64", "dq_steps_b64" (f32).
/// Unknown keys anywhere are rejected.
struct Checkpoint {
  Adapter adapter;
  std::optional<Nf4Tensor> base;
  std::optional<Matrix> merged;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const Adapter& adapter, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace hoft
