#include "hoft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <sodium.h>

#include <json.hpp>

#include "hoft/error.hpp"

namespace hoft {
namespace {

using nlohmann::json;

template <class T>
std::vector<std::uint8_t> to_le_bytes(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &values[i], sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    std::memcpy(out.data() + i * sizeof(T), raw, sizeof(T));
  }
  return out;
}

template <class T>
std::vector<T> from_le_bytes(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() % sizeof(T) != 0) {
    throw CheckpointError(what + ": byte length " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(sizeof(T)));
  }
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + i * sizeof(T), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    std::memcpy(&out[i], raw, sizeof(T));
  }
  return out;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw CheckpointError(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw CheckpointError(where + ": unknown key '" + key + "'");
  }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CheckpointError(where + ": missing key '" + key + "'");
  return *it;
}

template <class T>
T require_as(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw CheckpointError(where + ": key '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

json encode_dense(const Matrix& m) {
  return json{{"shape", {m.rows(), m.cols()}},
              {"data_b64", base64_encode(to_le_bytes<double>(m.data()))}};
}

std::pair<std::size_t, std::size_t> read_shape(const json& entry, const std::string& where) {
  const json& shape = require(entry, "shape", where);
  if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_unsigned() ||
      !shape[1].is_number_unsigned()) {
    throw CheckpointError(where + ": shape must be [rows, cols] of non-negative integers");
  }
  return {shape[0].get<std::size_t>(), shape[1].get<std::size_t>()};
}

Matrix decode_dense(const json& entry, const std::string& where) {
  reject_unknown_keys(entry, {"shape", "data_b64"}, where);
  const auto [rows, cols] = read_shape(entry, where);
  auto values = from_le_bytes<double>(base64_decode(require_as<std::string>(entry, "data_b64", where)), where);
  if (values.size() != rows * cols) {
    throw CheckpointError(where + ": expected " + std::to_string(rows * cols) + " values, found " +
                          std::to_string(values.size()));
  }
  return Matrix(rows, cols, std::move(values));
}

json encode_nf4(const Nf4Tensor& q) {
  json j{{"codec", "nf4"},
         {"shape", {q.rows, q.cols}},
         {"block_size", q.block_size},
         {"codes_b64", base64_encode(pack_codes(q.codes))}};
  if (q.scale_quant) {
    const auto& sq = *q.scale_quant;
    j["dq_group_size"] = sq.group_size;
    j["dq_codes_b64"] = base64_encode(sq.codes);
    j["dq_offsets_b64"] = base64_encode(to_le_bytes<float>(sq.offsets));
    j["dq_steps_b64"] = base64_encode(to_le_bytes<float>(sq.steps));
  } else {
    j["absmax_b64"] = base64_encode(to_le_bytes<float>(q.absmax));
  }
  return j;
}

Nf4Tensor decode_nf4(const json& entry, const std::string& where) {
  const bool dq = entry.contains("dq_group_size");
  if (dq) {
    reject_unknown_keys(entry, {"codec", "shape", "block_size", "codes_b64", "dq_group_size",
                                "dq_codes_b64", "dq_offsets_b64", "dq_steps_b64"}, where);
  } else {
    reject_unknown_keys(entry, {"codec", "shape", "block_size", "codes_b64", "absmax_b64"}, where);
  }
  Nf4Tensor q;
  std::tie(q.rows, q.cols) = read_shape(entry, where);
  q.block_size = require_as<std::size_t>(entry, "block_size", where);
  if (q.block_size == 0) throw CheckpointError(where + ": block_size must be >= 1");
  const auto packed = base64_decode(require_as<std::string>(entry, "codes_b64", where));
  if (packed.size() != (q.rows * q.cols + 1) / 2) {
    throw CheckpointError(where + ": packed code length does not match shape");
  }
  q.codes = unpack_codes(packed, q.rows * q.cols);
  const std::size_t nblocks = q.num_blocks();
  if (dq) {
    Nf4Tensor::ScaleQuant sq;
    sq.group_size = require_as<std::size_t>(entry, "dq_group_size", where);
    if (sq.group_size == 0) throw CheckpointError(where + ": dq_group_size must be >= 1");
    sq.codes = base64_decode(require_as<std::string>(entry, "dq_codes_b64", where));
    sq.offsets = from_le_bytes<float>(base64_decode(require_as<std::string>(entry, "dq_offsets_b64", where)), where);
    sq.steps = from_le_bytes<float>(base64_decode(require_as<std::string>(entry, "dq_steps_b64", where)), where);
    const std::size_t ngroups = (nblocks + sq.group_size - 1) / sq.group_size;
    if (sq.codes.size() != nblocks || sq.offsets.size() != ngroups || sq.steps.size() != ngroups) {
      throw CheckpointError(where + ": double-quantization tables do not match block count");
    }
    q.scale_quant = std::move(sq);
  } else {
    q.absmax = from_le_bytes<float>(base64_decode(require_as<std::string>(entry, "absmax_b64", where)), where);
    if (q.absmax.size() != nblocks) throw CheckpointError(where + ": absmax count does not match blocks");
  }
  return q;
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminating NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t written = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &written, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw CheckpointError("invalid base64 payload");
  }
  out.resize(written);
  return out;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  const Adapter& adapter = ckpt.adapter;
  const AdapterKind kind = kind_of(adapter);
  json j;
  j["schema"] = kCheckpointSchema;
  j["kind"] = std::string(to_string(kind));
  j["m"] = out_dim(adapter);
  j["n"] = in_dim(adapter);
  j["rank"] = rank_of(adapter);
  InverseMode mode = InverseMode::NeumannTwoTerm;
  double clamp_eps = kDefaultClampEps;
  if (const auto* h = std::get_if<HoftAdapter>(&adapter)) {
    mode = h->mode;
    clamp_eps = h->clamp_eps;
  } else if (const auto* s = std::get_if<ShoftAdapter>(&adapter)) {
    mode = s->hoft.mode;
    clamp_eps = s->hoft.clamp_eps;
  }
  j["mode"] = std::string(to_string(mode));
  j["clamp_eps"] = clamp_eps;

  json tensors = json::object();
  for (const auto& p : parameters(adapter)) tensors[std::string(p.name)] = encode_dense(*p.value);
  if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
    tensors["scaling"] = encode_dense(Matrix(1, 1, l->scaling));
  }
  if (ckpt.merged) tensors["merged"] = encode_dense(*ckpt.merged);
  if (ckpt.base) tensors["base"] = encode_nf4(*ckpt.base);
  j["tensors"] = std::move(tensors);
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const std::string where = "checkpoint";
  reject_unknown_keys(j, {"schema", "kind", "m", "n", "rank", "mode", "clamp_eps", "tensors"}, where);
  const int schema = require_as<int>(j, "schema", where);
  if (schema != kCheckpointSchema) {
    throw CheckpointError("checkpoint schema " + std::to_string(schema) + " is not supported (expected " +
                          std::to_string(kCheckpointSchema) + ")");
  }
  AdapterKind kind;
  InverseMode mode;
  try {
    kind = parse_adapter_kind(require_as<std::string>(j, "kind", where));
    mode = parse_inverse_mode(require_as<std::string>(j, "mode", where));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  const auto m = require_as<std::size_t>(j, "m", where);
  const auto n = require_as<std::size_t>(j, "n", where);
  const auto rank = require_as<std::size_t>(j, "rank", where);
  const auto clamp_eps = require_as<double>(j, "clamp_eps", where);
  if (!(clamp_eps > 0.0)) throw CheckpointError("checkpoint: clamp_eps must be positive");

  const json& tensors = require(j, "tensors", where);
  if (!tensors.is_object()) throw CheckpointError("checkpoint: tensors must be an object");

  std::set<std::string> allowed{"merged", "base"};
  switch (kind) {
    case AdapterKind::Hoft: allowed.insert({"u", "v"}); break;
    case AdapterKind::Shoft: allowed.insert({"u", "v", "m_vec"}); break;
    case AdapterKind::Lora: allowed.insert({"a", "b", "scaling"}); break;
    case AdapterKind::Oft: allowed.insert("theta"); break;
  }
  reject_unknown_keys(tensors, allowed, "checkpoint.tensors");
  auto dense = [&](const std::string& name) {
    return decode_dense(require(tensors, name, "checkpoint.tensors"), "tensor '" + name + "'");
  };

  Checkpoint ckpt;
  switch (kind) {
    case AdapterKind::Hoft:
    case AdapterKind::Shoft: {
      if (rank == 0 || rank > m || rank > n) throw CheckpointError("checkpoint: rank out of range");
      HoftAdapter h;
      h.u = dense("u");
      h.v = dense("v");
      h.mode = mode;
      h.clamp_eps = clamp_eps;
      expect_shape(h.u, m, rank, "u");
      expect_shape(h.v, n, rank, "v");
      if (kind == AdapterKind::Hoft) {
        ckpt.adapter = std::move(h);
      } else {
        ShoftAdapter s;
        s.hoft = std::move(h);
        s.m_vec = dense("m_vec");
        expect_shape(s.m_vec, m, 1, "m_vec");
        ckpt.adapter = std::move(s);
      }
      break;
    }
    case AdapterKind::Lora: {
      LoraAdapter l;
      l.a = dense("a");
      l.b = dense("b");
      expect_shape(l.a, m, rank, "a");
      expect_shape(l.b, rank, n, "b");
      const Matrix scaling = dense("scaling");
      expect_shape(scaling, 1, 1, "scaling");
      l.scaling = scaling(0, 0);
      ckpt.adapter = std::move(l);
      break;
    }
    case AdapterKind::Oft: {
      if (rank == 0 || m % rank != 0) throw CheckpointError("checkpoint: oft block size must divide m");
      OftCayleyAdapter o;
      o.out_features = m;
      o.in_features = n;
      o.block_size = rank;
      o.theta = dense("theta");
      expect_shape(o.theta, m / rank, rank * (rank - 1) / 2, "theta");
      ckpt.adapter = std::move(o);
      break;
    }
  }

  for (const auto& p : parameters(ckpt.adapter)) {
    if (!p.value->all_finite()) throw CheckpointError("tensor '" + std::string(p.name) + "' has non-finite values");
  }
  if (tensors.contains("merged")) {
    ckpt.merged = dense("merged");
    expect_shape(*ckpt.merged, m, n, "merged");
  }
  if (tensors.contains("base")) {
    const json& entry = tensors["base"];
    if (!entry.is_object() || require_as<std::string>(entry, "codec", "tensor 'base'") != "nf4") {
      throw CheckpointError("tensor 'base' must carry codec nf4");
    }
    ckpt.base = decode_nf4(entry, "tensor 'base'");
    if (ckpt.base->rows != m || ckpt.base->cols != n) {
      throw CheckpointError("tensor 'base' shape does not match the adapter");
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(ckpt);
  out.flush();
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

void save_checkpoint(const Adapter& adapter, const std::filesystem::path& path) {
  save_checkpoint(Checkpoint{adapter, std::nullopt, std::nullopt}, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace hoft
