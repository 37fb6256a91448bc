#include "hoft/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "hoft/error.hpp"

namespace hoft {
namespace {

std::array<double, 16> build_levels() {
  constexpr double offset = 0.9677083;
  const boost::math::normal_distribution<double> normal;
  std::array<double, 16> v{};
  std::size_t k = 0;
  for (int i = 0; i < 8; ++i) v[k++] = boost::math::quantile(normal, offset + i * (0.5 - offset) / 8.0);
  v[k++] = 0.0;
  for (int i = 0; i < 7; ++i) v[k++] = -boost::math::quantile(normal, offset + i * (0.5 - offset) / 7.0);
  const double top = boost::math::quantile(normal, offset);
  for (double& x : v) x /= top;
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

const std::array<double, 16>& nf4_levels() {
  static const std::array<double, 16> levels = build_levels();
  return levels;
}

std::uint8_t nearest_nf4_code(double normalized) {
  const auto& levels = nf4_levels();
  std::uint8_t best = 0;
  double best_dist = std::abs(normalized - levels[0]);
  for (std::uint8_t i = 1; i < 16; ++i) {
    const double d = std::abs(normalized - levels[i]);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

Nf4Tensor quantize(const Matrix& w, std::size_t block_size, bool double_quant) {
  if (block_size == 0) throw Error("quantize: block_size must be >= 1");
  if (!w.all_finite()) throw NonFiniteError("quantize: non-finite input");
  Nf4Tensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.block_size = block_size;
  q.codes.resize(w.size());

  const auto data = w.data();
  const std::size_t nblocks = q.num_blocks();
  std::vector<float> absmax(nblocks);
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = b * block_size, hi = std::min(lo + block_size, data.size());
    double amax = 0.0;
    for (std::size_t i = lo; i < hi; ++i) amax = std::max(amax, std::abs(data[i]));
    const float scale = static_cast<float>(amax);
    absmax[b] = scale;
    const std::uint8_t zero_code = nearest_nf4_code(0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      q.codes[i] = scale == 0.0f ? zero_code : nearest_nf4_code(data[i] / static_cast<double>(scale));
    }
  }

  if (!double_quant) {
    q.absmax = std::move(absmax);
    return q;
  }

  Nf4Tensor::ScaleQuant sq;
  sq.group_size = kDoubleQuantGroupSize;
  sq.codes.resize(nblocks);
  const std::size_t ngroups = (nblocks + sq.group_size - 1) / sq.group_size;
  for (std::size_t g = 0; g < ngroups; ++g) {
    const std::size_t lo = g * sq.group_size, hi = std::min(lo + sq.group_size, nblocks);
    const auto [mn, mx] = std::minmax_element(absmax.begin() + lo, absmax.begin() + hi);
    const float offset = *mn;
    const float step = (*mx - *mn) / 255.0f;
    sq.offsets.push_back(offset);
    sq.steps.push_back(step);
    for (std::size_t b = lo; b < hi; ++b) {
      if (step == 0.0f) {
        sq.codes[b] = 0;
        continue;
      }
      const double c = std::round((static_cast<double>(absmax[b]) - offset) / step);
      sq.codes[b] = static_cast<std::uint8_t>(std::clamp(c, 0.0, 255.0));
    }
  }
  q.scale_quant = std::move(sq);
  return q;
}

std::vector<double> block_scales(const Nf4Tensor& q) {
  const std::size_t nblocks = q.num_blocks();
  std::vector<double> scales(nblocks);
  if (!q.scale_quant) {
    if (q.absmax.size() != nblocks) throw Error("Nf4Tensor: absmax count does not match blocks");
    for (std::size_t b = 0; b < nblocks; ++b) scales[b] = q.absmax[b];
    return scales;
  }
  const auto& sq = *q.scale_quant;
  const std::size_t ngroups = (nblocks + sq.group_size - 1) / sq.group_size;
  if (sq.codes.size() != nblocks || sq.offsets.size() != ngroups || sq.steps.size() != ngroups) {
    throw Error("Nf4Tensor: double-quantization tables do not match block count");
  }
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t g = b / sq.group_size;
    scales[b] = static_cast<double>(sq.offsets[g]) +
                static_cast<double>(sq.codes[b]) * static_cast<double>(sq.steps[g]);
  }
  return scales;
}

Matrix dequantize(const Nf4Tensor& q) {
  if (q.codes.size() != q.rows * q.cols) throw Error("dequantize: code count does not match shape");
  const auto& levels = nf4_levels();
  const std::vector<double> scales = block_scales(q);
  Matrix w(q.rows, q.cols);
  auto out = w.data();
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    const std::uint8_t c = q.codes[i];
    if (c > 15) throw Error("dequantize: code " + std::to_string(c) + " out of range at " + std::to_string(i));
    out[i] = levels[c] * scales[i / q.block_size];
  }
  return w;
}

double relative_rms_error(const Matrix& w, const Nf4Tensor& q) {
  const Matrix back = dequantize(q);
  const double ref = frobenius_norm(w);
  if (ref == 0.0) return frobenius_norm(back) == 0.0 ? 0.0 : INFINITY;
  return frobenius_norm(back - w) / ref;
}

std::vector<std::uint8_t> pack_codes(const std::vector<std::uint8_t>& codes) {
  std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::uint8_t nibble = codes[i] & 0x0F;
    packed[i / 2] |= (i % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
  }
  return packed;
}

std::vector<std::uint8_t> unpack_codes(const std::vector<std::uint8_t>& packed, std::size_t count) {
  if (packed.size() != (count + 1) / 2) throw Error("unpack_codes: packed length mismatch");
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    codes[i] = (i % 2 == 0) ? (packed[i / 2] & 0x0F) : (packed[i / 2] >> 4);
  }
  return codes;
}

Matrix qforward(const Adapter& adapter, const Nf4Tensor& qbase, const Matrix& x) {
  return forward(adapter, dequantize(qbase), x);
}

GradBundle qloss_and_grads(const Adapter& adapter, const Nf4Tensor& qbase, const Matrix& x,
                           const Matrix& y_target) {
  return loss_and_grads(adapter, dequantize(qbase), x, y_target);
}

}  // namespace hoft
