#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "hoft/adapter.hpp"
#include "hoft/quant.hpp"
#include "hoft/rng.hpp"

namespace hoft {

enum class TaskKind { Rotation, ScaledRotation, LowRankDelta };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

/// Teacher–student regression problem on a frozen base W0 (m×n).
struct Task {
  TaskKind kind = TaskKind::Rotation;
  Matrix w0;
  Matrix w_teacher;
  double noise_std = 0.0;
  std::size_t k = 0;
  // Teacher ingredients (empty when k == 0): reflection vectors for the
  // rotation kinds, low-rank factors for LowRankDelta.
  Matrix teacher_u;
  Matrix teacher_v;
  std::vector<double> scales;  // ScaledRotation only

  std::size_t out_dim() const noexcept { return w0.rows(); }
  std::size_t in_dim() const noexcept { return w0.cols(); }
};

/// W0 ~ N(0, 1/n). Rotation: R·W0·R_v with R, R_v products of k gaussian
/// reflections. ScaledRotation: R·diag(s)·W0·R_v with s ~ U[0.5, 2].
/// LowRankDelta: W0 + A·B, A m×k and B k×n with N(0, 1/n) entries.
Task make_task(TaskKind kind, std::size_t m, std::size_t n, std::size_t k, double noise_std, Rng& rng);
/// Same as make_task but with prescribed scales (ScaledRotation).
Task make_scaled_rotation(std::size_t m, std::size_t n, std::size_t k, std::span<const double> scales,
                          Rng& rng);

/// Exact-mode HOFT adapter of the given rank carrying the teacher's reflection
/// vectors (zero-padded). Only meaningful for rotation tasks with k ≤ rank.
HoftAdapter teacher_witness(const Task& task, std::size_t rank);

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::size_t step = 0;
};

/// One bias-corrected Adam update, no weight decay. State is sized on first use.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               const AdamConfig& config);

struct TrainTrace {
  std::size_t steps = 0;
  std::vector<double> losses;
  double final_loss = 0.0;
  double wall_time = 0.0;  // seconds
};

struct TrainConfig {
  AdapterKind method = AdapterKind::Hoft;
  std::size_t rank = 4;
  std::size_t steps = 5000;
  double lr = 1e-2;
  std::size_t batch = 32;
  InverseMode mode = InverseMode::NeumannTwoTerm;
};

struct TrainResult {
  TrainTrace trace;
  Adapter adapter;
};

/// Per step: X ~ N(0, 1) (n×batch), Y = W_teacher·X + noise, MSE gradients through
/// the factored forward (over the dequantized base when `qbase` is given), Adam.
/// Throws DivergenceError carrying the step on a non-finite loss.
TrainResult train(const TrainConfig& config, const Task& task, Rng& rng,
                  const Nf4Tensor* qbase = nullptr);

/// Moving average with the given window (shorter at the start).
std::vector<double> smoothed(std::span<const double> values, std::size_t window);

}  // namespace hoft
