#include "hoft/train.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "hoft/cwy.hpp"
#include "hoft/error.hpp"
#include "hoft/grad.hpp"

namespace hoft {
namespace {

Matrix base_weight(std::size_t m, std::size_t n, Rng& rng) {
  Matrix w0 = gaussian_matrix(rng, m, n);
  w0 *= 1.0 / std::sqrt(static_cast<double>(n));
  return w0;
}

void rotate_teacher(Task& task, std::size_t k, Rng& rng) {
  const std::size_t m = task.out_dim(), n = task.in_dim();
  if (k == 0) return;
  task.teacher_u = gaussian_matrix(rng, m, k);
  task.teacher_v = gaussian_matrix(rng, n, k);
  const Matrix r_out = sequential_chain_q(task.teacher_u);
  const Matrix r_in = sequential_chain_q(task.teacher_v);
  task.w_teacher = matmul(matmul(r_out, task.w_teacher), r_in);
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Rotation: return "rotation";
    case TaskKind::ScaledRotation: return "scaled-rotation";
    case TaskKind::LowRankDelta: return "lowrank";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "rotation") return TaskKind::Rotation;
  if (text == "scaled-rotation") return TaskKind::ScaledRotation;
  if (text == "lowrank") return TaskKind::LowRankDelta;
  throw Error("unknown task '" + std::string(text) + "' (expected rotation|scaled-rotation|lowrank)");
}

Task make_task(TaskKind kind, std::size_t m, std::size_t n, std::size_t k, double noise_std, Rng& rng) {
  if (k > m || k > n) throw DimensionError("make_task: k must not exceed min(m, n)");
  if (noise_std < 0.0) throw Error("make_task: noise_std must be >= 0");
  if (kind == TaskKind::ScaledRotation) {
    std::vector<double> scales(m);
    for (double& s : scales) s = rng.uniform(0.5, 2.0);
    Task t = make_scaled_rotation(m, n, k, scales, rng);
    t.noise_std = noise_std;
    return t;
  }
  Task task;
  task.kind = kind;
  task.k = k;
  task.noise_std = noise_std;
  task.w0 = base_weight(m, n, rng);
  task.w_teacher = task.w0;
  if (kind == TaskKind::Rotation) {
    rotate_teacher(task, k, rng);
  } else if (k > 0) {
    task.teacher_u = gaussian_matrix(rng, m, k);
    task.teacher_u *= 1.0 / std::sqrt(static_cast<double>(n));
    task.teacher_v = gaussian_matrix(rng, k, n);
    task.teacher_v *= 1.0 / std::sqrt(static_cast<double>(n));
    task.w_teacher += matmul(task.teacher_u, task.teacher_v);
  }
  return task;
}

Task make_scaled_rotation(std::size_t m, std::size_t n, std::size_t k, std::span<const double> scales,
                          Rng& rng) {
  if (k > m || k > n) throw DimensionError("make_scaled_rotation: k must not exceed min(m, n)");
  if (scales.size() != m) throw DimensionError("make_scaled_rotation: need one scale per output row");
  Task task;
  task.kind = TaskKind::ScaledRotation;
  task.k = k;
  task.scales.assign(scales.begin(), scales.end());
  task.w0 = base_weight(m, n, rng);
  task.w_teacher = scale_rows(task.w0, scales);
  rotate_teacher(task, k, rng);
  return task;
}

HoftAdapter teacher_witness(const Task& task, std::size_t rank) {
  if (task.kind == TaskKind::LowRankDelta) throw Error("teacher_witness: task has no reflections");
  if (task.k > rank) throw DimensionError("teacher_witness: rank smaller than teacher reflection count");
  HoftAdapter h;
  h.mode = InverseMode::Exact;
  h.u = Matrix(task.out_dim(), rank);
  h.v = Matrix(task.in_dim(), rank);
  for (std::size_t c = 0; c < task.k; ++c) {
    h.u.set_column(c, task.teacher_u.column(c));
    h.v.set_column(c, task.teacher_v.column(c));
  }
  return h;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: params/grads count mismatch");
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.emplace_back(p->rows(), p->cols());
      state.second.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first.size() != params.size()) throw DimensionError("adam_step: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto value = params[p]->data();
    const auto g = grads[p].data();
    auto m1 = state.first[p].data();
    auto m2 = state.second[p].data();
    if (g.size() != value.size() || m1.size() != value.size()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
      m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m1[i] / c1;
      const double v_hat = m2[i] / c2;
      value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

TrainResult train(const TrainConfig& config, const Task& task, Rng& rng, const Nf4Tensor* qbase) {
  if (config.steps == 0) throw Error("train: steps must be >= 1");
  if (config.batch == 0) throw Error("train: batch must be >= 1");
  const std::size_t m = task.out_dim(), n = task.in_dim();
  const Matrix base = qbase ? dequantize(*qbase) : task.w0;
  if (base.rows() != m || base.cols() != n) throw DimensionError("train: quantized base shape mismatch");

  TrainResult result{{}, init_adapter(config.method, m, n, config.rank, rng, config.mode)};
  AdamState state;
  const AdamConfig adam{config.lr};
  result.trace.losses.reserve(config.steps);

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Matrix x = gaussian_matrix(rng, n, config.batch);
    Matrix y = matmul(task.w_teacher, x);
    if (task.noise_std > 0.0) {
      for (double& v : y.data()) v += task.noise_std * rng.normal();
    }
    GradBundle g;
    try {
      g = loss_and_grads(result.adapter, base, x, y);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(step, "train: diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(g.loss)) {
      throw DivergenceError(step, "train: non-finite loss at step " + std::to_string(step));
    }
    result.trace.losses.push_back(g.loss);

    std::vector<Matrix*> params;
    std::vector<Matrix> grads;
    for (const auto& p : parameters(result.adapter)) params.push_back(p.value);
    for (auto& e : g.grads) grads.push_back(std::move(e.value));
    adam_step(params, grads, state, adam);
  }
  result.trace.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.trace.steps = config.steps;
  result.trace.final_loss = result.trace.losses.back();
  return result;
}

std::vector<double> smoothed(std::span<const double> values, std::size_t window) {
  if (window == 0) throw Error("smoothed: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace hoft
