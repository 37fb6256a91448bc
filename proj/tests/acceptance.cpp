// One test per acceptance criterion. Each prints a single
// "[criterion NN] PASS|FAIL: ..." line in addition to the gtest verdict.
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include "hoft/checkpoint.hpp"
#include "hoft/cwy.hpp"
#include "hoft/experiments.hpp"
#include "hoft/grad.hpp"
#include "hoft/metrics.hpp"
#include "hoft/thresholds.hpp"
#include "hoft/train.hpp"

namespace ex = hoft::experiments;
namespace th = hoft::thresholds;
using hoft::InverseMode;
using hoft::Matrix;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void verdict(int id, bool ok, const std::string& detail) {
  std::cout << "[criterion " << (id < 10 ? "0" : "") << id << "] " << (ok ? "PASS" : "FAIL") << ": "
            << detail << std::endl;
  EXPECT_TRUE(ok) << "criterion " << id << ": " << detail;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

}  // namespace

TEST(Acceptance, C01_ExactCwyOrthogonality) {
  Stopwatch clock;
  const std::size_t dims[] = {64, 256, 1024};
  const std::size_t ranks[] = {1, 2, 4, 8, 16};
  double worst = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t n = dims[i % 3], r = ranks[(i / 3) % 5];
    hoft::Rng rng(1000 + i);
    const Matrix q = hoft::exact_q(hoft::build_factors(hoft::gaussian_matrix(rng, n, r), InverseMode::Exact));
    worst = std::max(worst, hoft::orthogonality_error(q));
  }
  const double t = clock.seconds();
  std::ostringstream os;
  os << "worst orthogonality error " << worst << " over 100 configs in " << t << " s";
  verdict(1, worst < th::kExactOrthogonality && t < 30.0, os.str());
}

TEST(Acceptance, C02_InverseApproximationErrorShape) {
  Stopwatch clock;
  const auto rows = ex::run_figure1({256, 1024, 4096}, {1, 2, 4, 8, 16, 32}, 20, 0);
  const auto failures = ex::check_figure1(rows);
  double r8_small = 0, r8_large = 0, r1_worst = 0;
  for (const auto& r : rows) {
    if (r.rank == 8 && r.dim == 256) r8_small = r.mean_error;
    if (r.rank == 8 && r.dim == 4096) r8_large = r.mean_error;
    if (r.rank == 1) r1_worst = std::max(r1_worst, r.max_error);
  }
  const double t = clock.seconds();
  std::ostringstream os;
  os << "rank-1 max " << r1_worst << ", rank-8 dim 256 " << r8_small << " vs dim 4096 " << r8_large << ", "
     << t << " s" << (failures.empty() ? "" : "; " + join(failures));
  verdict(2, failures.empty() && r8_large < r8_small && t < 300.0, os.str());
}

TEST(Acceptance, C03_NeumannCompleteness) {
  double full_worst = 0, two_term_worst = 0;
  for (std::size_t r = 1; r <= 32; ++r) {
    hoft::Rng rng(2000 + r);
    const Matrix u = hoft::gaussian_matrix(rng, 64, r);
    const auto f = hoft::build_factors(u, InverseMode::Exact);
    const Matrix inv = hoft::triangular_solve_upper(hoft::clamped_s(f), Matrix::identity(r));
    full_worst = std::max(full_worst, hoft::max_abs_diff(hoft::neumann_inverse(f, r), inv));
    if (r <= 2) {
      const Matrix approx = hoft::approx_q(hoft::build_factors(u, InverseMode::NeumannTwoTerm));
      two_term_worst = std::max(two_term_worst, hoft::max_abs_diff(approx, hoft::exact_q(f)));
      two_term_worst = std::max(two_term_worst, hoft::max_abs_diff(hoft::neumann_inverse(f, 2), inv));
    }
  }
  std::ostringstream os;
  os << "full series max diff " << full_worst << " (r<=32), two-term max diff " << two_term_worst << " (r<=2)";
  verdict(3, full_worst < th::kNeumannComplete && two_term_worst < th::kTwoTermLowRank, os.str());
}

TEST(Acceptance, C04_IdentityInitialization) {
  double worst = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t m = 16 + 8 * (i % 3), n = 12 + 4 * (i % 4), r = 1 + i % 8;
    const auto mode = i % 2 ? InverseMode::Exact : InverseMode::NeumannTwoTerm;
    for (auto kind : {hoft::AdapterKind::Hoft, hoft::AdapterKind::Shoft}) {
      hoft::Rng rng(3000 + i);
      const Matrix w0 = hoft::gaussian_matrix(rng, m, n);
      const Matrix x = hoft::gaussian_matrix(rng, n, 5);
      const auto a = hoft::init_adapter(kind, m, n, r, rng, mode);
      worst = std::max(worst, hoft::max_abs_diff(hoft::forward(a, w0, x), hoft::matmul(w0, x)));
    }
  }
  std::ostringstream os;
  os << "max |adapted - frozen| " << worst << " over 20 configs x {hoft, shoft}";
  verdict(4, worst < th::kIdentityInit, os.str());
}

TEST(Acceptance, C05_WeightDecayIndifference) {
  const std::vector<double> lambdas{0.1, 0.5, 0.9, -1.0};  // −1 is the c = 2 rescaling
  double worst = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    hoft::Rng rng(4000 + i);
    const Matrix u = hoft::gaussian_matrix(rng, 32 + 16 * (i % 3), 1 + i % 8);
    for (auto mode : {InverseMode::Exact, InverseMode::NeumannTwoTerm}) {
      worst = std::max(worst, hoft::weight_decay_invariance(u, lambdas, mode));
    }
  }
  std::ostringstream os;
  os << "max ||Q(cU) - Q(U)||_F " << worst;
  verdict(5, worst < th::kWeightDecay, os.str());
}

TEST(Acceptance, C06_SpectrumPreservation) {
  double worst = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t m = 12 + 4 * (i % 4), n = 10 + 2 * (i % 5), r = 1 + i % 6;
    hoft::Rng rng(5000 + i);
    const Matrix w0 = hoft::gaussian_matrix(rng, m, n);
    const auto a = ex::perturbed_adapter(hoft::AdapterKind::Hoft, m, n, r, InverseMode::Exact, rng);
    const auto before = hoft::moment_traces(w0, 3);
    const auto after = hoft::moment_traces(hoft::adapted_weight(a, w0), 3);
    for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(after[k] - before[k]) / before[k]);
  }
  std::ostringstream os;
  os << "max relative moment error " << worst << " (k = 1..3, 20 configs)";
  verdict(6, worst < th::kSpectrumRelative, os.str());
}

TEST(Acceptance, C07_ProcrustesBound) {
  Stopwatch clock;
  const auto rows = ex::run_procrustes(32, 32, 4, 50, 0);
  const auto failures = ex::check_procrustes(rows);
  double ratio = 0;
  for (const auto& r : rows) ratio = std::max(ratio, r.gap / r.bound);
  const double t = clock.seconds();
  std::ostringstream os;
  os << rows.size() << " instances, max gap/bound " << ratio << ", " << t << " s"
     << (failures.empty() ? "" : "; " + join(failures));
  verdict(7, failures.empty() && rows.size() == 50 && t < 60.0, os.str());
}

TEST(Acceptance, C08_GradientCorrectness) {
  const auto rows = ex::run_gradcheck_suite(0);
  const auto failures = ex::check_gradcheck(rows);
  double worst = 0, radial = 0;
  for (const auto& r : rows) {
    if (!r.zero_residual) worst = std::max(worst, r.max_rel_err);
    radial = std::max(radial, r.radial_cosine);
  }
  std::ostringstream os;
  os << rows.size() << " cases, max relative error " << worst << ", max radial cosine " << radial
     << (failures.empty() ? "" : "; " + join(failures));
  verdict(8, failures.empty() && rows.size() == 20, os.str());
}

TEST(Acceptance, C09_EnergyExperimentShape) {
  Stopwatch clock;
  const auto rows = ex::run_energy({256}, {1, 2, 4, 8, 16, 32}, 5, 0, InverseMode::NeumannTwoTerm);
  const auto failures = ex::check_energy(rows);
  const double t = clock.seconds();
  std::ostringstream os;
  os << "relative diff r=1 " << rows[0].mean_relative_diff << ", r=2 " << rows[1].mean_relative_diff
     << ", r=32 " << rows.back().mean_relative_diff << ", " << t << " s"
     << (failures.empty() ? "" : "; " + join(failures));
  verdict(9, failures.empty() && t < 120.0, os.str());
}

TEST(Acceptance, C10_ToyTraining) {
  Stopwatch clock;
  hoft::TrainConfig config;
  config.rank = 4;
  config.steps = th::kTrainSteps;
  config.lr = th::kTrainLr;
  config.batch = th::kTrainBatch;

  const auto rot = ex::make_toy(hoft::TaskKind::Rotation, 32, 32, 4, 0.0, th::kTrainSeed);
  hoft::Rng rng = rot.rng;
  config.method = hoft::AdapterKind::Hoft;
  const double hoft_loss = hoft::train(config, rot.task, rng).trace.final_loss;

  const auto scaled = ex::make_toy(hoft::TaskKind::ScaledRotation, 32, 32, 4, 0.0, th::kTrainSeed);
  rng = scaled.rng;
  config.method = hoft::AdapterKind::Shoft;
  const double shoft_loss = hoft::train(config, scaled.task, rng).trace.final_loss;

  hoft::Rng xr(99);
  const Matrix x = hoft::gaussian_matrix(xr, 32, 64);
  const double witness =
      hoft::mse_loss(hoft::teacher_witness(rot.task, 4), rot.task.w0, x, hoft::matmul(rot.task.w_teacher, x));
  const double t = clock.seconds();
  std::ostringstream os;
  os << "hoft/rotation " << hoft_loss << ", shoft/scaled-rotation " << shoft_loss << ", witness " << witness
     << ", " << t << " s";
  verdict(10,
          hoft_loss < th::kTrainFinalLoss && shoft_loss < th::kTrainFinalLoss && witness < th::kWitnessLoss &&
              t < 120.0,
          os.str());
}

TEST(Acceptance, C11_QuantizedBase) {
  hoft::Rng wr(th::kNf4RmsSeed);
  const Matrix w = hoft::gaussian_matrix(wr, 256, 256);
  const double rms = hoft::relative_rms_error(w, hoft::quantize(w, hoft::kNf4BlockSize));
  const bool rms_ok = std::abs(rms - th::kNf4RelativeRms) <= th::kNf4RmsBand * th::kNf4RelativeRms;

  hoft::TrainConfig config;
  config.rank = 4;
  config.steps = th::kTrainSteps;
  const auto setup = ex::make_toy(hoft::TaskKind::Rotation, 32, 32, 4, th::kQuantTaskNoise, th::kTrainSeed);
  const auto qbase = hoft::quantize(setup.task.w0, hoft::kNf4BlockSize, true);
  const auto packed_before = hoft::pack_codes(qbase.codes);
  const std::string json_before = hoft::checkpoint_to_json({hoft::init_oft(32, 32, 2), qbase, std::nullopt});

  hoft::Rng r1 = setup.rng, r2 = setup.rng;
  const auto full = hoft::train(config, setup.task, r1);
  const auto quant = hoft::train(config, setup.task, r2, &qbase);
  const double full_loss = hoft::smoothed(full.trace.losses, th::kSmoothingWindow).back();
  const double q_loss = hoft::smoothed(quant.trace.losses, th::kSmoothingWindow).back();
  const bool frozen = hoft::pack_codes(qbase.codes) == packed_before &&
                      hoft::checkpoint_to_json({hoft::init_oft(32, 32, 2), qbase, std::nullopt}) == json_before;

  std::ostringstream os;
  os << "round-trip rms " << rms << " (frozen " << th::kNf4RelativeRms << " +/-" << th::kNf4RmsBand * 100
     << "%), smoothed loss quantized " << q_loss << " vs full " << full_loss << ", base codes "
     << (frozen ? "unchanged" : "CHANGED");
  verdict(11, rms_ok && q_loss < th::kQuantLossRatio * full_loss && frozen, os.str());
}

TEST(Acceptance, C12_BenchSanity) {
  Stopwatch clock;
  const auto rows = ex::run_bench(2048, 64, {16}, 5, 0);
  const double speedup = ex::bench_speedup(rows, 16);
  double chain = 0, factored = 0;
  for (const auto& r : rows) {
    if (r.method == "sequential_chain") chain = r.median_ns;
    if (r.method == "cwy_neumann2") factored = r.median_ns;
  }
  const double t = clock.seconds();
  std::ostringstream os;
  os << "factored speedup over materialized " << speedup << "x; factored " << factored / 1e6
     << " ms, sequential chain " << chain / 1e6 << " ms; " << t << " s";
  verdict(12, speedup >= th::kBenchMinSpeedup && t < 120.0, os.str());
}
