// hoft: experiment driver. Each subcommand writes a CSV and exits nonzero
// when any asserted threshold fails.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hoft/checkpoint.hpp"
#include "hoft/error.hpp"
#include "hoft/experiments.hpp"
#include "hoft/thresholds.hpp"
#include "hoft/train.hpp"

namespace fs = std::filesystem;
namespace ex = hoft::experiments;
namespace th = hoft::thresholds;

namespace {

struct Options {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  std::string out;
  std::string mode = "neumann2";
  std::string method = "hoft";
  std::string task = "rotation";
  std::size_t m = 32;
  std::size_t n = 32;
  std::size_t rank = 4;
  std::size_t steps = th::kTrainSteps;
  double lr = th::kTrainLr;
  std::size_t batch = th::kTrainBatch;
  bool quantize = false;
  std::size_t block_size = hoft::kNf4BlockSize;
  bool double_quant = false;
  std::size_t instances = 50;
  std::size_t repeats = 5;
};

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path() && !fs::is_directory(p.parent_path())) {
    throw hoft::Error("output directory does not exist: " + p.parent_path().string());
  }
  std::ofstream os(p);
  if (!os) throw hoft::Error("cannot open " + path + " for writing");
  return os;
}

int report(const std::string& command, const std::vector<std::string>& failures) {
  if (failures.empty()) {
    std::cout << command << ": all checks passed\n";
    return 0;
  }
  std::cerr << command << ": " << failures.size() << " check(s) failed\n";
  for (const auto& f : failures) std::cerr << "  FAIL " << f << "\n";
  return 1;
}

int cmd_figure1(const Options& o) {
  const auto rows = ex::run_figure1(o.dims, o.ranks, o.trials, o.seed);
  auto os = open_out(o.out);
  ex::write_figure1_csv(os, {"figure1", o.seed, "neumann2"}, rows);
  for (const auto& r : rows) {
    std::cout << "dim " << r.dim << " rank " << r.rank << " mean " << r.mean_error << " max "
              << r.max_error << "\n";
  }
  return report("figure1", ex::check_figure1(rows));
}

int cmd_energy(const Options& o) {
  const auto mode = hoft::parse_inverse_mode(o.mode);
  const auto rows = ex::run_energy(o.dims, o.ranks, o.trials, o.seed, mode);
  auto os = open_out(o.out);
  ex::write_energy_csv(os, {"energy", o.seed, o.mode}, rows);
  for (const auto& r : rows) {
    std::cout << "dim " << r.dim << " rank " << r.rank << " mean|dHE| " << r.mean_abs_diff
              << " relative " << r.mean_relative_diff << "\n";
  }
  return report("energy", ex::check_energy(rows));
}

int cmd_procrustes(const Options& o) {
  const auto rows = ex::run_procrustes(o.m, o.n, o.rank, o.instances, o.seed);
  auto os = open_out(o.out);
  ex::write_procrustes_csv(os, {"procrustes", o.seed, "exact"}, rows);
  std::size_t held = 0;
  for (const auto& r : rows) held += r.holds ? 1 : 0;
  std::cout << "bound holds on " << held << "/" << rows.size() << " instances\n";
  return report("procrustes", ex::check_procrustes(rows));
}

int cmd_gradcheck(const Options& o) {
  const auto rows = ex::run_gradcheck_suite(o.seed);
  auto os = open_out(o.out);
  ex::write_gradcheck_csv(os, {"gradcheck", o.seed, "mixed"}, rows);
  for (const auto& r : rows) std::cout << r.label << " max_rel_err " << r.max_rel_err << "\n";
  return report("gradcheck", ex::check_gradcheck(rows));
}

hoft::TrainResult run_training(const Options& o, const ex::ToySetup& setup, const hoft::Nf4Tensor* qbase) {
  hoft::TrainConfig config;
  config.method = hoft::parse_adapter_kind(o.method);
  config.rank = o.rank;
  config.steps = o.steps;
  config.lr = o.lr;
  config.batch = o.batch;
  config.mode = hoft::parse_inverse_mode(o.mode);
  hoft::Rng rng = setup.rng;
  return hoft::train(config, setup.task, rng, qbase);
}

int cmd_train(const Options& o) {
  const auto kind = hoft::parse_task_kind(o.task);
  const double noise = o.quantize ? th::kQuantTaskNoise : 0.0;
  const ex::ToySetup setup =
      ex::make_toy(kind, o.m, o.n, std::min({o.rank, o.m, o.n, std::size_t{4}}), noise, o.seed);
  std::vector<std::string> failures;
  hoft::Checkpoint ckpt;
  hoft::TrainResult result;
  if (o.quantize) {
    const hoft::Nf4Tensor qbase = hoft::quantize(setup.task.w0, o.block_size, o.double_quant);
    const hoft::Nf4Tensor before = qbase;
    const auto full = run_training(o, setup, nullptr);
    result = run_training(o, setup, &qbase);
    const double full_loss = hoft::smoothed(full.trace.losses, th::kSmoothingWindow).back();
    const double q_loss = hoft::smoothed(result.trace.losses, th::kSmoothingWindow).back();
    std::cout << "full-precision smoothed loss " << full_loss << ", quantized " << q_loss << "\n";
    if (!(q_loss < th::kQuantLossRatio * full_loss)) {
      failures.push_back("quantized loss " + std::to_string(q_loss) + " >= " +
                         std::to_string(th::kQuantLossRatio) + " x full-precision " +
                         std::to_string(full_loss));
    }
    if (!(qbase == before)) failures.push_back("quantized base changed during training");
    ckpt.base = qbase;
  } else {
    result = run_training(o, setup, nullptr);
    const bool asserted = (o.method == "hoft" && kind == hoft::TaskKind::Rotation) ||
                          (o.method == "shoft" && kind == hoft::TaskKind::ScaledRotation);
    std::cout << "final loss " << result.trace.final_loss << " after " << result.trace.steps
              << " steps (" << result.trace.wall_time << " s)\n";
    if (asserted && !(result.trace.final_loss < th::kTrainFinalLoss)) {
      failures.push_back("final loss " + std::to_string(result.trace.final_loss) + " >= " +
                         std::to_string(th::kTrainFinalLoss));
    }
  }

  auto os = open_out(o.out);
  ex::write_trace_csv(os, {"train " + o.method + " " + o.task + (o.quantize ? " quantized" : ""), o.seed, o.mode},
                      result.trace);
  ckpt.adapter = result.adapter;
  fs::path ckpt_path(o.out);
  ckpt_path.replace_extension(".ckpt.json");
  hoft::save_checkpoint(ckpt, ckpt_path);
  std::cout << "checkpoint written to " << ckpt_path.string() << "\n";
  return report("train", failures);
}

int cmd_bench(const Options& o) {
  const auto rows = ex::run_bench(o.m, o.n, o.ranks, o.repeats, o.seed);
  auto os = open_out(o.out);
  ex::write_bench_csv(os, {"bench", o.seed, "mixed"}, rows);
  for (const auto& r : rows) {
    std::cout << r.method << " rank " << r.rank << " median " << r.median_ns / 1e6 << " ms\n";
  }
  std::vector<std::string> failures;
  for (std::size_t rank : o.ranks) {
    const double speedup = ex::bench_speedup(rows, rank);
    std::cout << "rank " << rank << ": factored speedup over materialized " << speedup << "x\n";
    if (!(speedup >= th::kBenchMinSpeedup)) {
      failures.push_back("rank " + std::to_string(rank) + " speedup " + std::to_string(speedup) + " < 1");
    }
  }
  return report("bench", failures);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Householder orthogonal fine-tuning experiments"};
  app.set_version_flag("--version", std::string(HOFT_VERSION));
  app.require_subcommand(1);
  Options o;

  const auto modes = CLI::IsMember({"exact", "neumann2"});
  auto add_seed_out = [&](CLI::App* sub, const std::string& default_out,
                          std::uint64_t default_seed = 0) {
    sub->add_option("--seed", o.seed, "Base RNG seed")->default_str(std::to_string(default_seed));
    sub->add_option("--out", o.out, "Output CSV path")->default_str(default_out);
  };

  auto* fig = app.add_subcommand("figure1", "Two-term inverse orthogonality error vs dim and rank");
  fig->add_option("--dims", o.dims)->delimiter(',')->default_str("256,1024,4096");
  fig->add_option("--ranks", o.ranks)->delimiter(',')->default_str("1,2,4,8,16,32");
  fig->add_option("--trials", o.trials)->capture_default_str();
  add_seed_out(fig, "figure1.csv");

  auto* energy = app.add_subcommand("energy", "Hyperspherical energy difference vs rank");
  energy->add_option("--dims", o.dims)->delimiter(',')->default_str("256");
  energy->add_option("--ranks", o.ranks)->delimiter(',')->default_str("1,2,4,8,16,32");
  energy->add_option("--trials", o.trials)->default_str("5");
  energy->add_option("--mode", o.mode)->check(modes)->capture_default_str();
  add_seed_out(energy, "energy.csv");

  auto* proc = app.add_subcommand("procrustes", "Procrustes bound audit");
  proc->add_option("--m", o.m)->capture_default_str();
  proc->add_option("--n", o.n)->capture_default_str();
  proc->add_option("--rank", o.rank)->capture_default_str();
  proc->add_option("--instances", o.instances)->capture_default_str();
  add_seed_out(proc, "procrustes.csv");

  auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradient suite");
  add_seed_out(grad, "gradcheck.csv");

  auto* tr = app.add_subcommand("train", "Toy teacher-student training run");
  tr->add_option("--method", o.method)->check(CLI::IsMember({"hoft", "shoft", "lora", "oft"}))->capture_default_str();
  tr->add_option("--task", o.task)
      ->check(CLI::IsMember({"rotation", "scaled-rotation", "lowrank"}))
      ->capture_default_str();
  tr->add_option("--m", o.m)->capture_default_str();
  tr->add_option("--n", o.n)->capture_default_str();
  tr->add_option("--rank", o.rank)->capture_default_str();
  tr->add_option("--steps", o.steps)->capture_default_str();
  tr->add_option("--lr", o.lr)->capture_default_str();
  tr->add_option("--batch", o.batch)->capture_default_str();
  tr->add_option("--mode", o.mode)->check(modes)->capture_default_str();
  tr->add_flag("--quantize", o.quantize, "Train against an NF4-quantized frozen base");
  tr->add_option("--block-size", o.block_size)->capture_default_str();
  tr->add_flag("--double-quant", o.double_quant, "Quantize the per-block scales as well");
  add_seed_out(tr, "train.csv", th::kTrainSeed);

  auto* bench = app.add_subcommand("bench", "Time factored, sequential and materialized Q·X");
  bench->add_option("--m", o.m)->default_str("2048");
  bench->add_option("--n", o.n)->default_str("64");
  bench->add_option("--ranks", o.ranks)->delimiter(',')->default_str("4,8,16,32");
  bench->add_option("--repeats", o.repeats)->capture_default_str();
  add_seed_out(bench, "bench.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  // Per-subcommand defaults that differ from the shared Options defaults.
  auto defaults = [&](CLI::App* sub, const char* name, auto& field, auto value) {
    if (sub->parsed() && sub->count(name) == 0) field = value;
  };
  using V = std::vector<std::size_t>;
  defaults(fig, "--dims", o.dims, V{256, 1024, 4096});
  defaults(fig, "--ranks", o.ranks, V{1, 2, 4, 8, 16, 32});
  defaults(energy, "--dims", o.dims, V{256});
  defaults(energy, "--ranks", o.ranks, V{1, 2, 4, 8, 16, 32});
  defaults(energy, "--trials", o.trials, std::size_t{5});
  defaults(bench, "--m", o.m, std::size_t{2048});
  defaults(bench, "--n", o.n, std::size_t{64});
  defaults(bench, "--ranks", o.ranks, V{4, 8, 16, 32});
  defaults(tr, "--seed", o.seed, std::uint64_t{th::kTrainSeed});
  for (auto* sub : {fig, energy, proc, grad, tr, bench}) {
    if (sub->parsed() && sub->count("--out") == 0) o.out = sub->get_name() + ".csv";
  }

  try {
    if (fig->parsed()) return cmd_figure1(o);
    if (energy->parsed()) return cmd_energy(o);
    if (proc->parsed()) return cmd_procrustes(o);
    if (grad->parsed()) return cmd_gradcheck(o);
    if (tr->parsed()) return cmd_train(o);
    if (bench->parsed()) return cmd_bench(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
