#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hoft/adapter.hpp"
#include "hoft/metrics.hpp"
#include "hoft/train.hpp"

// Experiment drivers behind the CLI subcommands. Each run_* returns rows in
// configuration order; each check_* returns human-readable failures (empty
// means every asserted threshold passed).
namespace hoft::experiments {

struct CsvMeta {
  std::string command;
  std::uint64_t seed = 0;
  std::string mode;
};

/// Comment lines: "# hoft <command>", "# version=...", "# seed=...", "# mode=...".
void write_csv_preamble(std::ostream& os, const CsvMeta& meta);

// --- inverse approximation error -------------------------------------------
struct Figure1Row {
  std::size_t dim = 0;
  std::size_t rank = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
};

/// Orthogonality error of the two-term CWY Q for gaussian U, averaged over
/// trials; trial t of (dim, rank) draws from Rng(seed XOR (dim<<32 | rank<<16 | t)).
std::vector<Figure1Row> run_figure1(const std::vector<std::size_t>& dims,
                                    const std::vector<std::size_t>& ranks, std::size_t trials,
                                    std::uint64_t seed);
std::vector<std::string> check_figure1(const std::vector<Figure1Row>& rows);
void write_figure1_csv(std::ostream& os, const CsvMeta& meta, const std::vector<Figure1Row>& rows);

// --- hyperspherical energy --------------------------------------------------
std::vector<EnergyReport> run_energy(const std::vector<std::size_t>& dims,
                                     const std::vector<std::size_t>& ranks, std::size_t trials,
                                     std::uint64_t seed, InverseMode mode);
std::vector<std::string> check_energy(const std::vector<EnergyReport>& rows);
void write_energy_csv(std::ostream& os, const CsvMeta& meta, const std::vector<EnergyReport>& rows);

// --- Procrustes bound -------------------------------------------------------
struct ProcrustesRow {
  std::size_t instance = 0;
  double gap = 0.0;
  double bound = 0.0;
  double bound_n = 0.0;
  double envelope = 0.0;
  bool holds = false;
  double one_sided_gap = 0.0;
  double polar_orthogonality = 0.0;
  std::string error;  // non-empty when the polar iteration failed
};

std::vector<ProcrustesRow> run_procrustes(std::size_t m, std::size_t n, std::size_t rank,
                                          std::size_t instances, std::uint64_t seed);
std::vector<std::string> check_procrustes(const std::vector<ProcrustesRow>& rows);
void write_procrustes_csv(std::ostream& os, const CsvMeta& meta,
                          const std::vector<ProcrustesRow>& rows);

// --- gradient check suite ---------------------------------------------------
struct GradCheckRow {
  std::string label;
  AdapterKind kind = AdapterKind::Hoft;
  std::string mode;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t rank = 0;
  double max_rel_err = 0.0;
  double radial_cosine = -1.0;  // HOFT/SHOFT only; −1 when not applicable
  double max_abs_grad = 0.0;
  double max_abs_fd = 0.0;
  bool zero_residual = false;
};

/// The fixed 20-case suite across kinds, ranks {1,2,3,4,8} and dims {8,16,64}.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed);
std::vector<std::string> check_gradcheck(const std::vector<GradCheckRow>& rows);
void write_gradcheck_csv(std::ostream& os, const CsvMeta& meta,
                         const std::vector<GradCheckRow>& rows);

/// Adapter with generic (non-identity) parameters for gradient probes. Odd-rank
/// Householder adapters keep their trailing zero column.
Adapter perturbed_adapter(AdapterKind kind, std::size_t m, std::size_t n, std::size_t rank,
                          InverseMode mode, Rng& rng);

/// |⟨∂L/∂U, U⟩_F| / (‖∂L/∂U‖_F·‖U‖_F), maximized over the U and V sides.
double radial_cosine(const HoftAdapter& h, const GradBundle& g);

// --- training ---------------------------------------------------------------
struct ToySetup {
  Task task;
  Rng rng;  // positioned just after task generation; copy it to replay a run
};

/// One Rng(seed) stream draws the task and then drives training.
ToySetup make_toy(TaskKind kind, std::size_t m, std::size_t n, std::size_t k, double noise_std,
                  std::uint64_t seed);

void write_trace_csv(std::ostream& os, const CsvMeta& meta, const TrainTrace& trace);

// --- timing -----------------------------------------------------------------
struct BenchRow {
  std::string method;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t rank = 0;
  double mean_ns = 0.0;
  double median_ns = 0.0;
};

/// Times Q·X for X (m×n) via: "cwy_neumann2" (factored two-term), "cwy_exact"
/// (factored exact), "sequential_chain" (one reflection at a time) and
/// "materialized_exact" (form the m×m exact Q, then multiply). Factor
/// construction is included in every timing. One warm-up run precedes `repeats`.
std::vector<BenchRow> run_bench(std::size_t m, std::size_t n, const std::vector<std::size_t>& ranks,
                                std::size_t repeats, std::uint64_t seed);
/// Median speedup of cwy_neumann2 over materialized_exact at the given rank.
double bench_speedup(const std::vector<BenchRow>& rows, std::size_t rank);
void write_bench_csv(std::ostream& os, const CsvMeta& meta, const std::vector<BenchRow>& rows);

}  // namespace hoft::experiments
