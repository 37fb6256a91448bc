#include "hoft/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "hoft/cwy.hpp"
#include "hoft/error.hpp"
#include "hoft/grad.hpp"
#include "hoft/thresholds.hpp"

namespace hoft::experiments {
namespace th = hoft::thresholds;

namespace {

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(10) << v;
  return os.str();
}

std::string fmt_failure(const std::string& what, double value, const char* rel, double limit) {
  std::ostringstream os;
  os << what << ": " << sci(value) << " " << rel << " " << sci(limit);
  return os.str();
}

}  // namespace

void write_csv_preamble(std::ostream& os, const CsvMeta& meta) {
  os << "# hoft " << meta.command << "\n";
  os << "# version=" << HOFT_VERSION << " thresholds=" << th::kThresholdsVersion << "\n";
  os << "# seed=" << meta.seed << "\n";
  os << "# mode=" << (meta.mode.empty() ? "n/a" : meta.mode) << "\n";
}

// --- inverse approximation error -------------------------------------------

std::vector<Figure1Row> run_figure1(const std::vector<std::size_t>& dims,
                                    const std::vector<std::size_t>& ranks, std::size_t trials,
                                    std::uint64_t seed) {
  if (trials == 0) throw Error("figure1: trials must be >= 1");
  std::vector<Figure1Row> rows;
  for (std::size_t dim : dims) {
    for (std::size_t rank : ranks) {
      Figure1Row row{dim, rank, 0.0, 0.0};
      for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(seed ^ ((static_cast<std::uint64_t>(dim) << 32) |
                        (static_cast<std::uint64_t>(rank) << 16) | t));
        const CwyFactors f =
            build_factors(gaussian_matrix(rng, dim, rank), InverseMode::NeumannTwoTerm);
        const double err = orthogonality_error(f);
        row.mean_error += err;
        row.max_error = std::max(row.max_error, err);
      }
      row.mean_error /= static_cast<double>(trials);
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<std::string> check_figure1(const std::vector<Figure1Row>& rows) {
  std::vector<std::string> failures;
  std::map<std::size_t, std::vector<const Figure1Row*>> by_dim;
  for (const auto& r : rows) {
    by_dim[r.dim].push_back(&r);
    if (r.rank == 1 && !(r.mean_error < th::kRankOneError)) {
      failures.push_back(fmt_failure("dim " + std::to_string(r.dim) + " rank 1 mean error",
                                     r.mean_error, ">=", th::kRankOneError));
    }
  }
  for (auto& [dim, list] : by_dim) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->mean_error < list[i - 1]->mean_error - th::kMonotoneSlack) {
        failures.push_back("dim " + std::to_string(dim) + ": mean error decreases from rank " +
                           std::to_string(list[i - 1]->rank) + " (" + sci(list[i - 1]->mean_error) +
                           ") to rank " + std::to_string(list[i]->rank) + " (" +
                           sci(list[i]->mean_error) + ")");
      }
    }
  }
  // At a fixed rank the error must shrink as the dimension grows.
  std::map<std::size_t, std::vector<const Figure1Row*>> by_rank;
  for (const auto& r : rows) by_rank[r.rank].push_back(&r);
  for (auto& [rank, list] : by_rank) {
    if (rank <= 2) continue;
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->dim < b->dim; });
    if (list.size() >= 2 && !(list.back()->mean_error < list.front()->mean_error)) {
      failures.push_back("rank " + std::to_string(rank) + ": error at dim " +
                         std::to_string(list.back()->dim) + " is not below dim " +
                         std::to_string(list.front()->dim));
    }
  }
  return failures;
}

void write_figure1_csv(std::ostream& os, const CsvMeta& meta, const std::vector<Figure1Row>& rows) {
  write_csv_preamble(os, meta);
  os << "dim,rank,mean_error,max_error\n";
  for (const auto& r : rows) {
    os << r.dim << "," << r.rank << "," << sci(r.mean_error) << "," << sci(r.max_error) << "\n";
  }
}

// --- hyperspherical energy --------------------------------------------------

std::vector<EnergyReport> run_energy(const std::vector<std::size_t>& dims,
                                     const std::vector<std::size_t>& ranks, std::size_t trials,
                                     std::uint64_t seed, InverseMode mode) {
  std::vector<EnergyReport> rows;
  for (std::size_t dim : dims) {
    for (std::size_t rank : ranks) {
      const Rng rng(seed ^ ((static_cast<std::uint64_t>(dim) << 32) |
                            (static_cast<std::uint64_t>(rank) << 16)));
      rows.push_back(energy_difference_experiment(dim, rank, trials, rng, mode));
    }
  }
  return rows;
}

std::vector<std::string> check_energy(const std::vector<EnergyReport>& rows) {
  std::vector<std::string> failures;
  std::map<std::size_t, std::vector<const EnergyReport*>> by_dim;
  for (const auto& r : rows) {
    const std::string tag = "dim " + std::to_string(r.dim) + " rank " + std::to_string(r.rank);
    if (r.rank <= 2 && !(r.mean_relative_diff < th::kEnergyLowRankRelative)) {
      failures.push_back(fmt_failure(tag + " relative HE difference", r.mean_relative_diff, ">=",
                                     th::kEnergyLowRankRelative));
    }
    if (!(r.left_only_max_relative < th::kEnergyLeftOnlyRelative)) {
      failures.push_back(fmt_failure(tag + " left-only control", r.left_only_max_relative, ">=",
                                     th::kEnergyLeftOnlyRelative));
    }
    if (r.rank >= 2) by_dim[r.dim].push_back(&r);
  }
  for (auto& [dim, list] : by_dim) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->mean_abs_diff < list[i - 1]->mean_abs_diff) {
        failures.push_back("dim " + std::to_string(dim) + ": HE difference decreases from rank " +
                           std::to_string(list[i - 1]->rank) + " to rank " +
                           std::to_string(list[i]->rank));
      }
    }
  }
  return failures;
}

void write_energy_csv(std::ostream& os, const CsvMeta& meta, const std::vector<EnergyReport>& rows) {
  write_csv_preamble(os, meta);
  os << "dim,rank,mean_abs_diff,max_abs_diff,mean_rel_diff,left_only_rel\n";
  for (const auto& r : rows) {
    os << r.dim << "," << r.rank << "," << sci(r.mean_abs_diff) << "," << sci(r.max_abs_diff) << ","
       << sci(r.mean_relative_diff) << "," << sci(r.left_only_max_relative) << "\n";
  }
}

// --- Procrustes bound -------------------------------------------------------

std::vector<ProcrustesRow> run_procrustes(std::size_t m, std::size_t n, std::size_t rank,
                                          std::size_t instances, std::uint64_t seed) {
  std::vector<ProcrustesRow> rows;
  const Matrix identity_n = Matrix::identity(n);
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = Rng(seed).child(i);
    const Matrix m0 = gaussian_matrix(rng, m, n);
    const Matrix q_u = exact_q(build_factors(gaussian_matrix(rng, m, rank), InverseMode::Exact));
    const Matrix q_v = exact_q(build_factors(gaussian_matrix(rng, n, rank), InverseMode::Exact));
    ProcrustesRow row;
    row.instance = i;
    try {
      const ProcrustesCheck two_sided = procrustes_bound_check(m0, q_u, q_v);
      row.gap = two_sided.gap;
      row.bound = two_sided.bound;
      row.bound_n = two_sided.bound_n;
      row.envelope = two_sided.envelope;
      row.holds = two_sided.holds;
      row.polar_orthogonality = orthogonality_error(two_sided.q_star);
      row.one_sided_gap = procrustes_bound_check(m0, q_u, identity_n).gap;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> check_procrustes(const std::vector<ProcrustesRow>& rows) {
  std::vector<std::string> failures;
  for (const auto& r : rows) {
    const std::string tag = "instance " + std::to_string(r.instance);
    if (!r.error.empty()) {
      failures.push_back(tag + ": " + r.error);
      continue;
    }
    if (!r.holds) failures.push_back(fmt_failure(tag + " gap", r.gap, ">", r.bound));
    if (!(r.gap <= r.envelope)) failures.push_back(fmt_failure(tag + " gap", r.gap, "> 2|M|_F =", r.envelope));
    if (!(r.one_sided_gap < th::kOneSidedGap)) {
      failures.push_back(fmt_failure(tag + " one-sided gap", r.one_sided_gap, ">=", th::kOneSidedGap));
    }
    if (!(r.polar_orthogonality < th::kPolarOrthogonality)) {
      failures.push_back(fmt_failure(tag + " polar orthogonality", r.polar_orthogonality, ">=",
                                     th::kPolarOrthogonality));
    }
  }
  return failures;
}

void write_procrustes_csv(std::ostream& os, const CsvMeta& meta,
                          const std::vector<ProcrustesRow>& rows) {
  write_csv_preamble(os, meta);
  os << "instance,gap,bound,holds,bound_n,envelope,one_sided_gap,polar_orthogonality,error\n";
  for (const auto& r : rows) {
    os << r.instance << "," << sci(r.gap) << "," << sci(r.bound) << "," << (r.holds ? "true" : "false")
       << "," << sci(r.bound_n) << "," << sci(r.envelope) << "," << sci(r.one_sided_gap) << ","
       << sci(r.polar_orthogonality) << "," << r.error << "\n";
  }
}

// --- gradient check suite ---------------------------------------------------

Adapter perturbed_adapter(AdapterKind kind, std::size_t m, std::size_t n, std::size_t rank,
                          InverseMode mode, Rng& rng) {
  Adapter adapter = init_adapter(kind, m, n, rank, rng, mode);
  auto jitter = [&](Matrix& p, double amount, bool keep_zero_last_col) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) {
        if (keep_zero_last_col && j + 1 == p.cols()) continue;
        p(i, j) += amount * rng.normal();
      }
  };
  const bool odd = rank % 2 == 1;
  for (auto& p : parameters(adapter)) {
    if (p.name == "u" || p.name == "v") {
      jitter(*p.value, 0.5, odd);
    } else {
      jitter(*p.value, p.name == "m_vec" ? 0.2 : 0.3, false);
    }
  }
  return adapter;
}

double radial_cosine(const HoftAdapter& h, const GradBundle& g) {
  auto cosine = [](const Matrix& grad, const Matrix& param) {
    const double denom = frobenius_norm(grad) * frobenius_norm(param);
    return denom == 0.0 ? 0.0 : std::abs(frobenius_dot(grad, param)) / denom;
  };
  return std::max(cosine(g.d_u(), h.u), cosine(g.d_v(), h.v));
}

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed) {
  struct Case {
    AdapterKind kind;
    InverseMode mode;
    std::size_t m, n, rank;
    bool zero_residual;
  };
  using K = AdapterKind;
  constexpr auto N2 = InverseMode::NeumannTwoTerm;
  constexpr auto EX = InverseMode::Exact;
  const std::vector<Case> cases = {
      {K::Hoft, N2, 8, 8, 1, false},    {K::Hoft, N2, 16, 8, 2, false},
      {K::Hoft, N2, 16, 16, 3, false},  {K::Hoft, N2, 64, 64, 4, false},
      {K::Hoft, N2, 16, 16, 8, false},  {K::Hoft, EX, 8, 8, 2, false},
      {K::Hoft, EX, 16, 16, 3, false},  {K::Hoft, EX, 64, 16, 8, false},
      {K::Shoft, N2, 8, 8, 1, false},   {K::Shoft, N2, 16, 16, 3, false},
      {K::Shoft, N2, 8, 16, 4, false},  {K::Shoft, N2, 64, 64, 8, false},
      {K::Shoft, EX, 16, 16, 2, false}, {K::Shoft, EX, 64, 64, 4, false},
      {K::Lora, N2, 8, 8, 1, false},    {K::Lora, N2, 16, 16, 4, false},
      {K::Lora, N2, 64, 64, 8, false},  {K::Oft, N2, 8, 8, 2, false},
      {K::Oft, N2, 16, 16, 4, false},   {K::Hoft, N2, 16, 16, 4, true},
  };
  constexpr std::size_t batch = 4;
  std::vector<GradCheckRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    Rng rng = Rng(seed).child(i);
    const Adapter adapter = perturbed_adapter(c.kind, c.m, c.n, c.rank, c.mode, rng);
    Matrix w0 = gaussian_matrix(rng, c.m, c.n);
    w0 *= 1.0 / std::sqrt(static_cast<double>(c.n));
    const Matrix x = gaussian_matrix(rng, c.n, batch);
    const Matrix y = c.zero_residual ? forward(adapter, w0, x) : gaussian_matrix(rng, c.m, batch);

    GradCheckRow row;
    row.kind = c.kind;
    row.mode = std::string(to_string(c.mode));
    row.m = c.m;
    row.n = c.n;
    row.rank = c.rank;
    row.zero_residual = c.zero_residual;
    row.label = std::string(to_string(c.kind)) + "_" + row.mode + "_m" + std::to_string(c.m) + "_n" +
                std::to_string(c.n) + "_r" + std::to_string(c.rank) + (c.zero_residual ? "_zero" : "");
    const GradBundle analytic = loss_and_grads(adapter, w0, x, y);
    const GradBundle numeric = finite_diff_grads(adapter, w0, x, y);
    row.max_rel_err = max_relative_error(analytic, numeric);
    for (const auto& g : analytic.grads) row.max_abs_grad = std::max(row.max_abs_grad, max_abs(g.value));
    for (const auto& g : numeric.grads) row.max_abs_fd = std::max(row.max_abs_fd, max_abs(g.value));
    if (const auto* h = std::get_if<HoftAdapter>(&adapter)) {
      row.radial_cosine = radial_cosine(*h, analytic);
    } else if (const auto* s = std::get_if<ShoftAdapter>(&adapter)) {
      row.radial_cosine = radial_cosine(s->hoft, analytic);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> check_gradcheck(const std::vector<GradCheckRow>& rows) {
  std::vector<std::string> failures;
  for (const auto& r : rows) {
    const double limit = r.kind == AdapterKind::Lora ? th::kLoraGradRelative : th::kGradRelative;
    if (r.zero_residual) {
      if (r.max_abs_grad != 0.0) {
        failures.push_back(fmt_failure(r.label + " zero-residual gradient", r.max_abs_grad, "!=", 0.0));
      }
      if (!(r.max_abs_fd < th::kZeroResidualFd)) {
        failures.push_back(fmt_failure(r.label + " zero-residual finite difference", r.max_abs_fd, ">=",
                                       th::kZeroResidualFd));
      }
      continue;
    }
    if (!(r.max_rel_err < limit)) failures.push_back(fmt_failure(r.label + " max_rel_err", r.max_rel_err, ">=", limit));
    if (r.radial_cosine >= 0.0 && !(r.radial_cosine < th::kRadialCosine)) {
      failures.push_back(fmt_failure(r.label + " radial cosine", r.radial_cosine, ">=", th::kRadialCosine));
    }
  }
  return failures;
}

void write_gradcheck_csv(std::ostream& os, const CsvMeta& meta, const std::vector<GradCheckRow>& rows) {
  write_csv_preamble(os, meta);
  os << "case,kind,mode,m,n,rank,max_rel_err,radial_cosine,max_abs_grad,max_abs_fd,zero_residual\n";
  for (const auto& r : rows) {
    os << r.label << "," << to_string(r.kind) << "," << r.mode << "," << r.m << "," << r.n << ","
       << r.rank << "," << sci(r.max_rel_err) << ","
       << (r.radial_cosine >= 0.0 ? sci(r.radial_cosine) : std::string("")) << ","
       << sci(r.max_abs_grad) << "," << sci(r.max_abs_fd) << "," << (r.zero_residual ? "true" : "false") << "\n";
  }
}

// --- training ---------------------------------------------------------------

ToySetup make_toy(TaskKind kind, std::size_t m, std::size_t n, std::size_t k, double noise_std,
                  std::uint64_t seed) {
  Rng rng(seed);
  Task task = make_task(kind, m, n, k, noise_std, rng);
  return {std::move(task), rng};
}

void write_trace_csv(std::ostream& os, const CsvMeta& meta, const TrainTrace& trace) {
  write_csv_preamble(os, meta);
  os << "step,loss\n";
  for (std::size_t i = 0; i < trace.losses.size(); ++i) os << i << "," << sci(trace.losses[i]) << "\n";
}

// --- timing -----------------------------------------------------------------

std::vector<BenchRow> run_bench(std::size_t m, std::size_t n, const std::vector<std::size_t>& ranks,
                                std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw Error("bench: repeats must be >= 1");
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  double sink = 0.0;
  for (std::size_t rank : ranks) {
    Rng rng = Rng(seed).child(rank);
    const Matrix u = gaussian_matrix(rng, m, rank);
    const Matrix x = gaussian_matrix(rng, m, n);
    const std::vector<std::pair<std::string, std::function<Matrix()>>> methods = {
        {"cwy_neumann2", [&] { return apply_q(build_factors(u, InverseMode::NeumannTwoTerm), x); }},
        {"cwy_exact", [&] { return apply_q(build_factors(u, InverseMode::Exact), x); }},
        {"sequential_chain", [&] { return apply_sequential_chain(u, x); }},
        {"materialized_exact", [&] { return matmul(exact_q(build_factors(u, InverseMode::Exact)), x); }},
    };
    for (const auto& [name, fn] : methods) {
      sink += fn()(0, 0);
      std::vector<double> samples;
      for (std::size_t rep = 0; rep < repeats; ++rep) {
        const auto t0 = clock::now();
        const Matrix y = fn();
        const auto t1 = clock::now();
        sink += y(0, 0);
        samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
      }
      BenchRow row{name, m, n, rank, 0.0, 0.0};
      for (double s : samples) row.mean_ns += s;
      row.mean_ns /= static_cast<double>(samples.size());
      std::sort(samples.begin(), samples.end());
      const std::size_t mid = samples.size() / 2;
      row.median_ns = samples.size() % 2 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
      rows.push_back(row);
    }
  }
  if (!std::isfinite(sink)) throw NonFiniteError("bench: non-finite result");
  return rows;
}

double bench_speedup(const std::vector<BenchRow>& rows, std::size_t rank) {
  double factored = -1.0, materialized = -1.0;
  for (const auto& r : rows) {
    if (r.rank != rank) continue;
    if (r.method == "cwy_neumann2") factored = r.median_ns;
    if (r.method == "materialized_exact") materialized = r.median_ns;
  }
  if (factored <= 0.0 || materialized < 0.0) throw Error("bench_speedup: rank not benchmarked");
  return materialized / factored;
}

void write_bench_csv(std::ostream& os, const CsvMeta& meta, const std::vector<BenchRow>& rows) {
  write_csv_preamble(os, meta);
  os << "method,m,n,rank,mean_ns,median_ns\n";
  for (const auto& r : rows) {
    os << r.method << "," << r.m << "," << r.n << "," << r.rank << "," << std::fixed
       << std::setprecision(1) << r.mean_ns << "," << r.median_ns << std::defaultfloat << "\n";
  }
}

}  // namespace hoft::experiments
