#include <gtest/gtest.h>

#include <sstream>

#include "hoft/error.hpp"
#include "hoft/experiments.hpp"

namespace ex = hoft::experiments;

TEST(Csv, PreambleRecordsSeedModeVersion) {
  std::ostringstream os;
  ex::write_csv_preamble(os, {"figure1", 17, "neumann2"});
  const std::string s = os.str();
  EXPECT_NE(s.find("# hoft figure1\n"), std::string::npos);
  EXPECT_NE(s.find("# seed=17\n"), std::string::npos);
  EXPECT_NE(s.find("# mode=neumann2\n"), std::string::npos);
  EXPECT_NE(s.find(std::string("# version=") + HOFT_VERSION), std::string::npos);
}

TEST(Figure1, SmallRunIsDeterministicAndOrdered) {
  const auto a = ex::run_figure1({32, 64}, {1, 2, 4}, 3, 5);
  const auto b = ex::run_figure1({32, 64}, {1, 2, 4}, 3, 5);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a[1].dim, 32u);
  EXPECT_EQ(a[1].rank, 2u);
  EXPECT_EQ(a[3].dim, 64u);
  std::ostringstream sa, sb;
  ex::write_figure1_csv(sa, {"figure1", 5, "neumann2"}, a);
  ex::write_figure1_csv(sb, {"figure1", 5, "neumann2"}, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(sa.str().find("dim,rank,mean_error,max_error\n"), std::string::npos);
  EXPECT_TRUE(ex::check_figure1(a).empty());
}

TEST(Figure1, CheckFlagsDecreasingError) {
  std::vector<ex::Figure1Row> rows{{64, 1, 0.0, 0.0}, {64, 4, 0.5, 0.5}, {64, 8, 0.1, 0.1}};
  EXPECT_EQ(ex::check_figure1(rows).size(), 1u);
  rows[0].mean_error = 1e-3;
  EXPECT_EQ(ex::check_figure1(rows).size(), 2u);
}

TEST(Energy, CsvHeader) {
  const auto rows = ex::run_energy({16}, {1, 2}, 2, 3, hoft::InverseMode::NeumannTwoTerm);
  std::ostringstream os;
  ex::write_energy_csv(os, {"energy", 3, "neumann2"}, rows);
  EXPECT_NE(os.str().find("dim,rank,mean_abs_diff,max_abs_diff"), std::string::npos);
}

TEST(Procrustes, SmallRunPasses) {
  const auto rows = ex::run_procrustes(8, 8, 2, 4, 1);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_TRUE(ex::check_procrustes(rows).empty());
  std::ostringstream os;
  ex::write_procrustes_csv(os, {"procrustes", 1, "exact"}, rows);
  EXPECT_NE(os.str().find("instance,gap,bound,holds"), std::string::npos);
}

TEST(Bench, RowsAndSpeedup) {
  const auto rows = ex::run_bench(64, 4, {2}, 2, 1);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].method, "cwy_neumann2");
  EXPECT_EQ(rows[2].method, "sequential_chain");
  EXPECT_GT(ex::bench_speedup(rows, 2), 0.0);
  EXPECT_THROW(ex::bench_speedup(rows, 3), hoft::Error);
  std::ostringstream os;
  ex::write_bench_csv(os, {"bench", 1, "mixed"}, rows);
  EXPECT_NE(os.str().find("method,m,n,rank,mean_ns"), std::string::npos);
}

TEST(Train, TraceCsv) {
  hoft::TrainTrace trace;
  trace.losses = {1.0, 0.5};
  std::ostringstream os;
  ex::write_trace_csv(os, {"train", 1, "neumann2"}, trace);
  EXPECT_NE(os.str().find("step,loss\n0,1.0000000000e+00\n1,5.0000000000e-01\n"), std::string::npos);
}

TEST(Toy, SetupReplaysRng) {
  const auto a = ex::make_toy(hoft::TaskKind::Rotation, 8, 8, 2, 0.0, 3);
  const auto b = ex::make_toy(hoft::TaskKind::Rotation, 8, 8, 2, 0.0, 3);
  EXPECT_EQ(a.task.w_teacher, b.task.w_teacher);
  hoft::Rng ra = a.rng, rb = b.rng;
  EXPECT_EQ(ra.next_u64(), rb.next_u64());
}
