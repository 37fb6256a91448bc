#include <gtest/gtest.h>

#include "hoft/cwy.hpp"
#include "hoft/error.hpp"
#include "hoft/rng.hpp"
#include "hoft/thresholds.hpp"
#include "oracles.hpp"

using hoft::InverseMode;
using hoft::Matrix;

namespace {

Matrix gaussian(std::uint64_t seed, std::size_t m, std::size_t r) {
  hoft::Rng rng(seed);
  return hoft::gaussian_matrix(rng, m, r);
}

}  // namespace

TEST(Cwy, FactorsLayout) {
  const Matrix u = Matrix::from_rows({{1, 0}, {1, 2}, {0, 1}});
  const auto f = hoft::build_factors(u, InverseMode::Exact);
  // UᵀU = [[2, 2], [2, 5]]
  EXPECT_EQ(f.s, Matrix::from_rows({{1, 2}, {0, 2.5}}));
  EXPECT_EQ(f.a, Matrix::from_rows({{0, 2}, {0, 0}}));
  EXPECT_DOUBLE_EQ(f.d_inv[0], 1.0);
  EXPECT_DOUBLE_EQ(f.d_inv[1], 0.4);
}

TEST(Cwy, SingleReflection) {
  const Matrix u = Matrix::from_rows({{3}, {4}});
  const Matrix expect = Matrix::from_rows({{1 - 18.0 / 25, -24.0 / 25}, {-24.0 / 25, 1 - 32.0 / 25}});
  for (auto mode : {InverseMode::Exact, InverseMode::NeumannTwoTerm}) {
    EXPECT_LT(hoft::max_abs_diff(hoft::materialize_q(hoft::build_factors(u, mode)), expect), 1e-15);
  }
}

TEST(Cwy, ExactMatchesExplicitReflectionProduct) {
  for (auto [m, r] : {std::pair{4, 1}, {8, 3}, {16, 8}, {32, 16}, {12, 12}}) {
    const Matrix u = gaussian(100 + m + r, m, r);
    const Matrix q = hoft::exact_q(hoft::build_factors(u, InverseMode::Exact));
    EXPECT_LT(hoft::max_abs_diff(q, oracle::reflection_product(u)), 1e-12) << m << "x" << r;
    EXPECT_LT(hoft::max_abs_diff(q, hoft::sequential_chain_q(u)), 1e-12) << m << "x" << r;
  }
}

TEST(Cwy, SequentialChainApplication) {
  const Matrix u = gaussian(7, 20, 5);
  const Matrix x = gaussian(8, 20, 3);
  EXPECT_LT(hoft::max_abs_diff(hoft::apply_sequential_chain(u, x),
                               oracle::product(oracle::reflection_product(u), x)),
            1e-12);
}

TEST(Cwy, ExactOrthogonality) {
  for (std::size_t r : {1u, 2u, 5u, 16u}) {
    const Matrix q = hoft::exact_q(hoft::build_factors(gaussian(r, 64, r), InverseMode::Exact));
    EXPECT_LT(oracle::orthogonality(q), 1e-13) << "r=" << r;
  }
}

TEST(Cwy, NeumannSeriesCompleteness) {
  for (std::size_t r : {1u, 2u, 3u, 8u, 17u, 32u}) {
    const auto f = hoft::build_factors(gaussian(200 + r, 64, r), InverseMode::Exact);
    const Matrix exact = hoft::triangular_solve_upper(hoft::clamped_s(f), Matrix::identity(r));
    const Matrix full = hoft::neumann_inverse(f, r);
    EXPECT_LT(hoft::max_abs_diff(full, exact), 1e-10) << "r=" << r;
    // The series is nilpotent: extra terms change nothing.
    EXPECT_EQ(hoft::neumann_inverse(f, r + 3), full);
  }
}

TEST(Cwy, TwoTermExactForRankAtMostTwo) {
  for (std::size_t r : {1u, 2u}) {
    const Matrix u = gaussian(300 + r, 48, r);
    const Matrix approx = hoft::approx_q(hoft::build_factors(u, InverseMode::NeumannTwoTerm));
    const Matrix exact = hoft::exact_q(hoft::build_factors(u, InverseMode::Exact));
    EXPECT_LT(hoft::max_abs_diff(approx, exact), 1e-12);
  }
}

TEST(Cwy, TwoTermCoreMatchesTruncatedSeries) {
  const auto f = hoft::build_factors(gaussian(11, 32, 6), InverseMode::NeumannTwoTerm);
  Matrix minus = hoft::neumann_inverse(f, 2);
  minus *= -1.0;
  EXPECT_LT(hoft::max_abs_diff(f.core, minus), 1e-15);
}

TEST(Cwy, TwoTermLosesOrthogonalityAtHigherRank) {
  const auto f = hoft::build_factors(gaussian(12, 64, 8), InverseMode::NeumannTwoTerm);
  EXPECT_GT(hoft::orthogonality_error(f), 1e-6);
}

TEST(Cwy, TwoTermRegressionBaseline) {
  namespace th = hoft::thresholds;
  const auto f = hoft::build_factors(gaussian(th::kApproxBaselineSeed, 1024, 8),
                                     InverseMode::NeumannTwoTerm);
  const double err = hoft::orthogonality_error(hoft::approx_q(f));
  EXPECT_GT(err, 0.0);
  EXPECT_NEAR(err, th::kApproxBaseline1024r8, th::kBaselineTolerance * th::kApproxBaseline1024r8);
}

TEST(Cwy, FactoredErrorMatchesMaterialized) {
  for (auto mode : {InverseMode::Exact, InverseMode::NeumannTwoTerm}) {
    for (std::size_t r : {1u, 4u, 12u}) {
      const auto f = hoft::build_factors(gaussian(400 + r, 40, r), mode);
      const double ref = oracle::orthogonality(hoft::materialize_q(f));
      EXPECT_NEAR(hoft::orthogonality_error(f), ref, 1e-12 + 1e-9 * ref);
      EXPECT_NEAR(hoft::orthogonality_error(hoft::materialize_q(f)), ref, 1e-13 + 1e-12 * ref);
    }
  }
}

TEST(Cwy, FactoredApplicationsMatchMaterialized) {
  for (auto mode : {InverseMode::Exact, InverseMode::NeumannTwoTerm}) {
    const auto f = hoft::build_factors(gaussian(13, 24, 5), mode);
    const Matrix q = hoft::materialize_q(f);
    const Matrix x = gaussian(14, 24, 7);
    const Matrix xr = gaussian(15, 3, 24);
    EXPECT_LT(hoft::max_abs_diff(hoft::apply_q(f, x), oracle::product(q, x)), 1e-12);
    EXPECT_LT(hoft::max_abs_diff(hoft::apply_q_transpose(f, x), oracle::product(hoft::transpose(q), x)),
              1e-12);
    EXPECT_LT(hoft::max_abs_diff(hoft::apply_q_right(f, xr), oracle::product(xr, q)), 1e-12);
  }
}

TEST(Cwy, ZeroColumnIsIdentityFactor) {
  Matrix u = gaussian(16, 10, 3);
  for (std::size_t i = 0; i < 10; ++i) u(i, 2) = 0.0;
  const Matrix head = [&] {
    Matrix h(10, 2);
    for (std::size_t i = 0; i < 10; ++i) h(i, 0) = u(i, 0), h(i, 1) = u(i, 1);
    return h;
  }();
  for (auto mode : {InverseMode::Exact, InverseMode::NeumannTwoTerm}) {
    const auto f = hoft::build_factors(u, mode);
    EXPECT_TRUE(f.clamped(2));
    EXPECT_FALSE(f.clamped(0));
    EXPECT_LT(hoft::max_abs_diff(hoft::materialize_q(f), hoft::materialize_q(hoft::build_factors(head, mode))),
              1e-14);
  }
}

TEST(Cwy, ModeGuards) {
  const Matrix u = gaussian(17, 8, 2);
  EXPECT_THROW(hoft::exact_q(hoft::build_factors(u, InverseMode::NeumannTwoTerm)), hoft::Error);
  EXPECT_THROW(hoft::approx_q(hoft::build_factors(u, InverseMode::Exact)), hoft::Error);
}

TEST(Cwy, InvalidInputs) {
  EXPECT_THROW(hoft::build_factors(gaussian(1, 3, 4), InverseMode::Exact), hoft::DimensionError);
  EXPECT_THROW(hoft::build_factors(Matrix(3, 0), InverseMode::Exact), hoft::DimensionError);
  Matrix bad = gaussian(2, 4, 2);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(hoft::build_factors(bad, InverseMode::Exact), hoft::NonFiniteError);
  EXPECT_THROW(hoft::build_factors(gaussian(3, 4, 2), InverseMode::Exact, 0.0), hoft::Error);
  const auto f = hoft::build_factors(gaussian(4, 4, 2), InverseMode::Exact);
  EXPECT_THROW(hoft::apply_q(f, Matrix(5, 1)), hoft::DimensionError);
  EXPECT_THROW(hoft::apply_q_right(f, Matrix(1, 5)), hoft::DimensionError);
  EXPECT_THROW(hoft::neumann_inverse(f, 0), hoft::Error);
}

TEST(Cwy, ParseMode) {
  EXPECT_EQ(hoft::parse_inverse_mode("exact"), InverseMode::Exact);
  EXPECT_EQ(hoft::parse_inverse_mode("neumann2"), InverseMode::NeumannTwoTerm);
  EXPECT_EQ(hoft::to_string(InverseMode::NeumannTwoTerm), "neumann2");
  EXPECT_THROW(hoft::parse_inverse_mode("neumann"), hoft::Error);
}

// Property: exact Q is orthogonal and scale-invariant in each column.
TEST(CwyProperty, ColumnScalingInvariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    hoft::Rng rng(seed);
    const std::size_t m = 8 + seed, r = 1 + seed % 6;
    const Matrix u = hoft::gaussian_matrix(rng, m, r);
    Matrix scaled = u;
    for (std::size_t c = 0; c < r; ++c) {
      const double s = rng.uniform(0.1, 5.0) * (c % 2 ? -1.0 : 1.0);
      for (std::size_t i = 0; i < m; ++i) scaled(i, c) *= s;
    }
    const Matrix q = hoft::exact_q(hoft::build_factors(u, InverseMode::Exact));
    EXPECT_LT(hoft::max_abs_diff(q, hoft::exact_q(hoft::build_factors(scaled, InverseMode::Exact))), 1e-12);
    EXPECT_LT(hoft::orthogonality_error(q), 1e-13);
  }
}
