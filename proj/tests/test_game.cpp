#include <gtest/gtest.h>

#include <random>

#include "gig/game.hpp"
#include "oracles.hpp"

using gig::Matrix;
using gig::MatrixGame;
using gig::Vector;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

void expect_simplex(const Vector& p) {
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

void expect_saddle(const MatrixGame& g, const gig::SaddlePoint& s) {
  expect_simplex(s.row_strategy);
  expect_simplex(s.col_strategy);
  const Vector row_payoffs = g.payoff * s.col_strategy;
  const Vector col_payoffs = g.payoff.transpose() * s.row_strategy;
  EXPECT_LE(row_payoffs.maxCoeff() - s.value, 1e-9);
  EXPECT_GE(col_payoffs.minCoeff() - s.value, -1e-9);
  EXPECT_LE(gig::best_response_gap(g, s.row_strategy, s.col_strategy), 1e-8);
}

Matrix random_game(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> u(-10, 10);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

}  // namespace

TEST(SolveZeroSum, MatchingPennies) {
  const MatrixGame g{mat({{1, -1}, {-1, 1}})};
  const auto s = gig::solve_zero_sum(g);
  EXPECT_NEAR(s.value, 0.0, 1e-15);
  EXPECT_NEAR(s.row_strategy(0), 0.5, 1e-15);
  EXPECT_NEAR(s.col_strategy(0), 0.5, 1e-15);
}

TEST(SolveZeroSum, OneByOne) {
  const auto s = gig::solve_zero_sum(MatrixGame{mat({{5}})});
  EXPECT_EQ(s.value, 5.0);
  EXPECT_EQ(s.row_strategy(0), 1.0);
  EXPECT_EQ(s.col_strategy(0), 1.0);
}

TEST(SolveZeroSum, ClosedFormTwoByTwo) {
  const MatrixGame g{mat({{3, 1}, {0, 2}})};
  const auto s = gig::solve_zero_sum(g);
  EXPECT_NEAR(s.value, 1.5, 1e-15);
  EXPECT_NEAR(s.row_strategy(0), 0.5, 1e-15);
  EXPECT_NEAR(s.col_strategy(0), 0.25, 1e-15);
  EXPECT_NEAR(s.col_strategy(1), 0.75, 1e-15);
  EXPECT_NEAR(oracle::grid_minimax_2x2(g.payoff), 1.5, 1e-12);
}

TEST(SolveZeroSum, PureSaddleDetected) {
  const MatrixGame g{mat({{4, 5}, {1, 2}})};
  const auto s = gig::solve_zero_sum(g);
  EXPECT_EQ(s.value, 4.0);
  EXPECT_EQ(s.row_strategy(0), 1.0);
  EXPECT_EQ(s.col_strategy(0), 1.0);
}

TEST(SolveZeroSum, ZeroGameTieBreak) {
  // Lexicographically smallest strategies put all mass on the last action.
  for (int n : {2, 3}) {
    const auto s = gig::solve_zero_sum(MatrixGame{Matrix::Zero(n, n)});
    EXPECT_EQ(s.value, 0.0);
    EXPECT_NEAR(s.row_strategy(n - 1), 1.0, 1e-12);
    EXPECT_NEAR(s.col_strategy(n - 1), 1.0, 1e-12);
  }
}

TEST(SolveZeroSum, RandomGamesSaddleGap) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(2, 6);
  for (int rep = 0; rep < 500; ++rep) {
    const MatrixGame g{random_game(rng, dim(rng), dim(rng))};
    expect_saddle(g, gig::solve_zero_sum(g));
  }
}

TEST(SolveZeroSum, TwoByTwoMatchesFormula) {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 300; ++rep) {
    const Matrix m = random_game(rng, 2, 2);
    const auto s = gig::solve_zero_sum(MatrixGame{m});
    const double a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    // Pure saddle: max of row minima equals min of column maxima.
    const double lower = std::max(std::min(a, b), std::min(c, d));
    const double upper = std::min(std::max(a, c), std::max(b, d));
    const double want = lower == upper ? lower : (a * d - b * c) / (a - b - c + d);
    EXPECT_NEAR(s.value, want, 1e-12);
  }
}

TEST(SolveZeroSum, LpRouteMatchesClosedFormOnPaddedGames) {
  // A duplicated dominated row forces the LP path on an effectively 2x2 game.
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix m = random_game(rng, 2, 2);
    Matrix padded(3, 2);
    padded.topRows(2) = m;
    padded.row(2) = m.colwise().minCoeff().array() - 1.0;
    const auto s2 = gig::solve_zero_sum(MatrixGame{m});
    const auto s3 = gig::solve_zero_sum(MatrixGame{padded});
    EXPECT_NEAR(s2.value, s3.value, 1e-9);
    EXPECT_NEAR(s3.row_strategy(2), 0.0, 1e-9);
  }
}

TEST(SolveZeroSum, TransposeNegation) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix m = random_game(rng, 3, 4);
    const auto s = gig::solve_zero_sum(MatrixGame{m});
    const auto t = gig::solve_zero_sum(MatrixGame{-m.transpose()});
    EXPECT_NEAR(t.value, -s.value, 1e-9);
  }
}

TEST(SolveZeroSum, ConstantShift) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix m = random_game(rng, 4, 3);
    const auto s = gig::solve_zero_sum(MatrixGame{m});
    const MatrixGame shifted{m.array() + 7.25};
    EXPECT_NEAR(gig::solve_zero_sum(shifted).value, s.value + 7.25, 1e-9);
    EXPECT_LE(gig::best_response_gap(shifted, s.row_strategy, s.col_strategy), 1e-8);
  }
}

TEST(SolveZeroSum, LexicographicTieBreak) {
  // Every row guarantees 1, so the smallest row strategy is e_last.
  const MatrixGame g{mat({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}})};
  const auto s = gig::solve_zero_sum(g);
  EXPECT_NEAR(s.row_strategy(2), 1.0, 1e-12);
  EXPECT_NEAR(s.value, 1.0, 1e-12);
}

TEST(SolveZeroSum, RejectsBadGame) {
  EXPECT_THROW(gig::solve_zero_sum(MatrixGame{Matrix(0, 0)}), gig::InvalidArgument);
  Matrix m = Matrix::Zero(2, 2);
  m(1, 1) = INFINITY;
  EXPECT_THROW(gig::solve_zero_sum(MatrixGame{m}), gig::InvalidArgument);
}

TEST(BestResponseGap, Examples) {
  const MatrixGame pennies{mat({{1, -1}, {-1, 1}})};
  EXPECT_EQ(gig::best_response_gap(pennies, vec({0.5, 0.5}), vec({0.5, 0.5})), 0.0);
  EXPECT_EQ(gig::best_response_gap(pennies, vec({1, 0}), vec({0.5, 0.5})), 1.0);
  EXPECT_EQ(gig::best_response_gap(MatrixGame{mat({{5}})}, vec({1}), vec({1})), 0.0);
  EXPECT_THROW(gig::best_response_gap(pennies, vec({1}), vec({0.5, 0.5})), gig::InvalidArgument);
}
