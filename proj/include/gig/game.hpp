#pragma once

// Finite two-player zero-sum matrix games.
//
// Orientation is fixed throughout the library: the row player (strategy f)
// maximizes f' M g, the column player (strategy g) minimizes it.
//
// When several saddle points exist the solver returns the one whose row
// strategy is lexicographically smallest, and among those the
// lexicographically smallest column strategy. With the null
// (no-intervention) action placed last, a degenerate all-zero game resolves
// to "no intervention" for both players.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "gig/errors.hpp"
#include "gig/numkit.hpp"

namespace gig {

struct MatrixGame {
  Matrix payoff;

  Eigen::Index rows() const { return payoff.rows(); }
  Eigen::Index cols() const { return payoff.cols(); }

  void validate() const {
    if (payoff.rows() < 1 || payoff.cols() < 1) throw InvalidArgument("MatrixGame: empty payoff");
    if (!payoff.allFinite()) throw InvalidArgument("MatrixGame: non-finite payoff");
  }
};

struct SaddlePoint {
  Vector row_strategy;
  Vector col_strategy;
  double value = 0.0;
};

namespace detail {

// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
struct LinearProgram {
  Matrix a_ub;
  Vector b_ub;
  Matrix a_eq;
  Vector b_eq;
  Vector c;
};

// Dense two-phase tableau simplex with Bland's rule. Returns nullopt when
// infeasible or unbounded. Sized for the handful of variables a local
// switching game has.
inline std::optional<Vector> solve_lp(const LinearProgram& lp) {
  const auto n = lp.c.size();
  const auto m_ub = lp.a_ub.rows();
  const auto m_eq = lp.a_eq.rows();
  const auto m = m_ub + m_eq;
  constexpr double kEps = 1e-12;

  // Columns: x (n) | slack (m_ub) | artificial (m) | rhs.
  const auto n_cols = n + m_ub + m;
  Matrix t = Matrix::Zero(m + 1, n_cols + 1);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));

  for (Eigen::Index r = 0; r < m; ++r) {
    const bool is_ub = r < m_ub;
    Eigen::RowVectorXd row = is_ub ? Eigen::RowVectorXd(lp.a_ub.row(r)) : Eigen::RowVectorXd(lp.a_eq.row(r - m_ub));
    double rhs = is_ub ? lp.b_ub(r) : lp.b_eq(r - m_ub);
    double slack = is_ub ? 1.0 : 0.0;
    if (rhs < 0.0) {
      row = -row;
      rhs = -rhs;
      slack = -slack;
    }
    t.block(r, 0, 1, n) = row;
    if (is_ub) t(r, n + r) = slack;
    t(r, n + m_ub + r) = 1.0;
    t(r, n_cols) = rhs;
    basis[static_cast<std::size_t>(r)] = n + m_ub + r;
  }

  auto pivot = [&](Eigen::Index pr, Eigen::Index pc) {
    t.row(pr) /= t(pr, pc);
    for (Eigen::Index r = 0; r <= m; ++r) {
      if (r != pr && t(r, pc) != 0.0) t.row(r) -= t(r, pc) * t.row(pr);
    }
    basis[static_cast<std::size_t>(pr)] = pc;
  };

  // Runs simplex on the objective currently stored in row m (reduced costs),
  // restricted to columns < col_limit. Returns false if unbounded.
  auto run = [&](Eigen::Index col_limit) {
    for (int iter = 0; iter < 10000; ++iter) {
      Eigen::Index enter = -1;
      for (Eigen::Index c = 0; c < col_limit; ++c) {
        if (t(m, c) < -kEps) {
          enter = c;
          break;
        }
      }
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index r = 0; r < m; ++r) {
        if (t(r, enter) > kEps) {
          const double ratio = t(r, n_cols) / t(r, enter);
          if (ratio < best - kEps ||
              (ratio <= best + kEps && leave >= 0 &&
               basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    return false;
  };

  // Phase 1: minimize the sum of artificials.
  t.row(m).setZero();
  for (Eigen::Index r = 0; r < m; ++r) t.row(m) -= t.row(r);
  for (Eigen::Index r = 0; r < m; ++r) t(m, n + m_ub + r) = 0.0;
  if (!run(n_cols)) return std::nullopt;
  if (-t(m, n_cols) > 1e-9 * std::max(1.0, t.col(n_cols).head(m).cwiseAbs().maxCoeff()))
    return std::nullopt;

  // Drive leftover artificials out of the basis where possible.
  for (Eigen::Index r = 0; r < m; ++r) {
    if (basis[static_cast<std::size_t>(r)] >= n + m_ub) {
      for (Eigen::Index c = 0; c < n + m_ub; ++c) {
        if (std::abs(t(r, c)) > 1e-9) {
          pivot(r, c);
          break;
        }
      }
    }
  }

  // Phase 2: the real objective, artificial columns frozen out.
  t.row(m).setZero();
  t.block(m, 0, 1, n) = lp.c.transpose();
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto b = basis[static_cast<std::size_t>(r)];
    if (b < n + m_ub && t(m, b) != 0.0) t.row(m) -= t(m, b) * t.row(r);
  }
  if (!run(n + m_ub)) return std::nullopt;

  Vector x = Vector::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto b = basis[static_cast<std::size_t>(r)];
    if (b < n) x(b) = t(r, n_cols);
  }
  return x;
}

inline Vector clean_simplex(Vector p) {
  for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = std::max(0.0, p(k));
  const double s = p.sum();
  if (s > 0.0) p /= s;
  return p;
}

// Lexicographically smallest p in the simplex with  sign * (p' cols_k) >= sign * bound
// for every column k of `lines` (lines is dim x constraints).
inline Vector lexicographic_optimum(const Matrix& lines, double bound, double sign, double tol) {
  const auto dim = lines.rows();
  const auto n_con = lines.cols();
  Vector fixed = Vector::Zero(dim);
  for (Eigen::Index k = 0; k + 1 < dim; ++k) {
    LinearProgram lp;
    lp.c = Vector::Zero(dim);
    lp.c(k) = 1.0;
    lp.a_ub = Matrix::Zero(n_con + k, dim);
    lp.b_ub = Vector::Zero(n_con + k);
    for (Eigen::Index c = 0; c < n_con; ++c) {
      lp.a_ub.row(c) = -sign * lines.col(c).transpose();
      lp.b_ub(c) = -sign * bound + tol;
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      lp.a_ub(n_con + j, j) = 1.0;
      lp.b_ub(n_con + j) = fixed(j) + tol;
    }
    lp.a_eq = Matrix::Ones(1, dim);
    lp.b_eq = Vector::Ones(1);
    auto sol = solve_lp(lp);
    if (!sol) throw NumericalError("solve_zero_sum: lexicographic refinement failed");
    fixed(k) = std::max(0.0, (*sol)(k));
  }
  fixed(dim - 1) = std::max(0.0, 1.0 - fixed.head(dim - 1).sum());
  return clean_simplex(fixed);
}

// Closed form for 2x2: the row player's guaranteed payoff is concave
// piecewise-linear in p = f_0 and peaks at an endpoint or at the crossing.
inline SaddlePoint solve_two_by_two(const Matrix& m) {
  const double a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
  const double scale = std::max({1.0, std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  const double tol = 1e-14 * scale;

  auto guaranteed = [&](double p) { return std::min(p * a + (1 - p) * c, p * b + (1 - p) * d); };
  double value = std::max(guaranteed(0.0), guaranteed(1.0));
  const double denom = (a - c) - (b - d);
  if (denom != 0.0) {
    const double px = (d - c) / denom;
    if (px > 0.0 && px < 1.0) value = std::max(value, guaranteed(px));
    // The interior crossing is the textbook (ad - bc)/(a - b - c + d) when it wins.
    if (px > 0.0 && px < 1.0 && guaranteed(px) >= value - tol) value = (a * d - b * c) / (a - b - c + d);
  }

  // Smallest p with p*col0 + (1-p)*col1 >= value for both columns.
  double p = 0.0;
  if (guaranteed(0.0) < value - tol) {
    for (const auto& [top, bottom] : {std::pair{a, c}, std::pair{b, d}}) {
      const double slope = top - bottom;
      if (slope > 0.0 && bottom < value) p = std::max(p, (value - bottom) / slope);
    }
  }
  p = std::clamp(p, 0.0, 1.0);

  // Smallest r with r*row_left + (1-r)*row_right <= value for both rows.
  auto conceded = [&](double r) { return std::max(r * a + (1 - r) * b, r * c + (1 - r) * d); };
  double r = 0.0;
  if (conceded(0.0) > value + tol) {
    for (const auto& [left, right] : {std::pair{a, b}, std::pair{c, d}}) {
      const double slope = left - right;
      if (slope < 0.0 && right > value) r = std::max(r, (right - value) / (-slope));
    }
  }
  r = std::clamp(r, 0.0, 1.0);

  SaddlePoint s;
  s.row_strategy = Vector(2);
  s.row_strategy << p, 1.0 - p;
  s.col_strategy = Vector(2);
  s.col_strategy << r, 1.0 - r;
  s.value = value;
  return s;
}

}  // namespace detail

/// Largest gain either player can get from a unilateral pure deviation.
/// Zero exactly at a saddle point.
inline double best_response_gap(const MatrixGame& game, const Vector& f, const Vector& g) {
  game.validate();
  if (f.size() != game.rows() || g.size() != game.cols())
    throw InvalidArgument("best_response_gap: strategy dimension mismatch");
  const double payoff = f.dot(game.payoff * g);
  const double row_gain = (game.payoff * g).maxCoeff() - payoff;
  const double col_gain = payoff - (game.payoff.transpose() * f).minCoeff();
  return std::max({0.0, row_gain, col_gain});
}

/// Mixed saddle point of a finite zero-sum game (row player maximizes).
/// 2x2 games use the closed form; larger games use the LP formulation and a
/// lexicographic refinement for the tie-break described at the top of this file.
inline SaddlePoint solve_zero_sum(const MatrixGame& game) {
  game.validate();
  const Matrix& m = game.payoff;
  if (m.rows() == 2 && m.cols() == 2) return detail::solve_two_by_two(m);

  const auto rows = m.rows();
  const auto cols = m.cols();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  // Shift to strictly positive payoffs so the value variable stays positive.
  const double shift = 1.0 - m.minCoeff();
  const Matrix pos = m.array() + shift;

  // max v  s.t.  v - f' pos_c <= 0 for all c,  sum f = 1,  f, v >= 0.
  detail::LinearProgram lp;
  lp.c = Vector::Zero(rows + 1);
  lp.c(rows) = -1.0;
  lp.a_ub = Matrix::Zero(cols, rows + 1);
  lp.a_ub.leftCols(rows) = -pos.transpose();
  lp.a_ub.col(rows).setOnes();
  lp.b_ub = Vector::Zero(cols);
  lp.a_eq = Matrix::Zero(1, rows + 1);
  lp.a_eq.leftCols(rows).setOnes();
  lp.b_eq = Vector::Ones(1);
  const auto sol = detail::solve_lp(lp);
  if (!sol) throw NumericalError("solve_zero_sum: value LP failed");
  const double value_pos = (*sol)(rows);

  const double tol = 1e-13 * scale;
  SaddlePoint s;
  s.row_strategy = detail::lexicographic_optimum(pos, value_pos, +1.0, tol);
  s.col_strategy = detail::lexicographic_optimum(pos.transpose(), value_pos, -1.0, tol);
  s.value = value_pos - shift;
  return s;
}

}  // namespace gig
