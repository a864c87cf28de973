#pragma once

// Outer layer: regime values k_i(t) under switching rates that two players
// set through per-regime matrix games,
//
//   mu_ij(f, g) = mubar_ij + f' Lambda_ij g,
//   M_i = sum_{j != i} Lambda_ij (k_j - k_i),
//   -dk_i/dt = phi_i + sum_{j != i} mu*_ij (k_j - k_i).
//
// The row player f maximizes, the column player g minimizes. In the affine
// family both players hold two actions ordered (active, off) and
//
//   Lambda_ij = [[att - stab, att], [-stab, 0]],
//
// so that f' Lambda g = f att - g stab with f, g the weights on "active".

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "gig/errors.hpp"
#include "gig/game.hpp"
#include "gig/numkit.hpp"

namespace gig {

enum class OuterCostMode { trace, theta };

struct OuterGameSpec {
  Matrix baseline_rates;                          // N x N, off-diagonal mubar_ij
  std::vector<std::vector<Matrix>> perturbation;  // [i][j]: rows x cols; empty on the diagonal
  // Affine profiles, kept for the closed-form policies. Empty unless built by affine().
  Matrix attack;
  Matrix stabilize;
  double rho_f = 1.0;
  double rho_g = 1.0;
  OuterCostMode cost_mode = OuterCostMode::trace;

  std::size_t n_regimes() const { return static_cast<std::size_t>(baseline_rates.rows()); }
  Eigen::Index row_actions() const;
  Eigen::Index col_actions() const;
  bool is_affine() const { return attack.size() > 0; }

  void validate() const;

  /// Spec with no strategic influence: every Lambda_ij is a 1x1 zero.
  static OuterGameSpec passive(const Matrix& baseline);
  /// The affine family from attacker/stabilizer profiles.
  static OuterGameSpec affine(const Matrix& baseline, const Matrix& attack, const Matrix& stabilize);
};

struct OuterSolution {
  TimeGrid grid;
  std::vector<Vector> k;                // [node], per regime
  std::vector<std::vector<Vector>> f;   // [node][regime]
  std::vector<std::vector<Vector>> g;   // [node][regime]
  std::vector<Matrix> mu;               // [node], full generator with mu_ii = -row sum
  std::vector<Vector> game_value;       // [node], value of M_i
};

inline Eigen::Index OuterGameSpec::row_actions() const {
  for (const auto& row : perturbation)
    for (const auto& m : row)
      if (m.size() > 0) return m.rows();
  return 1;
}

inline Eigen::Index OuterGameSpec::col_actions() const {
  for (const auto& row : perturbation)
    for (const auto& m : row)
      if (m.size() > 0) return m.cols();
  return 1;
}

inline void OuterGameSpec::validate() const {
  const auto n = baseline_rates.rows();
  if (n < 1 || baseline_rates.cols() != n) throw InvalidArgument("OuterGameSpec: baseline rates must be N x N");
  if (perturbation.size() != n_regimes()) throw InvalidArgument("OuterGameSpec: perturbation must have N rows");
  const auto ra = row_actions();
  const auto ca = col_actions();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = perturbation[static_cast<std::size_t>(i)];
    if (row.size() != n_regimes()) throw InvalidArgument("OuterGameSpec: perturbation must be N x N");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double base = baseline_rates(i, j);
      if (!(std::isfinite(base) && base >= 0.0)) {
        std::ostringstream msg;
        msg << "OuterGameSpec: baseline rate (" << i << "," << j << ") must be finite and nonnegative";
        throw InvalidArgument(msg.str());
      }
      const Matrix& lam = row[static_cast<std::size_t>(j)];
      if (lam.size() == 0) continue;
      if (lam.rows() != ra || lam.cols() != ca) throw InvalidArgument("OuterGameSpec: inconsistent action counts");
      if (!lam.allFinite()) throw InvalidArgument("OuterGameSpec: non-finite perturbation");
      // Bilinear in (f, g), so the minimum over the simplices sits at a vertex.
      if (base + lam.minCoeff() < 0.0) {
        std::ostringstream msg;
        msg << "OuterGameSpec: rate (" << i << "," << j << ") can go negative: mubar + min Lambda = "
            << base + lam.minCoeff();
        throw InvalidArgument(msg.str());
      }
    }
  }
  if (!(rho_f > 0.0) || !(rho_g > 0.0)) throw InvalidArgument("OuterGameSpec: effort costs must be positive");
  if (is_affine() && (attack.rows() != n || attack.cols() != n || stabilize.rows() != n || stabilize.cols() != n))
    throw InvalidArgument("OuterGameSpec: affine profiles must be N x N");
}

inline OuterGameSpec OuterGameSpec::passive(const Matrix& baseline) {
  OuterGameSpec spec;
  spec.baseline_rates = baseline;
  const auto n = static_cast<std::size_t>(baseline.rows());
  spec.perturbation.assign(n, std::vector<Matrix>(n, Matrix()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) spec.perturbation[i][j] = Matrix::Zero(1, 1);
  return spec;
}

inline OuterGameSpec OuterGameSpec::affine(const Matrix& baseline, const Matrix& attack, const Matrix& stabilize) {
  OuterGameSpec spec;
  spec.baseline_rates = baseline;
  spec.attack = attack;
  spec.stabilize = stabilize;
  const auto n = static_cast<std::size_t>(baseline.rows());
  spec.perturbation.assign(n, std::vector<Matrix>(n, Matrix()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double a = attack(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double s = stabilize(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (a < 0.0 || s < 0.0) throw InvalidArgument("OuterGameSpec: affine profiles must be nonnegative");
      Matrix lam(2, 2);
      lam << a - s, a, -s, 0.0;
      spec.perturbation[i][j] = lam;
    }
  return spec;
}

/// M_i = sum_{j != i} Lambda_ij (k_j - k_i).
inline MatrixGame local_game_matrix(const Vector& k, const OuterGameSpec& spec, std::size_t i) {
  if (static_cast<std::size_t>(k.size()) != spec.n_regimes()) throw InvalidArgument("local_game_matrix: k has wrong size");
  if (!k.allFinite()) throw InvalidArgument("local_game_matrix: non-finite k");
  Matrix m = Matrix::Zero(spec.row_actions(), spec.col_actions());
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < spec.n_regimes(); ++j) {
    const Matrix& lam = spec.perturbation.at(i).at(j);
    if (j == i || lam.size() == 0) continue;
    m += lam * (k(static_cast<Eigen::Index>(j)) - k(ii));
  }
  return MatrixGame{m};
}

/// Row i of the equilibrium generator: mubar_ij + f' Lambda_ij g off the
/// diagonal, minus the row sum on it.
inline Vector equilibrium_rates(const Vector& f, const Vector& g, const OuterGameSpec& spec, std::size_t i) {
  const auto n = spec.n_regimes();
  if (f.size() != spec.row_actions() || g.size() != spec.col_actions())
    throw InvalidArgument("equilibrium_rates: strategy dimension mismatch");
  Vector row = Vector::Zero(static_cast<Eigen::Index>(n));
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    const Matrix& lam = spec.perturbation.at(i).at(j);
    double rate = spec.baseline_rates(ii, jj);
    if (lam.size() > 0) rate += f.dot(lam * g);
    if (rate < 0.0) {
      // Roundoff on a rate that is exactly zero at a vertex.
      if (rate > -1e-12 * std::max(1.0, spec.baseline_rates.cwiseAbs().maxCoeff())) {
        rate = 0.0;
      } else {
        std::ostringstream msg;
        msg << "equilibrium_rates: negative rate " << rate << " for (" << i << "," << j << ")";
        throw NumericalError(msg.str());
      }
    }
    row(jj) = rate;
  }
  row(ii) = -row.sum();
  return row;
}

/// -dk/dt = phi + sum_j mu_ij (k_j - k_i), all regimes at once.
inline Vector outer_rhs(const Vector& k, const Vector& phi, const Matrix& mu) {
  if (k.size() != phi.size() || mu.rows() != k.size() || mu.cols() != k.size())
    throw InvalidArgument("outer_rhs: dimension mismatch");
  Vector out = phi;
  for (Eigen::Index i = 0; i < k.size(); ++i)
    for (Eigen::Index j = 0; j < k.size(); ++j)
      if (j != i) out(i) += mu(i, j) * (k(j) - k(i));
  return out;
}

/// Smallest strictly positive real part in the spectrum of -mu; 0 when none.
inline double laplacian_spectral_gap(const Matrix& mu) {
  detail::require_square(mu, "laplacian_spectral_gap");
  const auto ev = eigenvalues(-mu);
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev(k).real() > 1e-12 * std::max(1.0, mu.cwiseAbs().maxCoeff())) gap = std::min(gap, ev(k).real());
  return std::isfinite(gap) ? gap : 0.0;
}

struct BinaryEfforts {
  double f = 0.0;
  double g = 0.0;
};

/// Pointwise switches from the gap row Delta_ij = k_j - k_i:
///   f = 1{sum_j att_ij Delta_ij < 0},  g = 1{sum_j stab_ij Delta_ij < 0}.
/// `flip` reverses both inequalities, which is the orientation a maximizing f
/// and minimizing g would pick for the bracket f att - g stab.
inline BinaryEfforts bang_bang_policy(const Vector& gaps, const Vector& attack, const Vector& stabilize,
                                      bool flip = false) {
  if (gaps.size() != attack.size() || gaps.size() != stabilize.size())
    throw InvalidArgument("bang_bang_policy: dimension mismatch");
  const double sa = attack.dot(gaps);
  const double ss = stabilize.dot(gaps);
  BinaryEfforts e;
  e.f = (flip ? sa > 0.0 : sa < 0.0) ? 1.0 : 0.0;
  e.g = (flip ? ss > 0.0 : ss < 0.0) ? 1.0 : 0.0;
  return e;
}

/// Efforts under quadratic effort costs:
///   f = [sum_j att_ij Delta_ij]^+ / rho_f,  g = [sum_j stab_ij (-Delta_ij)]^+ / rho_g,
/// optionally clamped to [0, 1].
inline BinaryEfforts proportional_policy(const Vector& gaps, const Vector& attack, const Vector& stabilize,
                                         double rho_f, double rho_g, bool clamp = true) {
  if (gaps.size() != attack.size() || gaps.size() != stabilize.size())
    throw InvalidArgument("proportional_policy: dimension mismatch");
  if (!(rho_f > 0.0) || !(rho_g > 0.0)) throw InvalidArgument("proportional_policy: effort costs must be positive");
  BinaryEfforts e;
  e.f = std::max(0.0, attack.dot(gaps)) / rho_f;
  e.g = std::max(0.0, -stabilize.dot(gaps)) / rho_g;
  if (clamp) {
    e.f = std::min(e.f, 1.0);
    e.g = std::min(e.g, 1.0);
  }
  return e;
}

/// Gap row Delta_ij = k_j - k_i for regime i (zero at j = i).
inline Vector stability_gaps(const Vector& k, std::size_t i) {
  return k.array() - k(static_cast<Eigen::Index>(i));
}

namespace detail {

struct NodeEquilibrium {
  std::vector<Vector> f, g;
  Matrix mu;
  Vector value;
};

inline NodeEquilibrium solve_node(const Vector& k, const OuterGameSpec& spec) {
  const auto n = spec.n_regimes();
  NodeEquilibrium e;
  e.f.resize(n);
  e.g.resize(n);
  e.mu = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  e.value = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto saddle = solve_zero_sum(local_game_matrix(k, spec, i));
    e.f[i] = saddle.row_strategy;
    e.g[i] = saddle.col_strategy;
    e.value(static_cast<Eigen::Index>(i)) = saddle.value;
    e.mu.row(static_cast<Eigen::Index>(i)) = equilibrium_rates(saddle.row_strategy, saddle.col_strategy, spec, i).transpose();
  }
  return e;
}

// One RK4 step of the k flow from node n+1 to node n with the rates frozen
// and phi interpolated linearly between the node values.
inline Vector outer_step(const Vector& k, const Vector& phi_hi, const Vector& phi_lo, const Matrix& mu, double h) {
  const Vector phi_mid = 0.5 * (phi_hi + phi_lo);
  const Vector k1 = outer_rhs(k, phi_hi, mu);
  const Vector k2 = outer_rhs(k + 0.5 * h * k1, phi_mid, mu);
  const Vector k3 = outer_rhs(k + 0.5 * h * k2, phi_mid, mu);
  const Vector k4 = outer_rhs(k + h * k3, phi_lo, mu);
  return k + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void record_node(OuterSolution& sol, std::size_t n, const Vector& k, NodeEquilibrium e) {
  sol.k[n] = k;
  sol.f[n] = std::move(e.f);
  sol.g[n] = std::move(e.g);
  sol.mu[n] = std::move(e.mu);
  sol.game_value[n] = std::move(e.value);
}

inline OuterSolution allocate_outer(const TimeGrid& grid) {
  OuterSolution sol;
  sol.grid = grid;
  sol.k.resize(grid.n_nodes());
  sol.f.resize(grid.n_nodes());
  sol.g.resize(grid.n_nodes());
  sol.mu.resize(grid.n_nodes());
  sol.game_value.resize(grid.n_nodes());
  return sol;
}

}  // namespace detail

/// Backward sweep of the outer layer. `phi` holds one running-cost vector per
/// grid node. At each node the local games are solved from the current k, the
/// equilibrium rates are frozen over the step, and k moves one RK4 step.
/// `terminal` defaults to k(T) = 0.
inline OuterSolution solve_outer(const std::vector<Vector>& phi, const OuterGameSpec& spec, const TimeGrid& grid,
                                 const std::optional<Vector>& terminal = std::nullopt) {
  spec.validate();
  grid.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_regimes());
  if (phi.size() != grid.n_nodes()) throw InvalidArgument("solve_outer: need one phi per node");
  for (const auto& p : phi)
    if (p.size() != n || !p.allFinite()) throw InvalidArgument("solve_outer: phi must be finite with one entry per regime");
  Vector k = terminal.value_or(Vector::Zero(n));
  if (k.size() != n || !k.allFinite()) throw InvalidArgument("solve_outer: bad terminal k");

  OuterSolution sol = detail::allocate_outer(grid);
  const double h = grid.step();
  for (std::size_t s = grid.n_steps + 1; s-- > 0;) {
    auto eq = detail::solve_node(k, spec);
    const Matrix mu = eq.mu;
    detail::record_node(sol, s, k, std::move(eq));
    if (s == 0) break;
    k = detail::outer_step(k, phi[s], phi[s - 1], mu, h);
    if (!k.allFinite()) throw BlowUpError("solve_outer: k left the finite range", grid.time(s - 1));
  }
  return sol;
}

}  // namespace gig
