#pragma once

// Adversarial Avellaneda-Stoikov market making under regime switching.
//
// theta_i(t, q) is the inventory cost of holding q in regime i with
// tau = T - t left: it grows with price risk, predator pressure and shrinks
// with the fill rent. With v = exp(-gamma theta), optimal quoting makes the
// cost system linear,
//
//   dv/dtau = -M v,   M = R - F - (Q (x) I),   v(T) = 1,
//
// where R = diag(gamma^2/2 (sigma_i^2 + xi gamma) q^2), F carries the
// optimal fill rate Lambda* = A (1 + gamma/k)^(-k/gamma) on the inventory
// off-diagonals, and Q is the regime generator. Hence v = exp(-M tau) 1.
//
// Sides: an ask fill sells one unit (q -> q-1) and is not quoted at
// q = -Q_max; a bid fill buys one unit (q -> q+1) and is not quoted at
// q = +Q_max.
//
// Units: time in years, prices and theta in currency.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "gig/errors.hpp"
#include "gig/game.hpp"
#include "gig/numkit.hpp"
#include "gig/outer.hpp"

namespace gig {

struct ASModel {
  double gamma = 0.02;
  double xi = 10.0;
  double A = 250000.0;
  double k = 10.0;
  Vector sigma = (Vector(2) << 0.2253, 0.5305).finished();
  int q_max = 10;
  double horizon = 0.5 / 365.0;
  double dt = 15.0 / (365.0 * 86400.0);
  double s0 = 90863.90;
  Matrix rates = (Matrix(2, 2) << 0.0, 30.0 * 365.0, 30.0 * 365.0, 0.0).finished();

  std::size_t n_regimes() const { return static_cast<std::size_t>(sigma.size()); }
  Eigen::Index n_inventory() const { return 2 * q_max + 1; }
  Eigen::Index n_states() const { return static_cast<Eigen::Index>(n_regimes()) * n_inventory(); }
  Eigen::Index index(std::size_t i, int q) const {
    return static_cast<Eigen::Index>(i) * n_inventory() + (q + q_max);
  }

  /// A (1 + gamma/k)^(-k/gamma): the fill rate at the optimal base offset
  /// times the exponential utility discount.
  double rent_rate() const { return A * std::pow(1.0 + gamma / k, -k / gamma); }
  /// (1/gamma) ln(1 + gamma/k).
  double base_offset() const { return std::log1p(gamma / k) / gamma; }
  double effective_variance(std::size_t i) const {
    const double s = sigma(static_cast<Eigen::Index>(i));
    return s * s + xi * gamma;
  }
  bool ask_active(int q) const { return q > -q_max; }
  bool bid_active(int q) const { return q < q_max; }

  void validate() const;
};

inline void ASModel::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(std::isfinite(x) && x > 0.0)) throw InvalidArgument(std::string("ASModel: ") + name + " must be positive");
  };
  positive(gamma, "gamma");
  positive(A, "A");
  positive(k, "k");
  positive(horizon, "horizon");
  positive(dt, "dt");
  positive(s0, "s0");
  if (!(std::isfinite(xi) && xi >= 0.0)) throw InvalidArgument("ASModel: xi must be nonnegative");
  if (q_max < 1) throw InvalidArgument("ASModel: q_max must be >= 1");
  if (sigma.size() < 1) throw InvalidArgument("ASModel: need at least one regime volatility");
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (!(std::isfinite(sigma(i)) && sigma(i) > 0.0)) throw InvalidArgument("ASModel: volatilities must be positive");
  if (rates.rows() != sigma.size() || rates.cols() != sigma.size())
    throw InvalidArgument("ASModel: rates must be N x N with N the number of volatilities");
  for (Eigen::Index i = 0; i < rates.rows(); ++i)
    for (Eigen::Index j = 0; j < rates.cols(); ++j)
      if (i != j && !(std::isfinite(rates(i, j)) && rates(i, j) >= 0.0))
        throw InvalidArgument("ASModel: off-diagonal rates must be finite and nonnegative");
}

/// w*(q) = -xi gamma q.
inline double predator_drift(int q, const ASModel& model) { return -model.xi * model.gamma * static_cast<double>(q); }

/// Regime generator from off-diagonal rates (diagonal rebuilt as -row sum).
inline Matrix regime_generator(const Matrix& rates) {
  Matrix g = rates;
  g.diagonal().setZero();
  g.diagonal() = -g.rowwise().sum();
  return g;
}

/// M = R - F - (Q (x) I) on the stacked (regime, inventory) lattice.
inline Matrix build_generator(const ASModel& model, const Matrix& rates) {
  model.validate();
  const auto N = model.n_regimes();
  if (rates.rows() != static_cast<Eigen::Index>(N) || rates.cols() != static_cast<Eigen::Index>(N))
    throw InvalidArgument("build_generator: rates must be N x N");
  const Matrix qgen = regime_generator(rates);
  const double lam = model.rent_rate();
  const double g2 = model.gamma * model.gamma;
  Matrix m = Matrix::Zero(model.n_states(), model.n_states());
  for (std::size_t i = 0; i < N; ++i) {
    const double var = model.effective_variance(i);
    for (int q = -model.q_max; q <= model.q_max; ++q) {
      const auto x = model.index(i, q);
      m(x, x) += 0.5 * g2 * var * static_cast<double>(q) * static_cast<double>(q);
      if (model.ask_active(q)) m(x, model.index(i, q - 1)) -= lam;
      if (model.bid_active(q)) m(x, model.index(i, q + 1)) -= lam;
      for (std::size_t j = 0; j < N; ++j)
        m(x, model.index(j, q)) -= qgen(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return m;
}

namespace detail {

// Shift making the v-system decay: the largest possible fill inflow per row.
inline double theta_shift(const ASModel& model) { return 2.0 * model.rent_rate(); }

inline Vector theta_from_scaled(const Vector& w_hat, double log_scale, const ASModel& model) {
  if (!w_hat.allFinite() || w_hat.minCoeff() <= 0.0)
    throw NumericalError("theta: v lost positivity; the horizon is too long for double precision");
  return -(w_hat.array().log() + log_scale) / model.gamma;
}

}  // namespace detail

struct RateSegment {
  Matrix rates;
  double duration = 0.0;
};

/// Stacked theta at backward time tau: v = exp(-M tau) 1 via the action of
/// the exponential, with the fill rent factored out as exp(2 Lambda* tau).
inline Vector solve_theta_exact(const ASModel& model, const Matrix& rates, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidArgument("solve_theta_exact: tau must be >= 0");
  const Matrix m = build_generator(model, rates);
  if (tau == 0.0) return Vector::Zero(m.rows());
  const double s = detail::theta_shift(model);
  const Matrix shifted = -m - s * Matrix::Identity(m.rows(), m.cols());
  const Vector w = expm_action(shifted, Vector::Ones(m.rows()), tau);
  return detail::theta_from_scaled(w, s * tau, model);
}

/// Piecewise-constant rates: segments are listed from the terminal time
/// backward, so segments[0] is the one adjacent to T.
inline Vector solve_theta_exact(const ASModel& model, const std::vector<RateSegment>& segments) {
  Vector w = Vector::Ones(model.n_states());
  double log_scale = 0.0;
  const double s = detail::theta_shift(model);
  for (const auto& seg : segments) {
    if (!(seg.duration >= 0.0)) throw InvalidArgument("solve_theta_exact: negative segment duration");
    if (seg.duration == 0.0) continue;
    const Matrix m = build_generator(model, seg.rates);
    w = expm_action(-m - s * Matrix::Identity(m.rows(), m.cols()), w, seg.duration);
    const double top = w.cwiseAbs().maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top)) throw NumericalError("solve_theta_exact: v underflowed");
    w /= top;
    log_scale += s * seg.duration + std::log(top);
  }
  return detail::theta_from_scaled(w, log_scale, model);
}

struct ThetaTable {
  TimeGrid grid;              // calendar time on [0, horizon]
  int q_max = 0;
  std::size_t n_regimes = 0;
  std::vector<Vector> theta;  // [node], stacked (regime, inventory)

  double at(std::size_t node, std::size_t i, int q) const {
    return theta.at(node)(static_cast<Eigen::Index>(i) * (2 * q_max + 1) + (q + q_max));
  }
  /// v = exp(-gamma theta) at a node.
  Vector v(std::size_t node, double gamma) const { return (-gamma * theta.at(node).array()).exp(); }
};

/// Theta on every node of a uniform grid over [0, horizon], constant rates.
/// One exponential of the step generator is reused for every step.
inline ThetaTable build_theta_table(const ASModel& model, const Matrix& rates, std::size_t n_steps) {
  const auto grid = TimeGrid::make(0.0, model.horizon, n_steps);
  const Matrix m = build_generator(model, rates);
  const double s = detail::theta_shift(model);
  const double h = grid.step();
  const Matrix step = matrix_exponential((-m - s * Matrix::Identity(m.rows(), m.cols())) * h);

  ThetaTable table;
  table.grid = grid;
  table.q_max = model.q_max;
  table.n_regimes = model.n_regimes();
  table.theta.assign(grid.n_nodes(), Vector::Zero(m.rows()));
  Vector w = Vector::Ones(m.rows());
  double log_scale = 0.0;
  for (std::size_t n = grid.n_steps; n-- > 0;) {
    w = step * w;
    const double top = w.cwiseAbs().maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top)) throw NumericalError("build_theta_table: v underflowed");
    w /= top;
    log_scale += s * h + std::log(top);
    table.theta[n] = detail::theta_from_scaled(w, log_scale, model);
  }
  return table;
}

/// w_i(tau) = int_0^tau [exp(Q u) s]_i du with s_j = sigma_j^2, exact through
/// the exponential of the augmented generator [[Q, s], [0, 0]].
inline double integrated_variance(const ASModel& model, const Matrix& rates, std::size_t i, double tau) {
  if (!(tau >= 0.0)) throw InvalidArgument("integrated_variance: tau must be >= 0");
  const auto N = static_cast<Eigen::Index>(model.n_regimes());
  if (tau == 0.0) return 0.0;
  Matrix aug = Matrix::Zero(N + 1, N + 1);
  aug.topLeftCorner(N, N) = regime_generator(rates);
  aug.topRightCorner(N, 1) = model.sigma.array().square().matrix();
  return matrix_exponential(aug * tau)(static_cast<Eigen::Index>(i), N);
}

/// sigma_i^2 tau + 1/2 sum_j mu_ij (sigma_j^2 - sigma_i^2) tau^2.
inline double integrated_variance_second_order(const ASModel& model, const Matrix& rates, std::size_t i, double tau) {
  const auto ii = static_cast<Eigen::Index>(i);
  const double si = model.sigma(ii) * model.sigma(ii);
  double drift = 0.0;
  for (Eigen::Index j = 0; j < model.sigma.size(); ++j)
    if (j != ii) drift += rates(ii, j) * (model.sigma(j) * model.sigma(j) - si);
  return si * tau + 0.5 * drift * tau * tau;
}

/// Short-horizon form of theta:
///   q^2/2 (gamma w_i + gamma^2 xi tau) - n_sides (A/gamma)(1 + gamma/k)^(-k/gamma) tau,
/// with n_sides = 2 inside the inventory band and 1 on its edges.
inline double theta_expansion(const ASModel& model, const Matrix& rates, std::size_t i, int q, double tau) {
  if (std::abs(q) > model.q_max) throw InvalidArgument("theta_expansion: |q| exceeds q_max");
  const double qq = static_cast<double>(q) * static_cast<double>(q);
  const double w = integrated_variance(model, rates, i, tau);
  const double sides = std::abs(q) == model.q_max ? 1.0 : 2.0;
  return 0.5 * qq * (model.gamma * w + model.gamma * model.gamma * model.xi * tau) -
         sides * model.rent_rate() / model.gamma * tau;
}

struct EffectiveVolatility {
  double instantaneous_variance = 0.0;  // sigma_i^2 + xi gamma
  double risk_factor = 0.0;             // C_i(tau) = gamma w_i(tau) + gamma^2 xi tau
};

inline EffectiveVolatility effective_volatility(const ASModel& model, const Matrix& rates, std::size_t i, double tau) {
  EffectiveVolatility e;
  e.instantaneous_variance = model.effective_variance(i);
  e.risk_factor = model.gamma * integrated_variance(model, rates, i, tau) + model.gamma * model.gamma * model.xi * tau;
  return e;
}

/// The same market seen without a predator but with variance sigma^2 + gamma xi.
inline ASModel isomorphic_model(const ASModel& model) {
  ASModel iso = model;
  for (Eigen::Index i = 0; i < iso.sigma.size(); ++i) iso.sigma(i) = std::sqrt(model.effective_variance(static_cast<std::size_t>(i)));
  iso.xi = 0.0;
  return iso;
}

struct QuotePair {
  double u_a = 0.0;
  double u_b = 0.0;
  bool ask_active = true;
  bool bid_active = true;

  double total() const { return (ask_active ? u_a : 0.0) + (bid_active ? u_b : 0.0); }
};

/// Per-side first-order condition against the stored theta:
///   u_a = (1/gamma) ln(1 + gamma/k) + theta(q-1) - theta(q),
///   u_b = (1/gamma) ln(1 + gamma/k) + theta(q+1) - theta(q),
/// clamped at zero; the side that would leave the inventory band is inactive.
inline QuotePair optimal_quotes(const ThetaTable& table, const ASModel& model, std::size_t i, int q, std::size_t node) {
  if (std::abs(q) > model.q_max) throw InvalidArgument("optimal_quotes: |q| exceeds q_max");
  QuotePair p;
  const double base = model.base_offset();
  const double here = table.at(node, i, q);
  p.ask_active = model.ask_active(q);
  p.bid_active = model.bid_active(q);
  if (p.ask_active) p.u_a = std::max(0.0, base + table.at(node, i, q - 1) - here);
  if (p.bid_active) p.u_b = std::max(0.0, base + table.at(node, i, q + 1) - here);
  return p;
}

/// Running cost of the macro game: the short-horizon theta.
inline double macro_theta_cost(const ASModel& model, const Matrix& rates, std::size_t i, int q, double tau) {
  return theta_expansion(model, rates, i, q, tau);
}

// ---------------------------------------------------------------------------
// Macro layer over theta-based costs.

enum class MacroMode { affine, quadratic };
enum class AffinePolicy { saddle, bang_bang };

struct MacroOptions {
  MacroMode mode = MacroMode::affine;
  AffinePolicy affine_policy = AffinePolicy::saddle;
  bool flip_bangbang = false;
  bool clamp_efforts = true;
};

struct MacroSolution {
  OuterSolution outer;                // k holds U_i(t, q)
  std::vector<Vector> effort_f;       // [node], weight on "active" per regime
  std::vector<Vector> effort_g;
  std::size_t nonbilinear_nodes = 0;  // nodes where the full bracket saddle differs from the bilinear one
};

namespace detail {

// Rates seen by regime i's running cost: row i from the candidate efforts,
// the other rows at baseline.
inline Matrix candidate_rates(const OuterGameSpec& spec, std::size_t i, double f, double g) {
  Matrix r = spec.baseline_rates;
  const auto ii = static_cast<Eigen::Index>(i);
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    if (j != ii) r(ii, j) = std::max(0.0, r(ii, j) + f * spec.attack(ii, j) - g * spec.stabilize(ii, j));
  r.diagonal().setZero();
  return r;
}

struct MacroDecision {
  double f = 0.0, g = 0.0;  // weights on "active"
  Vector mu_row;
  bool nonbilinear = false;
};

inline double rate_bracket(const OuterGameSpec& spec, const Vector& U, std::size_t i, double f, double g) {
  const auto ii = static_cast<Eigen::Index>(i);
  double out = 0.0;
  for (Eigen::Index j = 0; j < U.size(); ++j)
    if (j != ii) out += (spec.baseline_rates(ii, j) + f * spec.attack(ii, j) - g * spec.stabilize(ii, j)) * (U(j) - U(ii));
  return out;
}

}  // namespace detail

/// Backward sweep of U_i(t, q) for a fixed inventory level q:
///   -dU_i/dt = [phi_i(q; f, g) + sum_j mu_ij(f, g)(U_j - U_i)] at the players' choice,
/// with phi the short-horizon theta under the candidate rates. Affine mode
/// solves the 2x2 game over pure (active, off) pairs of the full bracket;
/// quadratic mode uses the proportional efforts and subtracts
/// rho_f f^2/2 + rho_g g^2/2.
inline MacroSolution solve_macro_as(const ASModel& model, const OuterGameSpec& spec, int q, const TimeGrid& grid,
                                    const MacroOptions& opt = {}) {
  model.validate();
  spec.validate();
  grid.validate();
  if (!spec.is_affine()) throw InvalidArgument("solve_macro_as: spec must carry attack/stabilize profiles");
  if (spec.n_regimes() != model.n_regimes()) throw InvalidArgument("solve_macro_as: regime count mismatch");
  if (std::abs(q) > model.q_max) throw InvalidArgument("solve_macro_as: |q| exceeds q_max");
  const auto N = model.n_regimes();
  const auto NN = static_cast<Eigen::Index>(N);
  const double T = grid.horizon;

  auto phi = [&](std::size_t i, double f, double g, double t) {
    return macro_theta_cost(model, detail::candidate_rates(spec, i, f, g), i, q, std::max(0.0, T - t));
  };

  // Choice at a node; efforts are then frozen over the step.
  auto decide = [&](const Vector& U, double t, std::size_t i) {
    detail::MacroDecision d;
    const Vector gaps = stability_gaps(U, i);
    const Vector att = spec.attack.row(static_cast<Eigen::Index>(i)).transpose();
    const Vector stab = spec.stabilize.row(static_cast<Eigen::Index>(i)).transpose();
    if (opt.mode == MacroMode::quadratic) {
      const auto e = proportional_policy(gaps, att, stab, spec.rho_f, spec.rho_g, opt.clamp_efforts);
      d.f = e.f;
      d.g = e.g;
    } else if (opt.affine_policy == AffinePolicy::bang_bang) {
      const auto e = bang_bang_policy(gaps, att, stab, opt.flip_bangbang);
      d.f = e.f;
      d.g = e.g;
    } else {
      // Actions ordered (active, off) for both players.
      Matrix full(2, 2), bilinear(2, 2);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double f = a == 0 ? 1.0 : 0.0;
          const double g = b == 0 ? 1.0 : 0.0;
          bilinear(a, b) = detail::rate_bracket(spec, U, i, f, g);
          full(a, b) = phi(i, f, g, t) + bilinear(a, b);
        }
      const auto s_full = solve_zero_sum(MatrixGame{full});
      const auto s_bil = solve_zero_sum(MatrixGame{bilinear});
      d.f = s_full.row_strategy(0);
      d.g = s_full.col_strategy(0);
      d.nonbilinear = std::abs(s_full.row_strategy(0) - s_bil.row_strategy(0)) > 1e-9 ||
                      std::abs(s_full.col_strategy(0) - s_bil.col_strategy(0)) > 1e-9;
    }
    Vector f(2), g(2);
    f << d.f, 1.0 - d.f;
    g << d.g, 1.0 - d.g;
    if (opt.mode == MacroMode::quadratic) {
      // Efforts are intensities here, not mixing weights: evaluate the rate directly.
      d.mu_row = Vector::Zero(NN);
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index j = 0; j < NN; ++j) {
        if (j == ii) continue;
        const double r = spec.baseline_rates(ii, j) + d.f * spec.attack(ii, j) - d.g * spec.stabilize(ii, j);
        if (r < 0.0) {
          std::ostringstream msg;
          msg << "solve_macro_as: efforts drive rate (" << i << "," << j << ") negative: " << r;
          throw NumericalError(msg.str());
        }
        d.mu_row(j) = r;
      }
      d.mu_row(ii) = -d.mu_row.sum();
    } else {
      d.mu_row = equilibrium_rates(f, g, spec, i);
    }
    return d;
  };

  // Expected running cost under the frozen efforts at calendar time t.
  auto running = [&](const std::vector<detail::MacroDecision>& ds, double t) {
    Vector out(NN);
    for (std::size_t i = 0; i < N; ++i) {
      const auto& d = ds[i];
      double c = 0.0;
      if (opt.mode == MacroMode::quadratic) {
        c = phi(i, d.f, d.g, t);
      } else {
        // Mixed efforts: expectation over the pure (active, off) pairs.
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const double pf = a == 0 ? d.f : 1.0 - d.f;
            const double pg = b == 0 ? d.g : 1.0 - d.g;
            if (pf * pg != 0.0) c += pf * pg * phi(i, a == 0 ? 1.0 : 0.0, b == 0 ? 1.0 : 0.0, t);
          }
      }
      if (opt.mode == MacroMode::quadratic) c -= 0.5 * spec.rho_f * d.f * d.f + 0.5 * spec.rho_g * d.g * d.g;
      out(static_cast<Eigen::Index>(i)) = c;
    }
    return out;
  };

  MacroSolution sol;
  sol.outer = detail::allocate_outer(grid);
  sol.effort_f.assign(grid.n_nodes(), Vector::Zero(NN));
  sol.effort_g.assign(grid.n_nodes(), Vector::Zero(NN));
  Vector U = Vector::Zero(NN);
  const double h = grid.step();

  for (std::size_t s = grid.n_steps + 1; s-- > 0;) {
    const double t = grid.time(s);
    std::vector<detail::MacroDecision> ds(N);
    Matrix mu(NN, NN);
    bool flagged = false;
    for (std::size_t i = 0; i < N; ++i) {
      ds[i] = decide(U, t, i);
      mu.row(static_cast<Eigen::Index>(i)) = ds[i].mu_row.transpose();
      flagged = flagged || ds[i].nonbilinear;
      sol.effort_f[s](static_cast<Eigen::Index>(i)) = ds[i].f;
      sol.effort_g[s](static_cast<Eigen::Index>(i)) = ds[i].g;
    }
    if (flagged) ++sol.nonbilinear_nodes;
    sol.outer.k[s] = U;
    sol.outer.mu[s] = mu;
    sol.outer.f[s].assign(N, Vector());
    sol.outer.g[s].assign(N, Vector());
    for (std::size_t i = 0; i < N; ++i) {
      sol.outer.f[s][i] = (Vector(2) << ds[i].f, 1.0 - ds[i].f).finished();
      sol.outer.g[s][i] = (Vector(2) << ds[i].g, 1.0 - ds[i].g).finished();
    }
    const Vector c_hi = running(ds, t);
    sol.outer.game_value[s] = c_hi + (mu * U);
    if (s == 0) break;
    const Vector c_mid = running(ds, t - 0.5 * h);
    const Vector c_lo = running(ds, t - h);
    const Vector k1 = outer_rhs(U, c_hi, mu);
    const Vector k2 = outer_rhs(U + 0.5 * h * k1, c_mid, mu);
    const Vector k3 = outer_rhs(U + 0.5 * h * k2, c_mid, mu);
    const Vector k4 = outer_rhs(U + h * k3, c_lo, mu);
    U += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!U.allFinite()) throw BlowUpError("solve_macro_as: U left the finite range", grid.time(s - 1));
  }
  return sol;
}

}  // namespace gig
