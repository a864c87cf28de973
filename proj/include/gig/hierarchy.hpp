#pragma once

// Joint backward sweep of the inner Riccati flow and the outer switching
// game. At every node the outer games are solved from the current k, and the
// resulting equilibrium generator drives both flows over the next step back.
// The outer running cost is phi_i = Tr(P_i).
//
// Rates come from the outer spec; the model's own baseline rates are not used
// by the sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gig/errors.hpp"
#include "gig/mjls.hpp"
#include "gig/numkit.hpp"
#include "gig/outer.hpp"

namespace gig {

struct HierarchySolution {
  RiccatiSolution riccati;
  OuterSolution outer;
  std::vector<Vector> phi;  // [node], Tr(P_i)
};

inline Vector trace_costs(const std::vector<Matrix>& P) {
  Vector phi(static_cast<Eigen::Index>(P.size()));
  for (std::size_t i = 0; i < P.size(); ++i) phi(static_cast<Eigen::Index>(i)) = P[i].trace();
  return phi;
}

inline HierarchySolution solve_hierarchy(const RegimeLQModel& model, const OuterGameSpec& spec, const TimeGrid& grid,
                                         const std::optional<Vector>& terminal_k = std::nullopt,
                                         double blowup_bound = 1e8) {
  model.validate();
  spec.validate();
  grid.validate();
  const auto N = model.n_regimes();
  if (spec.n_regimes() != N) throw InvalidArgument("solve_hierarchy: model and spec disagree on the regime count");
  Vector k = terminal_k.value_or(Vector::Zero(static_cast<Eigen::Index>(N)));
  if (static_cast<std::size_t>(k.size()) != N) throw InvalidArgument("solve_hierarchy: bad terminal k");

  HierarchySolution sol;
  sol.riccati.grid = grid;
  sol.riccati.P.resize(grid.n_nodes());
  sol.riccati.r.resize(grid.n_nodes());
  sol.outer = detail::allocate_outer(grid);
  sol.phi.resize(grid.n_nodes());

  std::vector<Matrix> P(N);
  for (std::size_t i = 0; i < N; ++i) P[i] = model.regimes[i].QT;
  Vector r = Vector::Zero(static_cast<Eigen::Index>(N));
  const double h = grid.step();

  for (std::size_t s = grid.n_steps + 1; s-- > 0;) {
    sol.riccati.P[s] = P;
    sol.riccati.r[s] = r;
    sol.phi[s] = trace_costs(P);
    auto eq = detail::solve_node(k, spec);
    const Matrix mu = eq.mu;
    detail::record_node(sol.outer, s, k, std::move(eq));
    if (s == 0) break;
    detail::inner_step(P, r, mu, model, grid.time(s), h, blowup_bound);
    k = detail::outer_step(k, sol.phi[s], trace_costs(P), mu, h);
    if (!k.allFinite()) throw BlowUpError("solve_hierarchy: k left the finite range", grid.time(s - 1));
  }
  return sol;
}

/// Equilibrium generator at every node, as a rate schedule for the inner flow.
inline RateSchedule extracted_rates(const HierarchySolution& sol) { return sol.outer.mu; }

struct DecayFit {
  double rate = 0.0;
  std::size_t points = 0;
  bool degenerate = true;
};

struct TurnpikeReport {
  double rho_h = 0.0;
  double inner_reference = 0.0;  // 2 rho_H
  std::vector<double> lambda2;   // per node
  double mean_lambda2 = 0.0;
  DecayFit inner;
  DecayFit outer;
  std::vector<std::string> warnings;
};

namespace detail {

// Fits log(dev) = c - rate * tau over the stretch where dev has fallen to
// between 1e-8 and 1e-2 of its peak, away from the far end of the horizon.
inline DecayFit fit_decay(const std::vector<double>& tau, const std::vector<double>& dev) {
  DecayFit fit;
  const double peak = dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
  if (!(peak > 0.0)) return fit;
  const double tau_max = tau.empty() ? 0.0 : *std::max_element(tau.begin(), tau.end());
  std::vector<double> x, y;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (tau[k] > 0.7 * tau_max) continue;
    if (dev[k] <= 1e-8 * peak || dev[k] >= 1e-2 * peak) continue;
    x.push_back(tau[k]);
    y.push_back(std::log(dev[k]));
  }
  fit.points = x.size();
  if (x.size() < 5) return fit;
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  fit.rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.degenerate = false;
  return fit;
}

}  // namespace detail

/// Fitted exponential decay of both layers toward their far-horizon values,
/// next to the spectral references 2 rho_H and mean lambda_2.
inline TurnpikeReport turnpike_report(const HierarchySolution& sol, const RegimeLQModel& model) {
  TurnpikeReport rep;
  const auto& grid = sol.riccati.grid;
  const std::size_t far = 0;  // node 0 sits at the largest backward time
  rep.rho_h = hamiltonian_spectral_gap(model);
  rep.inner_reference = 2.0 * rep.rho_h;

  std::vector<double> tau, inner_dev, outer_dev;
  const Vector k_far = sol.outer.k[far];
  const Vector d_far = k_far.array() - k_far.mean();
  for (std::size_t n = 0; n < grid.n_nodes(); ++n) {
    tau.push_back(grid.horizon - grid.time(n));
    double dev = 0.0;
    for (std::size_t i = 0; i < sol.riccati.P[n].size(); ++i)
      dev = std::max(dev, (sol.riccati.P[n][i] - sol.riccati.P[far][i]).norm());
    inner_dev.push_back(dev);
    const Vector d = sol.outer.k[n].array() - sol.outer.k[n].mean();
    outer_dev.push_back((d - d_far).norm());
    rep.lambda2.push_back(laplacian_spectral_gap(sol.outer.mu[n]));
  }
  double acc = 0.0;
  for (double l : rep.lambda2) acc += l;
  rep.mean_lambda2 = rep.lambda2.empty() ? 0.0 : acc / static_cast<double>(rep.lambda2.size());
  rep.inner = detail::fit_decay(tau, inner_dev);
  rep.outer = detail::fit_decay(tau, outer_dev);
  if (rep.inner.degenerate) rep.warnings.push_back("inner layer: no clean exponential stretch (flat or horizon too short)");
  if (rep.outer.degenerate) rep.warnings.push_back("outer layer: no clean exponential stretch (flat or horizon too short)");
  if (rep.inner_reference > 0.0 && grid.horizon - grid.t0 < 5.0 / rep.inner_reference)
    rep.warnings.push_back("horizon shorter than five inner time constants");
  return rep;
}

}  // namespace gig
