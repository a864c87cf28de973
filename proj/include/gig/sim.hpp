#pragma once

// Monte-Carlo replay of the regime-switching market with a predator, comparing
// predator-blind (vanilla) quoting with equilibrium quoting on common random
// numbers.
//
// RNG: xoshiro256** per path. Path p is seeded by running splitmix64 from
// state seed + (p + 1) * 0xD1B54A32D192ED03 and taking four outputs. Every
// step draws exactly six uniforms in a fixed order (regime clock, regime
// target, two for Box-Muller, ask fill, bid fill) whether or not they are
// used, so streams stay aligned across strategies.

#include <boost/math/distributions/students_t.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gig/as_game.hpp"
#include "gig/errors.hpp"

namespace gig {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static Xoshiro256 for_path(std::uint64_t seed, std::uint64_t path) {
    return Xoshiro256(seed + (path + 1) * 0xD1B54A32D192ED03ULL);
  }

  std::uint64_t next() {
    const std::uint64_t out = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return out;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

enum class Strategy { vanilla, equilibrium };

inline const char* to_string(Strategy s) { return s == Strategy::vanilla ? "vanilla" : "equilibrium"; }

struct SimConfig {
  ASModel model;
  std::size_t n_paths = 1000;
  std::size_t n_steps = 2880;
  std::uint64_t seed = 20240917;
  bool predator = true;
  std::size_t initial_regime = 0;

  double dt() const { return model.horizon / static_cast<double>(n_steps); }
  void validate() const {
    model.validate();
    if (n_paths < 1) throw InvalidArgument("sim.n_paths must be >= 1");
    if (n_steps < 1) throw InvalidArgument("sim.n_steps must be >= 1");
    if (initial_regime >= model.n_regimes()) throw InvalidArgument("sim.initial_regime out of range");
    if (std::abs(static_cast<double>(n_steps) * model.dt - model.horizon) > 1e-9 * model.horizon)
      throw InvalidArgument("sim: n_steps * dt must equal the horizon");
  }
};

/// Quotes from a theta table on the simulation grid (node n = step n).
class QuotePolicy {
 public:
  QuotePolicy(const ASModel& model, std::size_t n_steps) : model_(model), table_(build_theta_table(model, model.rates, n_steps)) {}
  QuotePair quote(std::size_t i, int q, std::size_t node) const { return optimal_quotes(table_, model_, i, q, node); }
  const ThetaTable& table() const { return table_; }

 private:
  ASModel model_;
  ThetaTable table_;
};

/// Vanilla quotes ignore the predator: theta is built with xi = 0.
inline QuotePolicy make_policy(const ASModel& model, Strategy s, std::size_t n_steps) {
  ASModel m = model;
  if (s == Strategy::vanilla) m.xi = 0.0;
  return QuotePolicy(m, n_steps);
}

struct PathRecord {
  std::vector<double> time, price, cash, u_a, u_b, drift;
  std::vector<int> regime, inventory;
  std::vector<std::uint8_t> ask_fill, bid_fill;
};

struct PathSummary {
  double pnl = 0.0;
  double cash = 0.0;
  double final_price = 0.0;
  int final_inventory = 0;
  double mean_spread = 0.0;      // over steps quoting both sides
  double mean_abs_drift = 0.0;   // over steps
  double mean_abs_inventory = 0.0;
  std::size_t ask_fills = 0, bid_fills = 0;
  double price_increment = 0.0;  // S_T - S_0
};

inline double fill_probability(const ASModel& m, double u, double dt) {
  return -std::expm1(-m.A * std::exp(-m.k * u) * dt);
}

/// One path; `record` receives per-step rows (state after the step) when given.
inline PathSummary simulate_path(const SimConfig& cfg, const QuotePolicy& policy, std::uint64_t path,
                                 PathRecord* record = nullptr) {
  const ASModel& m = cfg.model;
  const double dt = cfg.dt();
  const double sqdt = std::sqrt(dt);
  const auto N = m.n_regimes();
  Matrix gen = regime_generator(m.rates);

  Xoshiro256 rng = Xoshiro256::for_path(cfg.seed, path);
  std::size_t regime = cfg.initial_regime;
  int q = 0;
  double S = m.s0, cash = 0.0;
  PathSummary out;
  double spread_sum = 0.0, drift_sum = 0.0, inv_sum = 0.0;
  std::size_t spread_n = 0;

  for (std::size_t n = 0; n < cfg.n_steps; ++n) {
    std::array<double, 6> u;
    for (auto& x : u) x = rng.uniform();

    const auto ri = static_cast<Eigen::Index>(regime);
    const double out_rate = -gen(ri, ri);
    if (out_rate > 0.0 && u[0] < -std::expm1(-out_rate * dt)) {
      double pick = u[1] * out_rate;
      std::size_t target = regime;
      for (std::size_t j = 0; j < N; ++j) {
        if (j == regime) continue;
        const double r = gen(ri, static_cast<Eigen::Index>(j));
        if (r <= 0.0) continue;
        target = j;
        if (pick < r) break;
        pick -= r;
      }
      regime = target;
    }

    const double w = cfg.predator ? predator_drift(q, m) : 0.0;
    const double z = std::sqrt(-2.0 * std::log(1.0 - u[2])) * std::cos(2.0 * std::numbers::pi * u[3]);
    S += w * dt + m.sigma(static_cast<Eigen::Index>(regime)) * sqdt * z;

    const QuotePair qp = policy.quote(regime, q, n);
    const bool ask = qp.ask_active && u[4] < fill_probability(m, qp.u_a, dt);
    const bool bid = qp.bid_active && u[5] < fill_probability(m, qp.u_b, dt);
    if (ask) {
      cash += S + qp.u_a;
      --q;
      ++out.ask_fills;
    }
    if (bid) {
      cash -= S - qp.u_b;
      ++q;
      ++out.bid_fills;
    }

    if (qp.ask_active && qp.bid_active) {
      spread_sum += qp.total();
      ++spread_n;
    }
    drift_sum += std::abs(w);
    inv_sum += std::abs(q);
    if (record) {
      record->time.push_back(static_cast<double>(n + 1) * dt);
      record->price.push_back(S);
      record->regime.push_back(static_cast<int>(regime));
      record->inventory.push_back(q);
      record->cash.push_back(cash);
      record->u_a.push_back(qp.ask_active ? qp.u_a : std::numeric_limits<double>::quiet_NaN());
      record->u_b.push_back(qp.bid_active ? qp.u_b : std::numeric_limits<double>::quiet_NaN());
      record->drift.push_back(w);
      record->ask_fill.push_back(ask);
      record->bid_fill.push_back(bid);
    }
  }
  const double steps = static_cast<double>(cfg.n_steps);
  out.cash = cash;
  out.final_price = S;
  out.final_inventory = q;
  out.pnl = cash + q * S;
  out.mean_spread = spread_n ? spread_sum / static_cast<double>(spread_n) : 0.0;
  out.mean_abs_drift = drift_sum / steps;
  out.mean_abs_inventory = inv_sum / steps;
  out.price_increment = S - m.s0;
  return out;
}

inline std::vector<PathSummary> run_paths(const SimConfig& cfg, const QuotePolicy& policy) {
  cfg.validate();
  std::vector<PathSummary> out;
  out.reserve(cfg.n_paths);
  for (std::size_t p = 0; p < cfg.n_paths; ++p) out.push_back(simulate_path(cfg, policy, p));
  return out;
}

struct StrategyStats {
  double mean_pnl = 0.0, std_pnl = 0.0, sharpe = 0.0;
  double mean_spread = 0.0, mean_abs_drift = 0.0;
  double mean_abs_inventory = 0.0, mean_terminal_abs_inventory = 0.0;
  double mean_ask_fills = 0.0, mean_bid_fills = 0.0;
};

/// Sample moments over paths; std uses n - 1 and is 0 for a single path,
/// in which case Sharpe is reported as 0.
inline StrategyStats summarize(const std::vector<PathSummary>& paths) {
  StrategyStats s;
  if (paths.empty()) return s;
  const double n = static_cast<double>(paths.size());
  for (const auto& p : paths) {
    s.mean_pnl += p.pnl;
    s.mean_spread += p.mean_spread;
    s.mean_abs_drift += p.mean_abs_drift;
    s.mean_abs_inventory += p.mean_abs_inventory;
    s.mean_terminal_abs_inventory += std::abs(p.final_inventory);
    s.mean_ask_fills += static_cast<double>(p.ask_fills);
    s.mean_bid_fills += static_cast<double>(p.bid_fills);
  }
  s.mean_pnl /= n;
  s.mean_spread /= n;
  s.mean_abs_drift /= n;
  s.mean_abs_inventory /= n;
  s.mean_terminal_abs_inventory /= n;
  s.mean_ask_fills /= n;
  s.mean_bid_fills /= n;
  if (paths.size() > 1) {
    double ss = 0.0;
    for (const auto& p : paths) ss += (p.pnl - s.mean_pnl) * (p.pnl - s.mean_pnl);
    s.std_pnl = std::sqrt(ss / (n - 1.0));
  }
  s.sharpe = s.std_pnl > 0.0 ? s.mean_pnl / s.std_pnl : 0.0;
  return s;
}

/// One-sided paired t-test of H1: mean(a - b) > 0.
struct PairedTest {
  std::size_t n = 0;
  double mean_diff = 0.0, sd_diff = 0.0, t = 0.0;
  double p_value = 1.0;
  bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

inline PairedTest paired_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_test: samples differ in size");
  PairedTest r;
  r.n = a.size();
  if (r.n == 0) return r;
  const double n = static_cast<double>(r.n);
  for (std::size_t k = 0; k < r.n; ++k) r.mean_diff += a[k] - b[k];
  r.mean_diff /= n;
  if (r.n < 2) return r;
  double ss = 0.0;
  for (std::size_t k = 0; k < r.n; ++k) ss += (a[k] - b[k] - r.mean_diff) * (a[k] - b[k] - r.mean_diff);
  r.sd_diff = std::sqrt(ss / (n - 1.0));
  if (r.sd_diff == 0.0) {
    // Deterministic difference.
    r.t = r.mean_diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p_value = r.mean_diff > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.t = r.mean_diff / (r.sd_diff / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

inline std::vector<double> pnls(const std::vector<PathSummary>& paths) {
  std::vector<double> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.pnl);
  return out;
}

struct SimReport {
  SimConfig config;
  StrategyStats vanilla, equilibrium;
  PairedTest pnl_test;  // equilibrium minus vanilla
  double pnl_ratio = 0.0, sharpe_ratio = 0.0, spread_ratio = 0.0, drift_ratio = 0.0;
  double abs_inventory_ratio = 0.0, terminal_abs_inventory_ratio = 0.0;
};

inline double safe_ratio(double a, double b) {
  return b != 0.0 ? a / b : std::numeric_limits<double>::quiet_NaN();
}

/// Both strategies on the same path streams.
inline SimReport run_monte_carlo(const SimConfig& cfg) {
  cfg.validate();
  SimReport rep;
  rep.config = cfg;
  const auto van = run_paths(cfg, make_policy(cfg.model, Strategy::vanilla, cfg.n_steps));
  const auto eq = run_paths(cfg, make_policy(cfg.model, Strategy::equilibrium, cfg.n_steps));
  rep.vanilla = summarize(van);
  rep.equilibrium = summarize(eq);
  rep.pnl_test = paired_test(pnls(eq), pnls(van));
  rep.pnl_ratio = safe_ratio(rep.equilibrium.mean_pnl, rep.vanilla.mean_pnl);
  rep.sharpe_ratio = safe_ratio(rep.equilibrium.sharpe, rep.vanilla.sharpe);
  rep.spread_ratio = safe_ratio(rep.equilibrium.mean_spread, rep.vanilla.mean_spread);
  rep.drift_ratio = safe_ratio(rep.equilibrium.mean_abs_drift, rep.vanilla.mean_abs_drift);
  rep.abs_inventory_ratio = safe_ratio(rep.equilibrium.mean_abs_inventory, rep.vanilla.mean_abs_inventory);
  rep.terminal_abs_inventory_ratio =
      safe_ratio(rep.equilibrium.mean_terminal_abs_inventory, rep.vanilla.mean_terminal_abs_inventory);
  return rep;
}

}  // namespace gig
