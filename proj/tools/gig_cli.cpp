// gig: calibrate | solve | mm | simulate
//
// Exit codes: 0 ok, 2 config or validation error, 3 numerical failure,
// 1 anything else (I/O).

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gig/as_game.hpp"
#include "gig/calib.hpp"
#include "gig/config.hpp"
#include "gig/hierarchy.hpp"
#include "gig/io.hpp"
#include "gig/sim.hpp"

namespace fs = std::filesystem;
using namespace gig;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  bool flip = false;
  bool clamp = false;
  std::string csv;  // calibrate only
};

RunConfig load(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.paths) c.sim.n_paths = *f.paths;
  if (f.steps) {
    // Keep the horizon; the step length follows.
    c.sim.n_steps = *f.steps;
    c.market.dt_seconds = c.market.horizon_hours * 3600.0 / static_cast<double>(*f.steps);
  }
  if (f.flip) c.mm.macro.flip_bangbang = true;
  if (f.clamp) c.mm.macro.clamp_efforts = true;
  return c;
}

Json lq_regime_count(const RegimeLQModel& m) { return Json{{"regimes", m.n_regimes()}, {"state_dim", m.state_dim()}}; }

// ---------------------------------------------------------------------------

int cmd_calibrate(const Flags& f) {
  RunConfig c = load(f);
  const auto opt = to_calib_options(c);
  std::string input = f.csv.empty() ? c.calibrate.input : f.csv;
  if (input.empty()) throw InvalidArgument("calibrate.input: no CSV given (config key or positional argument)");
  const fs::path path = f.csv.empty() ? resolve_path(c, input) : fs::path(input);
  const auto series = read_ohlcv_csv(path.string());
  const auto cal = calibrate(series, opt);
  const auto vol = rolling_volatility(series.close, opt.window, opt.annualization);

  Json runs = Json::array();
  for (std::size_t i = 0; i < cal.run_lengths.size(); ++i) {
    const auto& r = cal.run_lengths[i];
    runs.push_back({{"regime", i},
                    {"runs", r.runs},
                    {"mean_bars", r.mean_bars},
                    {"mean_holding_minutes", r.mean_bars * cal.bar_seconds / 60.0},
                    {"longest_bars", r.longest}});
  }
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["input"] = path.filename().string();
  j["bars"] = series.size();
  j["bar_seconds"] = cal.bar_seconds;
  j["window"] = opt.window;
  j["annualization"] = opt.annualization;
  j["n_regimes"] = opt.n_regimes;
  j["estimator"] = to_string(opt.estimator);
  j["sigma"] = to_json(cal.sigma);
  j["centers"] = to_json(cal.sigma);
  j["generator_per_day"] = to_json(cal.generator);
  j["generator_count_per_day"] = to_json(cal.generator_count);
  j["generator_embedded_per_day"] = cal.generator_embedded.size() ? to_json(cal.generator_embedded) : Json();
  j["label_runs"] = runs;
  j["warnings"] = cal.warnings;
  const fs::path out(c.out);
  write_json(out / "calibration.json", j);

  CsvTable t({"bar", "timestamp", "close", "volatility", "label"});
  for (std::size_t b = 0; b < series.size(); ++b)
    t.row() << b << static_cast<long>(series.timestamp[b]) << series.close[b]
            << (vol[b] ? *vol[b] : std::nan("")) << cal.labels[b];
  atomic_write(out / "calibration_labels.csv", t.str());

  std::printf("bars %zu  bar %gs  window %zu  annualization %g\n", series.size(), cal.bar_seconds, opt.window,
              opt.annualization);
  std::printf("%-7s %-12s %-10s %-14s\n", "regime", "sigma", "runs", "hold (min)");
  for (Eigen::Index i = 0; i < cal.sigma.size(); ++i)
    std::printf("%-7ld %-12.6g %-10zu %-14.4g\n", static_cast<long>(i), cal.sigma(i),
                cal.run_lengths[static_cast<std::size_t>(i)].runs,
                cal.run_lengths[static_cast<std::size_t>(i)].mean_bars * cal.bar_seconds / 60.0);
  std::printf("generator per day (%s):\n", to_string(opt.estimator));
  for (Eigen::Index i = 0; i < cal.generator.rows(); ++i) {
    for (Eigen::Index k = 0; k < cal.generator.cols(); ++k) std::printf(" %12.5g", cal.generator(i, k));
    std::printf("\n");
  }
  for (const auto& w : cal.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_solve(const Flags& f) {
  RunConfig c = load(f);
  const auto model = to_lq_model(c);
  const auto spec = to_outer_spec(c);
  if (spec.n_regimes() != model.n_regimes())
    throw InvalidArgument("outer.baseline_rates: size differs from the number of lq.regimes");
  std::optional<Vector> terminal;
  if (!c.outer.terminal_k.empty()) {
    if (c.outer.terminal_k.size() != model.n_regimes()) throw InvalidArgument("outer.terminal_k: wrong length");
    terminal = to_vector(c.outer.terminal_k);
  }
  const auto grid = TimeGrid::make(0.0, c.lq.horizon, c.lq.n_steps);
  const auto sol = solve_hierarchy(model, spec, grid, terminal, c.lq.blowup_bound);
  const auto rep = turnpike_report(sol, model);

  const auto n = model.state_dim();
  const auto N = model.n_regimes();
  std::vector<std::string> cols{"node", "time", "regime", "r"};
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) cols.push_back("P_" + std::to_string(a) + "_" + std::to_string(b));
  CsvTable ric(cols);
  std::vector<std::string> ocols{"node", "time", "regime", "k", "phi", "game_value"};
  for (Eigen::Index a = 0; a < spec.row_actions(); ++a) ocols.push_back("f_" + std::to_string(a));
  for (Eigen::Index a = 0; a < spec.col_actions(); ++a) ocols.push_back("g_" + std::to_string(a));
  for (std::size_t j = 0; j < N; ++j) ocols.push_back("mu_to_" + std::to_string(j));
  CsvTable outer(ocols);
  for (std::size_t s = 0; s < grid.n_nodes(); ++s)
    for (std::size_t i = 0; i < N; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      auto& row = ric.row() << s << grid.time(s) << i << sol.riccati.r[s](ii);
      const Matrix& P = sol.riccati.P[s][i];
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) row << P(a, b);
      auto& orow = outer.row() << s << grid.time(s) << i << sol.outer.k[s](ii) << sol.phi[s](ii)
                               << sol.outer.game_value[s](ii);
      for (Eigen::Index a = 0; a < sol.outer.f[s][i].size(); ++a) orow << sol.outer.f[s][i](a);
      for (Eigen::Index a = 0; a < sol.outer.g[s][i].size(); ++a) orow << sol.outer.g[s][i](a);
      for (std::size_t j = 0; j < N; ++j) orow << sol.outer.mu[s](ii, static_cast<Eigen::Index>(j));
    }
  const fs::path out(c.out);
  atomic_write(out / "riccati.csv", ric.str());
  atomic_write(out / "outer.csv", outer.str());

  auto fit = [](const DecayFit& d) {
    return Json{{"rate", d.degenerate ? Json() : Json(d.rate)}, {"points", d.points}, {"degenerate", d.degenerate}};
  };
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = lq_regime_count(model);
  j["horizon"] = grid.horizon;
  j["n_steps"] = grid.n_steps;
  j["rho_h"] = rep.rho_h;
  j["inner_reference_rate"] = rep.inner_reference;
  j["mean_lambda2"] = rep.mean_lambda2;
  j["inner_fit"] = fit(rep.inner);
  j["outer_fit"] = fit(rep.outer);
  j["inner_ratio"] = !rep.inner.degenerate && rep.inner_reference > 0 ? Json(rep.inner.rate / rep.inner_reference) : Json();
  j["outer_ratio"] = !rep.outer.degenerate && rep.mean_lambda2 > 0 ? Json(rep.outer.rate / rep.mean_lambda2) : Json();
  Json p0 = Json::array();
  for (std::size_t i = 0; i < N; ++i) p0.push_back(to_json(sol.riccati.P[0][i]));
  j["P_at_t0"] = p0;
  j["k_at_t0"] = to_json(sol.outer.k[0]);
  j["warnings"] = rep.warnings;
  write_json(out / "turnpike.json", j);

  std::printf("solved %zu regimes, state dim %ld, %zu steps\n", N, static_cast<long>(n), grid.n_steps);
  for (std::size_t i = 0; i < N; ++i)
    std::printf("regime %zu: Tr P(0) = %.10g  k(0) = %.10g\n", i, sol.riccati.P[0][i].trace(),
                sol.outer.k[0](static_cast<Eigen::Index>(i)));
  std::printf("inner decay %s (2 rho_H = %.6g), outer decay %s (mean lambda_2 = %.6g)\n",
              rep.inner.degenerate ? "n/a" : std::to_string(rep.inner.rate).c_str(), rep.inner_reference,
              rep.outer.degenerate ? "n/a" : std::to_string(rep.outer.rate).c_str(), rep.mean_lambda2);
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_mm(const Flags& f) {
  RunConfig c = load(f);
  const ASModel m = to_model(c);
  if (c.mm.n_steps < 1) throw InvalidArgument("mm.n_steps: must be >= 1");
  const auto table = build_theta_table(m, m.rates, c.mm.n_steps);
  const fs::path out(c.out);

  CsvTable th({"node", "time_hours", "tau_hours", "regime", "q", "theta", "u_a", "u_b", "spread", "ask_active", "bid_active"});
  for (std::size_t s = 0; s < table.grid.n_nodes(); ++s)
    for (std::size_t i = 0; i < m.n_regimes(); ++i)
      for (int q = -m.q_max; q <= m.q_max; ++q) {
        const auto p = optimal_quotes(table, m, i, q, s);
        const double t = table.grid.time(s);
        th.row() << s << t * 365.0 * 24.0 << (m.horizon - t) * 365.0 * 24.0 << i << q << table.at(s, i, q)
                 << (p.ask_active ? p.u_a : std::nan("")) << (p.bid_active ? p.u_b : std::nan(""))
                 << (p.ask_active && p.bid_active ? p.total() : std::nan("")) << static_cast<int>(p.ask_active)
                 << static_cast<int>(p.bid_active);
      }
  atomic_write(out / "theta.csv", th.str());

  // Short-horizon expansion against the exact solution, all regimes and q.
  Json expansion = Json::array();
  for (double tau : c.mm.expansion_taus_years) {
    if (!(tau > 0.0)) throw InvalidArgument("mm.expansion_taus_years: entries must be positive");
    const Vector exact = solve_theta_exact(m, m.rates, tau);
    double err = 0.0;
    for (std::size_t i = 0; i < m.n_regimes(); ++i)
      for (int q = -m.q_max; q <= m.q_max; ++q)
        err = std::max(err, std::abs(exact(m.index(i, q)) - theta_expansion(m, m.rates, i, q, tau)));
    expansion.push_back({{"tau_years", tau}, {"max_abs_error", err}, {"error_over_tau3", err / (tau * tau * tau)}});
  }
  double slope = std::nan("");
  if (expansion.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(expansion.size());
    for (const auto& e : expansion) {
      const double x = std::log(e["tau_years"].get<double>());
      const double y = std::log(e["max_abs_error"].get<double>());
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }

  CsvTable sweep({"xi", "regime", "q", "spread_t0"});
  Json sweep_j = Json::array();
  for (double xi : c.mm.xi_sweep) {
    ASModel mx = m;
    mx.xi = xi;
    const auto tx = build_theta_table(mx, mx.rates, c.mm.n_steps);
    Json per = Json::array();
    for (std::size_t i = 0; i < m.n_regimes(); ++i)
      for (int q = -m.q_max + 1; q < m.q_max; ++q) {
        const double sp = optimal_quotes(tx, mx, i, q, 0).total();
        sweep.row() << xi << i << q << sp;
        if (q == 0) per.push_back(sp);
      }
    sweep_j.push_back({{"xi", xi}, {"spread_q0_t0", per}});
  }
  if (!c.mm.xi_sweep.empty()) atomic_write(out / "xi_sweep.csv", sweep.str());

  const auto iso = build_theta_table(isomorphic_model(m), m.rates, c.mm.n_steps);
  double iso_err = 0.0;
  for (std::size_t s = 0; s < table.grid.n_nodes(); ++s)
    iso_err = std::max(iso_err, (table.theta[s] - iso.theta[s]).cwiseAbs().maxCoeff());

  Json j;
  j["schema_version"] = kSchemaVersion;
  j["n_steps"] = c.mm.n_steps;
  j["horizon_years"] = m.horizon;
  j["base_offset"] = m.base_offset();
  j["optimal_fill_rate_per_year"] = m.rent_rate();
  j["predator_drift_per_unit"] = predator_drift(1, m);
  j["isomorphism_max_abs_diff"] = iso_err;
  j["expansion"] = expansion;
  j["expansion_loglog_slope"] = std::isfinite(slope) ? Json(slope) : Json();
  j["xi_sweep"] = sweep_j;

  if (c.mm.macro.enabled) {
    const auto spec = to_macro_spec(c, m);
    const auto opt = to_macro_options(c);
    const auto grid = TimeGrid::make(0.0, m.horizon, c.mm.macro.n_steps);
    const auto sol = solve_macro_as(m, spec, c.mm.macro.q, grid, opt);
    std::vector<std::string> cols{"node", "time_hours", "regime", "U", "f", "g"};
    for (std::size_t k = 0; k < m.n_regimes(); ++k) cols.push_back("mu_to_" + std::to_string(k) + "_per_day");
    CsvTable mac(cols);
    for (std::size_t s = 0; s < grid.n_nodes(); ++s)
      for (std::size_t i = 0; i < m.n_regimes(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        auto& row = mac.row() << s << grid.time(s) * 365.0 * 24.0 << i << sol.outer.k[s](ii) << sol.effort_f[s](ii)
                              << sol.effort_g[s](ii);
        for (std::size_t k = 0; k < m.n_regimes(); ++k) row << sol.outer.mu[s](ii, static_cast<Eigen::Index>(k)) / 365.0;
      }
    atomic_write(out / "macro.csv", mac.str());
    j["macro"] = {{"q", c.mm.macro.q},
                  {"mode", c.mm.macro.mode},
                  {"policy", c.mm.macro.policy},
                  {"flip_bangbang", opt.flip_bangbang},
                  {"clamp_efforts", opt.clamp_efforts},
                  {"U_at_t0", to_json(sol.outer.k[0])},
                  {"nonbilinear_nodes", sol.nonbilinear_nodes}};
  }
  write_json(out / "mm_report.json", j);

  std::printf("theta table: %zu nodes x %zu regimes x %ld inventories\n", table.grid.n_nodes(), m.n_regimes(),
              static_cast<long>(m.n_inventory()));
  std::printf("base offset %.6g, optimal fill rate %.6g /yr\n", m.base_offset(), m.rent_rate());
  std::printf("expansion log-log slope %.4g, isomorphism max diff %.3g\n", slope, iso_err);
  return 0;
}

// ---------------------------------------------------------------------------

Json stats_json(const StrategyStats& s) {
  return Json{{"mean_pnl", s.mean_pnl},
              {"std_pnl", s.std_pnl},
              {"sharpe", s.sharpe},
              {"mean_total_spread", s.mean_spread},
              {"mean_abs_drift", s.mean_abs_drift},
              {"mean_abs_inventory_time_avg", s.mean_abs_inventory},
              {"mean_abs_inventory_terminal", s.mean_terminal_abs_inventory},
              {"mean_ask_fills", s.mean_ask_fills},
              {"mean_bid_fills", s.mean_bid_fills}};
}

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(); }

std::string path_csv(const PathRecord& r) {
  CsvTable t({"step", "time_hours", "price", "regime", "inventory", "cash", "u_a", "u_b", "drift", "ask_fill", "bid_fill"});
  for (std::size_t n = 0; n < r.time.size(); ++n)
    t.row() << n + 1 << r.time[n] * 365.0 * 24.0 << r.price[n] << r.regime[n] << r.inventory[n] << r.cash[n] << r.u_a[n]
            << r.u_b[n] << r.drift[n] << static_cast<int>(r.ask_fill[n]) << static_cast<int>(r.bid_fill[n]);
  return t.str();
}

int cmd_simulate(const Flags& f) {
  RunConfig c = load(f);
  const SimConfig cfg = to_sim_config(c);
  const auto rep = run_monte_carlo(cfg);
  const fs::path out(c.out);

  Json notes = Json::array();
  if (!cfg.predator) notes.push_back("predator off: no drift acts, yet equilibrium quotes still price xi");
  if (cfg.model.xi == 0.0) notes.push_back("xi = 0: vanilla and equilibrium quotes coincide");
  notes.push_back("sharpe = mean / std of terminal PnL across paths");

  Json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["n_paths"] = cfg.n_paths;
  j["n_steps"] = cfg.n_steps;
  j["dt_seconds"] = cfg.dt() * 365.0 * 86400.0;
  j["predator"] = cfg.predator;
  j["initial_regime"] = cfg.initial_regime;
  j["model"] = {{"gamma", cfg.model.gamma},
                {"xi", cfg.model.xi},
                {"A", cfg.model.A},
                {"k", cfg.model.k},
                {"sigma", to_json(cfg.model.sigma)},
                {"q_max", cfg.model.q_max},
                {"rates_per_day", to_json(Matrix(cfg.model.rates / 365.0))},
                {"s0", cfg.model.s0}};
  j["vanilla"] = stats_json(rep.vanilla);
  j["equilibrium"] = stats_json(rep.equilibrium);
  j["comparison"] = {{"pnl_ratio", number_or_null(rep.pnl_ratio)},
                     {"sharpe_ratio", number_or_null(rep.sharpe_ratio)},
                     {"spread_ratio", number_or_null(rep.spread_ratio)},
                     {"drift_ratio", number_or_null(rep.drift_ratio)},
                     {"abs_inventory_ratio_time_avg", number_or_null(rep.abs_inventory_ratio)},
                     {"abs_inventory_ratio_terminal", number_or_null(rep.terminal_abs_inventory_ratio)},
                     {"paired_pnl_test",
                      {{"n", rep.pnl_test.n},
                       {"mean_diff", rep.pnl_test.mean_diff},
                       {"sd_diff", rep.pnl_test.sd_diff},
                       {"t", number_or_null(rep.pnl_test.t)},
                       {"p_value_one_sided", rep.pnl_test.p_value}}}};
  j["reference_figures_pct"] = {{"mean_pnl", 111.0}, {"sharpe", 58.0}, {"spread", 27.0}, {"drift", 16.4}};
  j["notes"] = notes;
  write_json(out / "sim_report.json", j);

  if (c.sim.export_paths > 0) {
    const auto van = make_policy(cfg.model, Strategy::vanilla, cfg.n_steps);
    const auto eq = make_policy(cfg.model, Strategy::equilibrium, cfg.n_steps);
    for (std::size_t p = 0; p < std::min(c.sim.export_paths, cfg.n_paths); ++p) {
      char name[64];
      PathRecord a, b;
      simulate_path(cfg, van, p, &a);
      simulate_path(cfg, eq, p, &b);
      std::snprintf(name, sizeof name, "vanilla_%04zu.csv", p);
      atomic_write(out / "paths" / name, path_csv(a));
      std::snprintf(name, sizeof name, "equilibrium_%04zu.csv", p);
      atomic_write(out / "paths" / name, path_csv(b));
    }
  }

  std::printf("%-12s %14s %12s %10s %12s %12s\n", "strategy", "mean PnL", "std PnL", "Sharpe", "spread", "|drift|");
  for (const auto& [name, s] : {std::pair{"vanilla", rep.vanilla}, std::pair{"equilibrium", rep.equilibrium}})
    std::printf("%-12s %14.6g %12.6g %10.4g %12.6g %12.6g\n", name, s.mean_pnl, s.std_pnl, s.sharpe, s.mean_spread,
                s.mean_abs_drift);
  std::printf("ratios: pnl %.4g  sharpe %.4g  spread %.4g  drift %.4g  (one-sided p = %.3g)\n", rep.pnl_ratio,
              rep.sharpe_ratio, rep.spread_ratio, rep.drift_ratio, rep.pnl_test.p_value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"games-in-games solvers and market-making simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "RNG seed (u64)");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--paths", f.paths, "Monte-Carlo paths")->check(CLI::PositiveNumber);
  app.add_option("--steps", f.steps, "simulation steps over the horizon")->check(CLI::PositiveNumber);
  app.add_flag("--flip-bangbang-orientation", f.flip, "reverse the bang-bang switching signs");
  app.add_flag("--clamp-efforts", f.clamp, "clamp proportional efforts to [0, 1]");

  auto* cal = app.add_subcommand("calibrate", "regime calibration from OHLCV CSV");
  cal->add_option("csv", f.csv, "OHLCV CSV (overrides calibrate.input)");
  app.add_subcommand("solve", "coupled Riccati + outer switching game");
  app.add_subcommand("mm", "theta table, quotes, expansion check, macro layer");
  app.add_subcommand("simulate", "vanilla vs equilibrium Monte-Carlo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("calibrate")) return cmd_calibrate(f);
    if (app.got_subcommand("solve")) return cmd_solve(f);
    if (app.got_subcommand("mm")) return cmd_mm(f);
    if (app.got_subcommand("simulate")) return cmd_simulate(f);
  } catch (const BlowUpError& e) {
    std::fprintf(stderr, "numerical failure: %s (t = %g, regime %d)\n", e.what(), e.time(), e.regime());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
