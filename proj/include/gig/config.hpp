#pragma once

// Run configuration: a JSON tree with one object per section. Every key is
// optional (defaults below) and unknown keys are rejected with their path.
//
// Units in the file: market rates per day, horizon in hours, dt in seconds,
// sigma in currency per sqrt(year). LQ and outer sections are unit-free.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "gig/as_game.hpp"
#include "gig/calib.hpp"
#include "gig/errors.hpp"
#include "gig/io.hpp"
#include "gig/mjls.hpp"
#include "gig/outer.hpp"
#include "gig/sim.hpp"

namespace gig {

using Grid = std::vector<std::vector<double>>;

struct MarketConfig {
  double gamma = 0.02;
  double xi = 10.0;
  double A = 250000.0;
  double k = 10.0;
  std::vector<double> sigma{0.2253, 0.5305};
  int q_max = 10;
  double horizon_hours = 12.0;
  double dt_seconds = 15.0;
  double s0 = 90863.90;
  Grid rates_per_day{{0.0, 30.0}, {30.0, 0.0}};
  std::string calibration_file;  // overrides sigma and rates when set
  bool operator==(const MarketConfig&) const = default;
};

struct SimSection {
  std::size_t n_paths = 1000;
  std::size_t n_steps = 2880;
  bool predator = true;
  std::size_t initial_regime = 0;
  std::size_t export_paths = 0;  // per strategy, first paths by index
  bool operator==(const SimSection&) const = default;
};

struct MacroSection {
  bool enabled = false;
  int q = 1;
  std::size_t n_steps = 200;
  std::string mode = "affine";    // affine | quadratic
  std::string policy = "saddle";  // saddle | bang_bang
  Grid attack_per_day{{0.0, 10.0}, {10.0, 0.0}};
  Grid stabilize_per_day{{0.0, 10.0}, {10.0, 0.0}};
  double rho_f = 1.0;
  double rho_g = 1.0;
  bool flip_bangbang = false;
  bool clamp_efforts = false;
  bool operator==(const MacroSection&) const = default;
};

struct MMSection {
  std::size_t n_steps = 48;
  std::vector<double> xi_sweep{0.0, 5.0, 10.0, 20.0};
  std::vector<double> expansion_taus_years{0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125, 0.0009765625};
  MacroSection macro;
  bool operator==(const MMSection&) const = default;
};

struct LQRegimeConfig {
  Grid A{{0.0}}, B{{1.0}}, D, Sigma{{0.0}}, Q{{1.0}}, R{{1.0}}, S, QT{{0.0}};
  bool operator==(const LQRegimeConfig&) const = default;
};

struct LQSection {
  double horizon = 1.0;
  std::size_t n_steps = 1000;
  double blowup_bound = 1e8;
  std::vector<LQRegimeConfig> regimes{LQRegimeConfig{}};
  bool operator==(const LQSection&) const = default;
};

struct PerturbationEntry {
  std::size_t from = 0, to = 0;
  Grid matrix;
  bool operator==(const PerturbationEntry&) const = default;
};

struct OuterSection {
  std::string mode = "passive";  // passive | affine | general
  Grid baseline_rates{{0.0}};
  Grid attack, stabilize;
  std::vector<PerturbationEntry> perturbation;
  double rho_f = 1.0;
  double rho_g = 1.0;
  std::vector<double> terminal_k;
  bool operator==(const OuterSection&) const = default;
};

struct CalibSection {
  std::string input;
  std::size_t window = 48;
  double annualization = 365.0 * 48.0;
  std::size_t n_regimes = 2;
  std::string estimator = "count";  // count | embedded
  bool operator==(const CalibSection&) const = default;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 20240917;
  static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed is read as size_t");
  std::string out = "out";
  MarketConfig market;
  SimSection sim;
  MMSection mm;
  LQSection lq;
  OuterSection outer;
  CalibSection calibrate;
  std::filesystem::path base_dir;  // directory of the config file; not serialized
  bool operator==(const RunConfig& o) const {
    return schema_version == o.schema_version && seed == o.seed && out == o.out && market == o.market &&
           sim == o.sim && mm == o.mm && lq == o.lq && outer == o.outer && calibrate == o.calibrate;
  }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument(where() + "expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InvalidArgument(child(it.key()) + ": unknown key");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, child(key), out);
  }

  template <class F>
  void section(const char* key, F&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    Reader r(*it, child(key));
    fn(r);
  }

  /// Array of objects under `key`; fn(reader) per element.
  template <class F>
  void each(const char* key, F&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw InvalidArgument(child(key) + ": expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      Reader e((*it)[i], child(key) + "[" + std::to_string(i) + "]");
      fn(e);
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return (path_.empty() ? std::string("config") : path_) + ": "; }

  static void read(const Json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw InvalidArgument(p + ": expected a number");
    out = v.get<double>();
  }
  static void read(const Json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw InvalidArgument(p + ": expected an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, const std::string& p, std::size_t& out) {
    if (!v.is_number_unsigned()) throw InvalidArgument(p + ": expected a nonnegative integer");
    out = v.get<std::size_t>();
  }
  static void read(const Json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw InvalidArgument(p + ": expected true or false");
    out = v.get<bool>();
  }
  static void read(const Json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw InvalidArgument(p + ": expected a string");
    out = v.get<std::string>();
  }
  static void read(const Json& v, const std::string& p, std::vector<double>& out) {
    if (!v.is_array()) throw InvalidArgument(p + ": expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      double x;
      read(v[i], p + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }
  static void read(const Json& v, const std::string& p, Grid& out) {
    if (!v.is_array()) throw InvalidArgument(p + ": expected a matrix (array of rows)");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::vector<double> row;
      read(v[i], p + "[" + std::to_string(i) + "]", row);
      if (!out.empty() && row.size() != out.front().size()) throw InvalidArgument(p + ": ragged matrix");
      out.push_back(row);
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const Json& root) {
  RunConfig c;
  detail::Reader r(root, "");
  r.get("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw InvalidArgument("schema_version: unsupported value " + std::to_string(c.schema_version));
  r.get("seed", c.seed);
  r.get("out", c.out);
  r.section("market", [&](detail::Reader& s) {
    auto& m = c.market;
    s.get("gamma", m.gamma);
    s.get("xi", m.xi);
    s.get("A", m.A);
    s.get("k", m.k);
    s.get("sigma", m.sigma);
    s.get("q_max", m.q_max);
    s.get("horizon_hours", m.horizon_hours);
    s.get("dt_seconds", m.dt_seconds);
    s.get("s0", m.s0);
    s.get("rates_per_day", m.rates_per_day);
    s.get("calibration_file", m.calibration_file);
  });
  r.section("sim", [&](detail::Reader& s) {
    s.get("n_paths", c.sim.n_paths);
    s.get("n_steps", c.sim.n_steps);
    s.get("predator", c.sim.predator);
    s.get("initial_regime", c.sim.initial_regime);
    s.get("export_paths", c.sim.export_paths);
  });
  r.section("mm", [&](detail::Reader& s) {
    s.get("n_steps", c.mm.n_steps);
    s.get("xi_sweep", c.mm.xi_sweep);
    s.get("expansion_taus_years", c.mm.expansion_taus_years);
    s.section("macro", [&](detail::Reader& m) {
      auto& x = c.mm.macro;
      m.get("enabled", x.enabled);
      m.get("q", x.q);
      m.get("n_steps", x.n_steps);
      m.get("mode", x.mode);
      m.get("policy", x.policy);
      m.get("attack_per_day", x.attack_per_day);
      m.get("stabilize_per_day", x.stabilize_per_day);
      m.get("rho_f", x.rho_f);
      m.get("rho_g", x.rho_g);
      m.get("flip_bangbang", x.flip_bangbang);
      m.get("clamp_efforts", x.clamp_efforts);
    });
  });
  r.section("lq", [&](detail::Reader& s) {
    s.get("horizon", c.lq.horizon);
    s.get("n_steps", c.lq.n_steps);
    s.get("blowup_bound", c.lq.blowup_bound);
    if (s.has("regimes")) c.lq.regimes.clear();
    s.each("regimes", [&](detail::Reader& e) {
      LQRegimeConfig g;
      e.get("A", g.A);
      e.get("B", g.B);
      e.get("D", g.D);
      e.get("Sigma", g.Sigma);
      e.get("Q", g.Q);
      e.get("R", g.R);
      e.get("S", g.S);
      e.get("QT", g.QT);
      c.lq.regimes.push_back(g);
    });
    if (c.lq.regimes.empty()) throw InvalidArgument("lq.regimes: must not be empty");
  });
  r.section("outer", [&](detail::Reader& s) {
    auto& o = c.outer;
    s.get("mode", o.mode);
    s.get("baseline_rates", o.baseline_rates);
    s.get("attack", o.attack);
    s.get("stabilize", o.stabilize);
    s.get("rho_f", o.rho_f);
    s.get("rho_g", o.rho_g);
    s.get("terminal_k", o.terminal_k);
    s.each("perturbation", [&](detail::Reader& er) {
      PerturbationEntry e;
      er.get("from", e.from);
      er.get("to", e.to);
      er.get("matrix", e.matrix);
      o.perturbation.push_back(e);
    });
  });
  r.section("calibrate", [&](detail::Reader& s) {
    s.get("input", c.calibrate.input);
    s.get("window", c.calibrate.window);
    s.get("annualization", c.calibrate.annualization);
    s.get("n_regimes", c.calibrate.n_regimes);
    s.get("estimator", c.calibrate.estimator);
  });
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("config: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config_text(ss.str());
  c.base_dir = path.parent_path();
  return c;
}

// ---------------------------------------------------------------------------
// Serialization

inline Json grid_json(const Grid& g) {
  Json rows = Json::array();
  for (const auto& r : g) rows.push_back(r);
  return rows;
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["out"] = c.out;
  const auto& m = c.market;
  j["market"] = {{"gamma", m.gamma},
                 {"xi", m.xi},
                 {"A", m.A},
                 {"k", m.k},
                 {"sigma", m.sigma},
                 {"q_max", m.q_max},
                 {"horizon_hours", m.horizon_hours},
                 {"dt_seconds", m.dt_seconds},
                 {"s0", m.s0},
                 {"rates_per_day", grid_json(m.rates_per_day)},
                 {"calibration_file", m.calibration_file}};
  j["sim"] = {{"n_paths", c.sim.n_paths},
              {"n_steps", c.sim.n_steps},
              {"predator", c.sim.predator},
              {"initial_regime", c.sim.initial_regime},
              {"export_paths", c.sim.export_paths}};
  const auto& x = c.mm.macro;
  j["mm"] = {{"n_steps", c.mm.n_steps},
             {"xi_sweep", c.mm.xi_sweep},
             {"expansion_taus_years", c.mm.expansion_taus_years},
             {"macro",
              {{"enabled", x.enabled},
               {"q", x.q},
               {"n_steps", x.n_steps},
               {"mode", x.mode},
               {"policy", x.policy},
               {"attack_per_day", grid_json(x.attack_per_day)},
               {"stabilize_per_day", grid_json(x.stabilize_per_day)},
               {"rho_f", x.rho_f},
               {"rho_g", x.rho_g},
               {"flip_bangbang", x.flip_bangbang},
               {"clamp_efforts", x.clamp_efforts}}}};
  Json regimes = Json::array();
  for (const auto& g : c.lq.regimes)
    regimes.push_back({{"A", grid_json(g.A)},
                       {"B", grid_json(g.B)},
                       {"D", grid_json(g.D)},
                       {"Sigma", grid_json(g.Sigma)},
                       {"Q", grid_json(g.Q)},
                       {"R", grid_json(g.R)},
                       {"S", grid_json(g.S)},
                       {"QT", grid_json(g.QT)}});
  j["lq"] = {{"horizon", c.lq.horizon},
             {"n_steps", c.lq.n_steps},
             {"blowup_bound", c.lq.blowup_bound},
             {"regimes", regimes}};
  Json pert = Json::array();
  for (const auto& e : c.outer.perturbation) pert.push_back({{"from", e.from}, {"to", e.to}, {"matrix", grid_json(e.matrix)}});
  j["outer"] = {{"mode", c.outer.mode},
                {"baseline_rates", grid_json(c.outer.baseline_rates)},
                {"attack", grid_json(c.outer.attack)},
                {"stabilize", grid_json(c.outer.stabilize)},
                {"perturbation", pert},
                {"rho_f", c.outer.rho_f},
                {"rho_g", c.outer.rho_g},
                {"terminal_k", c.outer.terminal_k}};
  j["calibrate"] = {{"input", c.calibrate.input},
                    {"window", c.calibrate.window},
                    {"annualization", c.calibrate.annualization},
                    {"n_regimes", c.calibrate.n_regimes},
                    {"estimator", c.calibrate.estimator}};
  return j;
}

// ---------------------------------------------------------------------------
// Conversion to model objects. Errors name the config field.

inline Matrix to_matrix(const Grid& g, const std::string& field) {
  if (g.empty()) return Matrix(0, 0);
  const auto cols = g.front().size();
  Matrix m(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].size() != cols) throw InvalidArgument(field + ": ragged matrix");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[i][j];
  }
  return m;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::filesystem::path resolve_path(const RunConfig& c, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

/// Calibration JSON as written by `calibrate`: sigma and generator_per_day.
inline void apply_calibration(const Json& cal, ASModel& m) {
  try {
    const auto sig = cal.at("sigma").get<std::vector<double>>();
    const auto gen = cal.at("generator_per_day").get<Grid>();
    m.sigma = to_vector(sig);
    m.rates = to_matrix(gen, "calibration.generator_per_day") * 365.0;
    m.rates.diagonal().setZero();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("market.calibration_file: ") + e.what());
  }
}

inline ASModel to_model(const RunConfig& c) {
  const auto& mc = c.market;
  ASModel m;
  m.gamma = mc.gamma;
  m.xi = mc.xi;
  m.A = mc.A;
  m.k = mc.k;
  m.sigma = to_vector(mc.sigma);
  m.q_max = mc.q_max;
  m.horizon = mc.horizon_hours / (365.0 * 24.0);
  m.dt = mc.dt_seconds / (365.0 * 86400.0);
  m.s0 = mc.s0;
  m.rates = to_matrix(mc.rates_per_day, "market.rates_per_day") * 365.0;
  if (!mc.calibration_file.empty()) {
    const auto path = resolve_path(c, mc.calibration_file);
    std::ifstream in(path);
    if (!in) throw InvalidArgument("market.calibration_file: cannot open " + path.string());
    Json cal;
    try {
      in >> cal;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("market.calibration_file: " + std::string(e.what()));
    }
    apply_calibration(cal, m);
  }
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("market: ") + e.what());
  }
  return m;
}

inline SimConfig to_sim_config(const RunConfig& c) {
  SimConfig s;
  s.model = to_model(c);
  s.n_paths = c.sim.n_paths;
  s.n_steps = c.sim.n_steps;
  s.seed = c.seed;
  s.predator = c.sim.predator;
  s.initial_regime = c.sim.initial_regime;
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("sim: ") + e.what() + " (market.dt_seconds * sim.n_steps vs market.horizon_hours)");
  }
  return s;
}

inline RegimeLQModel to_lq_model(const RunConfig& c) {
  RegimeLQModel model;
  for (std::size_t i = 0; i < c.lq.regimes.size(); ++i) {
    const auto& g = c.lq.regimes[i];
    const std::string p = "lq.regimes[" + std::to_string(i) + "].";
    RegimeLQ r;
    r.A = to_matrix(g.A, p + "A");
    const auto n = r.A.rows();
    r.B = to_matrix(g.B, p + "B");
    r.D = g.D.empty() ? Matrix(n, 0) : to_matrix(g.D, p + "D");
    r.Sigma = g.Sigma.empty() ? Matrix::Zero(n, n) : to_matrix(g.Sigma, p + "Sigma");
    r.Q = to_matrix(g.Q, p + "Q");
    r.R = to_matrix(g.R, p + "R");
    r.S = to_matrix(g.S, p + "S");
    r.QT = to_matrix(g.QT, p + "QT");
    model.regimes.push_back(r);
  }
  model.baseline_rates = to_matrix(c.outer.baseline_rates, "outer.baseline_rates");
  try {
    model.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("lq: ") + e.what());
  }
  if (!(c.lq.horizon > 0.0)) throw InvalidArgument("lq.horizon: must be positive");
  if (c.lq.n_steps < 1) throw InvalidArgument("lq.n_steps: must be >= 1");
  if (!(c.lq.blowup_bound > 0.0)) throw InvalidArgument("lq.blowup_bound: must be positive");
  return model;
}

inline OuterGameSpec to_outer_spec(const RunConfig& c) {
  const auto& o = c.outer;
  const Matrix base = to_matrix(o.baseline_rates, "outer.baseline_rates");
  OuterGameSpec spec;
  if (o.mode == "passive") {
    spec = OuterGameSpec::passive(base);
  } else if (o.mode == "affine") {
    spec = OuterGameSpec::affine(base, to_matrix(o.attack, "outer.attack"), to_matrix(o.stabilize, "outer.stabilize"));
  } else if (o.mode == "general") {
    spec.baseline_rates = base;
    const auto n = static_cast<std::size_t>(base.rows());
    spec.perturbation.assign(n, std::vector<Matrix>(n, Matrix()));
    for (std::size_t e = 0; e < o.perturbation.size(); ++e) {
      const auto& p = o.perturbation[e];
      const std::string field = "outer.perturbation[" + std::to_string(e) + "]";
      if (p.from >= n || p.to >= n || p.from == p.to) throw InvalidArgument(field + ": bad (from, to)");
      spec.perturbation[p.from][p.to] = to_matrix(p.matrix, field + ".matrix");
    }
  } else {
    throw InvalidArgument("outer.mode: expected passive, affine or general");
  }
  spec.rho_f = o.rho_f;
  spec.rho_g = o.rho_g;
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("outer: ") + e.what());
  }
  return spec;
}

inline CalibOptions to_calib_options(const RunConfig& c) {
  CalibOptions o;
  o.window = c.calibrate.window;
  o.annualization = c.calibrate.annualization;
  o.n_regimes = c.calibrate.n_regimes;
  if (c.calibrate.estimator == "count") {
    o.estimator = RateEstimator::count;
  } else if (c.calibrate.estimator == "embedded") {
    o.estimator = RateEstimator::embedded;
  } else {
    throw InvalidArgument("calibrate.estimator: expected count or embedded");
  }
  try {
    o.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("calibrate: ") + e.what());
  }
  return o;
}

inline MacroOptions to_macro_options(const RunConfig& c) {
  const auto& x = c.mm.macro;
  MacroOptions o;
  if (x.mode == "affine") {
    o.mode = MacroMode::affine;
  } else if (x.mode == "quadratic") {
    o.mode = MacroMode::quadratic;
  } else {
    throw InvalidArgument("mm.macro.mode: expected affine or quadratic");
  }
  if (x.policy == "saddle") {
    o.affine_policy = AffinePolicy::saddle;
  } else if (x.policy == "bang_bang") {
    o.affine_policy = AffinePolicy::bang_bang;
  } else {
    throw InvalidArgument("mm.macro.policy: expected saddle or bang_bang");
  }
  o.flip_bangbang = x.flip_bangbang;
  o.clamp_efforts = x.clamp_efforts;
  return o;
}

/// Macro spec in model units (per year).
inline OuterGameSpec to_macro_spec(const RunConfig& c, const ASModel& m) {
  const auto& x = c.mm.macro;
  auto spec = OuterGameSpec::affine(m.rates, to_matrix(x.attack_per_day, "mm.macro.attack_per_day") * 365.0,
                                    to_matrix(x.stabilize_per_day, "mm.macro.stabilize_per_day") * 365.0);
  spec.rho_f = x.rho_f;
  spec.rho_g = x.rho_g;
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("mm.macro: ") + e.what());
  }
  if (std::abs(x.q) > m.q_max) throw InvalidArgument("mm.macro.q: exceeds market.q_max");
  if (x.n_steps < 1) throw InvalidArgument("mm.macro.n_steps: must be >= 1");
  return spec;
}

}  // namespace gig
