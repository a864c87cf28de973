#pragma once

// Regime calibration from OHLCV bars: rolling close-to-close volatility,
// 1-D k-means on it, and a transition generator from the labels.
//
// Timestamps: a field that parses completely as an integer is epoch seconds;
// anything else must be RFC-3339 (YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gig/errors.hpp"
#include "gig/numkit.hpp"
#include "gig/sim.hpp"

namespace gig {

struct OhlcvSeries {
  std::vector<std::int64_t> timestamp;  // epoch seconds
  std::vector<double> open, high, low, close, volume;

  std::size_t size() const { return close.size(); }
  /// Bar interval in seconds; validate() guarantees it is constant.
  std::int64_t bar_seconds() const { return size() > 1 ? timestamp[1] - timestamp[0] : 0; }
  void validate() const;
};

inline void OhlcvSeries::validate() const {
  const auto n = size();
  if (timestamp.size() != n || open.size() != n || high.size() != n || low.size() != n || volume.size() != n)
    throw InvalidArgument("OhlcvSeries: column lengths differ");
  for (std::size_t t = 0; t < n; ++t) {
    if (!(open[t] > 0.0 && high[t] > 0.0 && low[t] > 0.0 && close[t] > 0.0))
      throw InvalidArgument("OhlcvSeries: non-positive price at bar " + std::to_string(t));
    if (t > 0 && timestamp[t] <= timestamp[t - 1])
      throw InvalidArgument("OhlcvSeries: timestamps not strictly increasing at bar " + std::to_string(t));
    if (t > 1 && timestamp[t] - timestamp[t - 1] != timestamp[1] - timestamp[0])
      throw InvalidArgument("OhlcvSeries: bar interval changes at bar " + std::to_string(t));
  }
}

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Epoch seconds from an integer or an RFC-3339 string; nullopt if neither.
inline std::optional<std::int64_t> parse_timestamp(const std::string& raw) {
  const std::string s = detail::trim(raw);
  if (s.empty()) return std::nullopt;
  {
    std::size_t pos = 0;
    try {
      const long long v = std::stoll(s, &pos);
      if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  int Y, M, D, h, m, sec;
  char t;
  int used = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &Y, &M, &D, &t, &h, &m, &sec, &used) != 7) return std::nullopt;
  if (t != 'T' && t != 't' && t != ' ') return std::nullopt;
  if (M < 1 || M > 12 || D < 1 || D > 31 || h > 23 || m > 59 || sec > 60) return std::nullopt;
  std::size_t p = static_cast<std::size_t>(used);
  if (p < s.size() && s[p] == '.') {
    ++p;
    while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p;
  }
  std::int64_t offset = 0;
  if (p < s.size() && (s[p] == 'Z' || s[p] == 'z')) {
    ++p;
  } else if (p < s.size() && (s[p] == '+' || s[p] == '-')) {
    int oh, om;
    if (p + 6 > s.size() || std::sscanf(s.c_str() + p + 1, "%2d:%2d", &oh, &om) != 2) return std::nullopt;
    offset = (s[p] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    p += 6;
  } else {
    return std::nullopt;
  }
  if (p != s.size()) return std::nullopt;
  const std::int64_t days = detail::days_from_civil(Y, static_cast<unsigned>(M), static_cast<unsigned>(D));
  return days * 86400 + h * 3600 + m * 60 + sec - offset;
}

/// Reads a CSV with header timestamp,open,high,low,close,volume (any column
/// order, extra columns ignored). Errors carry 1-based line numbers.
inline OhlcvSeries parse_ohlcv_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw InvalidArgument("ohlcv csv: empty input");
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string name = header[c];
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    col[name] = c;
  }
  const char* names[] = {"timestamp", "open", "high", "low", "close", "volume"};
  std::size_t idx[6];
  for (int k = 0; k < 6; ++k) {
    const auto it = col.find(names[k]);
    if (it == col.end()) throw InvalidArgument(std::string("ohlcv csv: missing column '") + names[k] + "'");
    idx[k] = it->second;
  }
  OhlcvSeries s;
  std::vector<double>* cols[] = {&s.open, &s.high, &s.low, &s.close, &s.volume};
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    auto where = [&](const char* what) {
      return "ohlcv csv line " + std::to_string(lineno) + ": " + what;
    };
    if (cells.size() < header.size()) throw InvalidArgument(where("too few fields"));
    const auto ts = parse_timestamp(cells[idx[0]]);
    if (!ts) throw InvalidArgument(where("bad timestamp '") + cells[idx[0]] + "'");
    s.timestamp.push_back(*ts);
    for (int k = 1; k < 6; ++k) {
      const std::string& cell = cells[idx[k]];
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != cell.size() || !std::isfinite(v))
        throw InvalidArgument(where("bad ") + names[k] + " value '" + cell + "'");
      cols[k - 1]->push_back(v);
    }
    const std::size_t t = s.size() - 1;
    if (!(s.open[t] > 0 && s.high[t] > 0 && s.low[t] > 0 && s.close[t] > 0))
      throw InvalidArgument(where("non-positive price"));
    if (t > 0 && s.timestamp[t] <= s.timestamp[t - 1]) throw InvalidArgument(where("timestamp not increasing"));
    if (t > 1 && s.timestamp[t] - s.timestamp[t - 1] != s.timestamp[1] - s.timestamp[0])
      throw InvalidArgument(where("bar interval differs from the first"));
  }
  return s;
}

inline OhlcvSeries read_ohlcv_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return parse_ohlcv_csv(in);
}

/// Sample sd of the `window` most recent log close-to-close returns, times
/// sqrt(annualization). Bar t needs returns 1..t, so bars 0..window-1 are absent.
inline std::vector<std::optional<double>> rolling_volatility(const std::vector<double>& close, std::size_t window,
                                                             double annualization) {
  if (window < 2) throw InvalidArgument("rolling_volatility: window must be >= 2");
  if (close.size() <= window) throw InvalidArgument("rolling_volatility: series must be longer than the window");
  if (!(annualization > 0.0)) throw InvalidArgument("rolling_volatility: annualization must be positive");
  for (double c : close)
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("rolling_volatility: non-positive price");
  std::vector<double> r(close.size(), 0.0);
  for (std::size_t t = 1; t < close.size(); ++t) r[t] = std::log(close[t] / close[t - 1]);
  std::vector<std::optional<double>> out(close.size());
  const double scale = std::sqrt(annualization);
  for (std::size_t t = window; t < close.size(); ++t) {
    double mean = 0.0;
    for (std::size_t s = t + 1 - window; s <= t; ++s) mean += r[s];
    mean /= static_cast<double>(window);
    double ss = 0.0;
    for (std::size_t s = t + 1 - window; s <= t; ++s) ss += (r[s] - mean) * (r[s] - mean);
    out[t] = scale * std::sqrt(ss / static_cast<double>(window - 1));
  }
  return out;
}

struct KMeansResult {
  std::vector<double> centers;  // ascending
  std::vector<int> labels;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from centers at the (j + 1/2)/k quantiles of the data.
inline KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, std::size_t max_iter = 1000) {
  if (k < 1) throw InvalidArgument("kmeans_1d: k must be >= 1");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < k)
    throw InvalidArgument("kmeans_1d: " + std::to_string(distinct.size()) + " distinct values for k = " +
                          std::to_string(k));
  const auto n = sorted.size();
  KMeansResult res;
  res.centers.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    res.centers[j] = sorted[std::min(n - 1, static_cast<std::size_t>((static_cast<double>(j) + 0.5) * n / k))];
  if (std::adjacent_find(res.centers.begin(), res.centers.end()) != res.centers.end()) {
    // Heavy ties put two quantiles on one value; fall back to quantiles of the distinct values.
    const auto d = distinct.size();
    for (std::size_t j = 0; j < k; ++j)
      res.centers[j] = distinct[std::min(d - 1, static_cast<std::size_t>((static_cast<double>(j) + 0.5) * d / k))];
  }

  res.labels.assign(values.size(), -1);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    bool changed = false;
    for (std::size_t v = 0; v < values.size(); ++v) {
      int best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (std::abs(values[v] - res.centers[j]) < std::abs(values[v] - res.centers[static_cast<std::size_t>(best)]))
          best = static_cast<int>(j);
      if (best != res.labels[v]) {
        res.labels[v] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t v = 0; v < values.size(); ++v) {
      sum[static_cast<std::size_t>(res.labels[v])] += values[v];
      ++cnt[static_cast<std::size_t>(res.labels[v])];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (cnt[j] > 0) res.centers[j] = sum[j] / static_cast<double>(cnt[j]);
  }

  std::vector<std::size_t> order(k);
  for (std::size_t j = 0; j < k; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return res.centers[a] < res.centers[b]; });
  std::vector<int> rank(k);
  std::vector<double> centers(k);
  for (std::size_t r = 0; r < k; ++r) {
    rank[order[r]] = static_cast<int>(r);
    centers[r] = res.centers[order[r]];
  }
  res.centers = centers;
  for (auto& l : res.labels) l = rank[static_cast<std::size_t>(l)];
  return res;
}

/// Within-cluster sum of squares of a labeling.
inline double kmeans_cost(const std::vector<double>& values, const KMeansResult& r) {
  double c = 0.0;
  for (std::size_t v = 0; v < values.size(); ++v) {
    const double d = values[v] - r.centers[static_cast<std::size_t>(r.labels[v])];
    c += d * d;
  }
  return c;
}

enum class RateEstimator { count, embedded };

inline const char* to_string(RateEstimator e) { return e == RateEstimator::count ? "count" : "embedded"; }

struct GeneratorEstimate {
  Matrix generator;  // per day
  Matrix transitions;
  Vector bars_in_state;  // intervals starting in each state
  std::vector<std::string> warnings;
};

constexpr double kSecondsPerDay = 86400.0;

/// Rate in 1/day for a mean holding time in minutes.
inline double rate_per_day_from_holding_minutes(double minutes) { return 24.0 * 60.0 / minutes; }

/// count: mu_ij = (#i->j) / (time in i). embedded: log of the empirical
/// one-bar transition matrix over the bar interval. Negative entries labels
/// (warm-up) break the sequence and are skipped.
inline GeneratorEstimate estimate_generator(const std::vector<int>& labels, double bar_seconds, std::size_t n_regimes,
                                            RateEstimator method = RateEstimator::count) {
  if (labels.size() < 2) throw InvalidArgument("estimate_generator: need at least 2 bars");
  if (!(bar_seconds > 0.0)) throw InvalidArgument("estimate_generator: bar interval must be positive");
  if (n_regimes < 1) throw InvalidArgument("estimate_generator: need at least one regime");
  const auto N = static_cast<Eigen::Index>(n_regimes);
  GeneratorEstimate est;
  est.transitions = Matrix::Zero(N, N);
  est.bars_in_state = Vector::Zero(N);
  for (std::size_t t = 0; t + 1 < labels.size(); ++t) {
    const int a = labels[t], b = labels[t + 1];
    if (a < 0 || b < 0) continue;
    if (a >= N || b >= N) throw InvalidArgument("estimate_generator: label out of range");
    est.bars_in_state(a) += 1.0;
    est.transitions(a, b) += 1.0;
  }
  const double bar_days = bar_seconds / kSecondsPerDay;
  est.generator = Matrix::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    if (est.bars_in_state(i) == 0.0) est.warnings.push_back("regime " + std::to_string(i) + " never observed; zero row");

  if (method == RateEstimator::count) {
    for (Eigen::Index i = 0; i < N; ++i) {
      if (est.bars_in_state(i) == 0.0) continue;
      // Counts are integers, so the row sum below is exact before scaling.
      double moves = 0.0;
      for (Eigen::Index j = 0; j < N; ++j)
        if (j != i) moves += est.transitions(i, j);
      const double exposure = est.bars_in_state(i) * bar_seconds;
      for (Eigen::Index j = 0; j < N; ++j)
        if (j != i) est.generator(i, j) = est.transitions(i, j) * kSecondsPerDay / exposure;
      est.generator(i, i) = -moves * kSecondsPerDay / exposure;
    }
    return est;
  }

  Matrix P = Matrix::Identity(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    if (est.bars_in_state(i) > 0.0) P.row(i) = est.transitions.row(i) / est.bars_in_state(i);
  Eigen::EigenSolver<Matrix> es(P);
  if (es.info() != Eigen::Success) throw NumericalError("estimate_generator: eigensolver failed");
  const auto lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < N; ++i)
    if (std::abs(lam(i).imag()) > 1e-12 || !(lam(i).real() > 0.0))
      throw NumericalError("estimate_generator: transition matrix has no real logarithm (eigenvalue not positive real)");
  const Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::VectorXcd loglam(N);
  for (Eigen::Index i = 0; i < N; ++i) loglam(i) = std::log(lam(i).real());
  const Matrix L = (V * loglam.asDiagonal() * V.inverse()).real() / bar_days;
  for (Eigen::Index i = 0; i < N; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i) continue;
      double r = L(i, j);
      if (r < 0.0) {
        est.warnings.push_back("embedded estimate: negative rate (" + std::to_string(i) + "," + std::to_string(j) +
                               ") set to 0");
        r = 0.0;
      }
      est.generator(i, j) = r;
      sum += r;
    }
    est.generator(i, i) = -sum;
  }
  return est;
}

struct CalibOptions {
  std::size_t window = 48;
  double annualization = 365.0 * 48.0;
  std::size_t n_regimes = 2;
  RateEstimator estimator = RateEstimator::count;
  void validate() const {
    if (window < 2) throw InvalidArgument("calibrate.window must be >= 2");
    if (!(annualization > 0.0)) throw InvalidArgument("calibrate.annualization must be positive");
    if (n_regimes < 1) throw InvalidArgument("calibrate.n_regimes must be >= 1");
  }
};

struct RunStats {
  std::size_t runs = 0;
  double mean_bars = 0.0;
  std::size_t longest = 0;
};

struct RegimeCalibration {
  CalibOptions options;
  double bar_seconds = 0.0;
  Vector sigma;                 // per regime, annualized, ascending
  std::vector<int> labels;      // -1 on warm-up bars
  Matrix generator;             // per day, from options.estimator
  Matrix generator_count;       // per day
  Matrix generator_embedded;    // per day; empty if it does not exist
  std::vector<RunStats> run_lengths;
  std::vector<std::string> warnings;
};

inline std::vector<RunStats> label_runs(const std::vector<int>& labels, std::size_t n_regimes) {
  std::vector<RunStats> out(n_regimes);
  std::vector<double> total(n_regimes, 0.0);
  std::size_t t = 0;
  while (t < labels.size()) {
    if (labels[t] < 0) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < labels.size() && labels[e] == labels[t]) ++e;
    auto& r = out[static_cast<std::size_t>(labels[t])];
    ++r.runs;
    r.longest = std::max(r.longest, e - t);
    total[static_cast<std::size_t>(labels[t])] += static_cast<double>(e - t);
    t = e;
  }
  for (std::size_t i = 0; i < n_regimes; ++i) out[i].mean_bars = out[i].runs ? total[i] / static_cast<double>(out[i].runs) : 0.0;
  return out;
}

inline RegimeCalibration calibrate(const OhlcvSeries& series, const CalibOptions& opt) {
  series.validate();
  opt.validate();
  RegimeCalibration cal;
  cal.options = opt;
  cal.bar_seconds = static_cast<double>(series.bar_seconds());
  const auto vol = rolling_volatility(series.close, opt.window, opt.annualization);
  std::vector<double> values;
  std::vector<std::size_t> where;
  for (std::size_t t = 0; t < vol.size(); ++t)
    if (vol[t]) {
      values.push_back(*vol[t]);
      where.push_back(t);
    }
  const auto km = kmeans_1d(values, opt.n_regimes);
  cal.sigma = Eigen::Map<const Vector>(km.centers.data(), static_cast<Eigen::Index>(km.centers.size()));
  for (Eigen::Index i = 0; i < cal.sigma.size(); ++i)
    if (!(cal.sigma(i) > 0.0)) throw InvalidArgument("calibrate: a regime has zero volatility (flat prices?)");
  cal.labels.assign(series.size(), -1);
  for (std::size_t v = 0; v < where.size(); ++v) cal.labels[where[v]] = km.labels[v];

  const auto count = estimate_generator(cal.labels, cal.bar_seconds, opt.n_regimes, RateEstimator::count);
  cal.generator_count = count.generator;
  cal.warnings = count.warnings;
  try {
    const auto emb = estimate_generator(cal.labels, cal.bar_seconds, opt.n_regimes, RateEstimator::embedded);
    cal.generator_embedded = emb.generator;
    for (const auto& w : emb.warnings) cal.warnings.push_back(w);
  } catch (const NumericalError& e) {
    cal.warnings.push_back(e.what());
    if (opt.estimator == RateEstimator::embedded) throw;
  }
  cal.generator = opt.estimator == RateEstimator::count ? cal.generator_count : cal.generator_embedded;
  cal.run_lengths = label_runs(cal.labels, opt.n_regimes);
  return cal;
}

/// Regime path of a CTMC sampled at bar times 0, dt, 2 dt, ... (exact
/// exponential holding times; rates and dt in the same time unit).
inline std::vector<int> simulate_ctmc_bars(const Matrix& rates, double bar, std::size_t n_bars, std::uint64_t seed,
                                           int initial = 0) {
  const Matrix gen = [&] {
    Matrix g = rates;
    g.diagonal().setZero();
    g.diagonal() = -g.rowwise().sum();
    return g;
  }();
  Xoshiro256 rng(seed);
  std::vector<int> out;
  out.reserve(n_bars);
  int state = initial;
  double next_jump = 0.0;
  auto draw_holding = [&](int s) {
    const double out_rate = -gen(s, s);
    return out_rate > 0.0 ? -std::log(1.0 - rng.uniform()) / out_rate : std::numeric_limits<double>::infinity();
  };
  next_jump = draw_holding(state);
  for (std::size_t b = 0; b < n_bars; ++b) {
    const double t = static_cast<double>(b) * bar;
    while (next_jump <= t) {
      const double out_rate = -gen(state, state);
      double pick = rng.uniform() * out_rate;
      int target = state;
      for (Eigen::Index j = 0; j < gen.cols(); ++j) {
        if (j == state || gen(state, j) <= 0.0) continue;
        target = static_cast<int>(j);
        if (pick < gen(state, j)) break;
        pick -= gen(state, j);
      }
      state = target;
      next_jump += draw_holding(state);
    }
    out.push_back(state);
  }
  return out;
}

}  // namespace gig
