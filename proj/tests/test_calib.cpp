#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gig/calib.hpp"

using gig::Matrix;

namespace {

// Best 2-cluster cost over all threshold splits of the sorted data.
double threshold_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t cut = 1; cut < v.size(); ++cut) {
    double c = 0.0;
    for (auto [a, b] : {std::pair{std::size_t{0}, cut}, std::pair{cut, v.size()}}) {
      double m = 0.0;
      for (std::size_t i = a; i < b; ++i) m += v[i];
      m /= static_cast<double>(b - a);
      for (std::size_t i = a; i < b; ++i) c += (v[i] - m) * (v[i] - m);
    }
    best = std::min(best, c);
  }
  return best;
}

std::string bars_csv(const std::vector<double>& close, std::int64_t start = 1700000000, std::int64_t step = 1800) {
  std::ostringstream s;
  s << "timestamp,open,high,low,close,volume\n";
  for (std::size_t t = 0; t < close.size(); ++t)
    s << start + static_cast<std::int64_t>(t) * step << ',' << close[t] << ',' << close[t] << ',' << close[t] << ','
      << close[t] << ",1\n";
  return s.str();
}

}  // namespace

TEST(Timestamp, Formats) {
  EXPECT_EQ(*gig::parse_timestamp("0"), 0);
  EXPECT_EQ(*gig::parse_timestamp("1700000000"), 1700000000);
  EXPECT_EQ(*gig::parse_timestamp("1970-01-01T00:00:00Z"), 0);
  EXPECT_EQ(*gig::parse_timestamp("2024-02-29T12:30:00Z"), 1709209800);
  EXPECT_EQ(*gig::parse_timestamp("2024-02-29T14:30:00+02:00"), 1709209800);
  EXPECT_EQ(*gig::parse_timestamp("2024-02-29T12:30:00.250Z"), 1709209800);
  EXPECT_FALSE(gig::parse_timestamp("2024-02-29"));
  EXPECT_FALSE(gig::parse_timestamp("yesterday"));
  EXPECT_FALSE(gig::parse_timestamp("2024-02-29T12:30:00"));
}

TEST(OhlcvCsv, ParsesAndReportsErrors) {
  std::istringstream ok("close,timestamp,open,high,low,volume,extra\n"
                        "10,2024-01-01T00:00:00Z,9,11,8,5,x\n"
                        "11,2024-01-01T00:30:00Z,10,12,9,6,y\n");
  const auto s = gig::parse_ohlcv_csv(ok);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.close[1], 11.0);
  EXPECT_EQ(s.bar_seconds(), 1800);

  std::istringstream missing("timestamp,open,high,low,volume\n1,1,1,1,1\n");
  try {
    gig::parse_ohlcv_csv(missing);
    FAIL();
  } catch (const gig::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("'close'"), std::string::npos);
  }
  std::istringstream bad("timestamp,open,high,low,close,volume\n1,1,1,1,1,1\n2,1,1,1,abc,1\n");
  try {
    gig::parse_ohlcv_csv(bad);
    FAIL();
  } catch (const gig::InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::istringstream neg("timestamp,open,high,low,close,volume\n1,1,1,1,-1,1\n");
  EXPECT_THROW(gig::parse_ohlcv_csv(neg), gig::InvalidArgument);
  std::istringstream gap("timestamp,open,high,low,close,volume\n0,1,1,1,1,1\n10,1,1,1,1,1\n30,1,1,1,1,1\n");
  EXPECT_THROW(gig::parse_ohlcv_csv(gap), gig::InvalidArgument);
}

TEST(RollingVolatility, Constant) {
  const auto v = gig::rolling_volatility(std::vector<double>(20, 5.0), 4, 100.0);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_FALSE(v[t]);
  for (std::size_t t = 4; t < 20; ++t) EXPECT_EQ(*v[t], 0.0);
}

TEST(RollingVolatility, AlternatingClosedForm) {
  const double r = 0.01;
  std::vector<double> close{100.0};
  for (int t = 1; t < 40; ++t) close.push_back(close.back() * std::exp(t % 2 ? r : -r));
  for (std::size_t w : {2u, 4u, 10u}) {
    const auto v = gig::rolling_volatility(close, w, 17520.0);
    const double want = std::sqrt(17520.0) * r * std::sqrt(double(w) / (w - 1.0));
    for (std::size_t t = w; t < close.size(); ++t) EXPECT_NEAR(*v[t], want, 1e-12 * want);
  }
}

TEST(RollingVolatility, FullSampleWindow) {
  const std::vector<double> close{10, 10.5, 10.2, 11, 10.7, 10.9, 11.4};
  const std::size_t w = close.size() - 1;
  const auto v = gig::rolling_volatility(close, w, 9.0);
  std::size_t defined = 0;
  for (const auto& x : v) defined += x.has_value();
  EXPECT_EQ(defined, 1u);
  std::vector<double> r;
  for (std::size_t t = 1; t < close.size(); ++t) r.push_back(std::log(close[t] / close[t - 1]));
  double m = 0;
  for (double x : r) m += x;
  m /= r.size();
  double ss = 0;
  for (double x : r) ss += (x - m) * (x - m);
  EXPECT_NEAR(*v.back(), 3.0 * std::sqrt(ss / (r.size() - 1)), 1e-14);
  EXPECT_THROW(gig::rolling_volatility(close, close.size(), 1.0), gig::InvalidArgument);
  EXPECT_THROW(gig::rolling_volatility({1, 2, -1, 3}, 2, 1.0), gig::InvalidArgument);
}

TEST(KMeans, Examples) {
  auto a = gig::kmeans_1d({0, 0, 10, 10}, 2);
  EXPECT_EQ(a.centers, (std::vector<double>{0, 10}));
  EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 1, 1}));
  auto b = gig::kmeans_1d({3, 1, 5}, 1);
  EXPECT_DOUBLE_EQ(b.centers[0], 3.0);
  auto c = gig::kmeans_1d({1, 2, 8, 9, 10}, 2);
  EXPECT_DOUBLE_EQ(c.centers[0], 1.5);
  EXPECT_DOUBLE_EQ(c.centers[1], 9.0);
  EXPECT_NEAR(gig::kmeans_cost({1, 2, 8, 9, 10}, c), threshold_oracle({1, 2, 8, 9, 10}), 1e-12);
  EXPECT_THROW(gig::kmeans_1d({4, 4, 4}, 2), gig::InvalidArgument);
  EXPECT_THROW(gig::kmeans_1d({1, 2}, 0), gig::InvalidArgument);
}

TEST(KMeans, MatchesThresholdOracleOnMixtures) {
  gig::Xoshiro256 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    const double gap = 2.0 + 3.0 * rng.uniform();
    for (int i = 0; i < 60; ++i) v.push_back((i % 3 == 0 ? gap : 0.0) + rng.uniform());
    const auto r = gig::kmeans_1d(v, 2);
    EXPECT_NEAR(gig::kmeans_cost(v, r), threshold_oracle(v), 1e-9);
    EXPECT_LT(r.centers[0], r.centers[1]);
  }
}

TEST(KMeans, TiesFallBackToDistinctQuantiles) {
  const auto r = gig::kmeans_1d({1, 1, 1, 1, 1, 1, 1, 2, 9}, 3);
  EXPECT_EQ(r.centers, (std::vector<double>{1, 2, 9}));
}

TEST(EstimateGenerator, Examples) {
  const auto flat = gig::estimate_generator(std::vector<int>(50, 0), 1800, 2);
  EXPECT_EQ(flat.generator.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(flat.warnings.size(), 1u);

  std::vector<int> alt;
  for (int t = 0; t < 101; ++t) alt.push_back(t % 2);
  const auto a = gig::estimate_generator(alt, 1800, 2);
  EXPECT_EQ(a.generator(0, 1), 48.0);
  EXPECT_EQ(a.generator(1, 0), 48.0);
  EXPECT_EQ(a.generator(0, 0), -48.0);
  std::vector<int> two;
  for (int t = 0; t < 300; ++t) two.push_back((t / 3 + t / 7) % 2);
  const auto b = gig::estimate_generator(two, 1800, 2);
  EXPECT_EQ(b.generator(0, 0) + b.generator(0, 1), 0.0);
  EXPECT_EQ(b.generator(1, 0) + b.generator(1, 1), 0.0);
  EXPECT_EQ(gig::rate_per_day_from_holding_minutes(48.0), 30.0);
  EXPECT_EQ(gig::rate_per_day_from_holding_minutes(30.0), 48.0);
}

TEST(EstimateGenerator, RowsSumToZero) {
  gig::Xoshiro256 rng(11);
  std::vector<int> labels;
  for (int t = 0; t < 500; ++t) labels.push_back(static_cast<int>(rng.uniform() * 3));
  const auto e = gig::estimate_generator(labels, 900, 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(e.generator.row(i).sum(), 0.0, 1e-13 * e.generator.cwiseAbs().maxCoeff());
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_GE(e.generator(i, j), 0.0);
  }
}

TEST(EstimateGenerator, EmbeddedInvertsExactTransitionMatrix) {
  // Labels with empirical one-bar matrix exactly [[3/4,1/4],[1/4,3/4]].
  std::vector<int> labels{0};
  const int pattern[] = {0, 0, 0, 1, 1, 1, 1, 0};
  for (int rep = 0; rep < 50; ++rep)
    for (int x : pattern) labels.push_back(x);
  labels.pop_back();
  const auto e = gig::estimate_generator(labels, 86400.0, 2, gig::RateEstimator::embedded);
  const double c = -std::log(0.5) / 2.0;
  const auto counts = e.transitions;
  const double p01 = counts(0, 1) / e.bars_in_state(0);
  const double p10 = counts(1, 0) / e.bars_in_state(1);
  const double want01 = -std::log(1 - p01 - p10) / (p01 + p10) * p01;
  EXPECT_NEAR(e.generator(0, 1), want01, 1e-12);
  (void)c;
  Matrix q = e.generator;
  const Matrix p = gig::matrix_exponential(q);
  EXPECT_NEAR(p(0, 1), p01, 1e-12);
  EXPECT_NEAR(p(1, 0), p10, 1e-12);
}

TEST(EstimateGenerator, CtmcRoundTrip) {
  const Matrix rates = (Matrix(2, 2) << 0, 30, 30, 0).finished();
  const auto labels = gig::simulate_ctmc_bars(rates, 1.0 / 48.0, 10000, 2024);
  const auto emb = gig::estimate_generator(labels, 1800, 2, gig::RateEstimator::embedded);
  EXPECT_NEAR(emb.generator(0, 1), 30.0, 0.15 * 30.0);
  EXPECT_NEAR(emb.generator(1, 0), 30.0, 0.15 * 30.0);
  // The count estimator misses round trips inside a bar: its mean is
  // 48 (1 - exp(-2*30/48))/2 per day.
  const auto cnt = gig::estimate_generator(labels, 1800, 2);
  const double expected = 48.0 * (1.0 - std::exp(-60.0 / 48.0)) / 2.0;
  EXPECT_NEAR(cnt.generator(0, 1), expected, 0.1 * expected);
}

TEST(EstimateGenerator, CtmcHoldingTimes) {
  // Fine bars: the count estimator is consistent.
  const Matrix rates = (Matrix(2, 2) << 0, 10, 40, 0).finished();
  const auto labels = gig::simulate_ctmc_bars(rates, 1.0 / 2880.0, 200000, 5);
  const auto cnt = gig::estimate_generator(labels, 30, 2);
  EXPECT_NEAR(cnt.generator(0, 1), 10.0, 1.5);
  EXPECT_NEAR(cnt.generator(1, 0), 40.0, 6.0);
}

TEST(Calibrate, TwoRegimeSynthetic) {
  const Matrix rates = (Matrix(2, 2) << 0, 0.5, 0.5, 0).finished();
  const auto regimes = gig::simulate_ctmc_bars(rates, 1.0 / 48.0, 3000, 9);
  gig::Xoshiro256 rng(10);
  std::vector<double> close{100.0};
  for (std::size_t t = 1; t < regimes.size(); ++t) {
    const double sd = regimes[t] == 0 ? 0.002 : 0.01;
    const double z = std::sqrt(-2 * std::log(1 - rng.uniform())) * std::cos(2 * M_PI * rng.uniform());
    close.push_back(close.back() * std::exp(sd * z));
  }
  std::istringstream in(bars_csv(close));
  gig::CalibOptions opt;
  opt.window = 24;
  const auto cal = gig::calibrate(gig::parse_ohlcv_csv(in), opt);
  ASSERT_EQ(cal.sigma.size(), 2);
  EXPECT_LT(cal.sigma(0), cal.sigma(1));
  EXPECT_GT(cal.sigma(1) / cal.sigma(0), 2.0);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(cal.generator.row(i).sum(), 0.0);
    EXPECT_GT(cal.generator(i, 1 - i), 0.0);
  }
  for (std::size_t t = 0; t < opt.window; ++t) EXPECT_EQ(cal.labels[t], -1);
  EXPECT_EQ(cal.run_lengths.size(), 2u);
}

TEST(Calibrate, ConstantPricesRejected) {
  std::istringstream in(bars_csv(std::vector<double>(100, 50.0)));
  EXPECT_THROW(gig::calibrate(gig::parse_ohlcv_csv(in), gig::CalibOptions{}), gig::InvalidArgument);
}

TEST(Calibrate, LabelPermutationInvariance) {
  const std::vector<double> v{0.1, 0.5, 0.12, 0.55, 0.11, 0.6, 0.09};
  std::vector<double> reversed(v.rbegin(), v.rend());
  const auto a = gig::kmeans_1d(v, 2);
  const auto b = gig::kmeans_1d(reversed, 2);
  EXPECT_EQ(a.centers, b.centers);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(a.labels[i], b.labels[v.size() - 1 - i]);
}
