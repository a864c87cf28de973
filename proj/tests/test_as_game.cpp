#include <gtest/gtest.h>

#include <cmath>

#include "gig/as_game.hpp"
#include "oracles.hpp"

using gig::ASModel;
using gig::Matrix;
using gig::Vector;

namespace {

constexpr double kYear = 365.0;

oracle::InventoryGame as_oracle(const ASModel& m) {
  return {m.gamma, m.xi, m.A, m.k, {m.sigma.data(), m.sigma.data() + m.sigma.size()}, m.q_max, m.rates};
}

ASModel small_model() {
  ASModel m;
  m.A = 50.0;
  m.q_max = 3;
  m.rates = (Matrix(2, 2) << 0, 2, 3, 0).finished();
  m.sigma = (Vector(2) << 2.0, 5.0).finished();
  m.horizon = 1.0;
  return m;
}

}  // namespace

TEST(Predator, Drift) {
  ASModel m;
  EXPECT_EQ(gig::predator_drift(0, m), 0.0);
  EXPECT_NEAR(gig::predator_drift(5, m), -1.0, 1e-15);
  for (int q = -10; q <= 10; ++q) {
    EXPECT_EQ(gig::predator_drift(-q, m), -gig::predator_drift(q, m));
    EXPECT_EQ(gig::predator_drift(q, m), -m.xi * m.gamma * q);
  }
}

TEST(BuildGenerator, SingleRegimeHandAssembled) {
  ASModel m = small_model();
  m.sigma = Vector::Constant(1, 1e-300);
  m.xi = 0.0;
  m.q_max = 1;
  m.rates = Matrix::Zero(1, 1);
  const Matrix g = gig::build_generator(m, m.rates);
  const double lam = m.rent_rate();
  Matrix want(3, 3);
  want << 0, -lam, 0, -lam, 0, -lam, 0, -lam, 0;
  EXPECT_LT((g - want).cwiseAbs().maxCoeff(), 1e-12);
  // Row sums: minus the number of active sides times Lambda*.
  EXPECT_NEAR(g.row(0).sum(), -lam, 1e-12);
  EXPECT_NEAR(g.row(1).sum(), -2 * lam, 1e-12);
}

TEST(BuildGenerator, RegimeBlockStructure) {
  ASModel m = small_model();
  const Matrix g = gig::build_generator(m, m.rates);
  EXPECT_EQ(g.rows(), 14);
  // Regime coupling sits on the block diagonal offsets only.
  for (int q = -3; q <= 3; ++q) {
    EXPECT_EQ(g(m.index(0, q), m.index(1, q)), -2.0);
    EXPECT_EQ(g(m.index(1, q), m.index(0, q)), -3.0);
    const double risk = 0.5 * m.gamma * m.gamma * m.effective_variance(0) * q * q;
    EXPECT_NEAR(g(m.index(0, q), m.index(0, q)), risk + 2.0, 1e-14);
  }
  EXPECT_EQ(g(m.index(0, 0), m.index(1, 1)), 0.0);
}

TEST(SolveThetaExact, TrivialCases) {
  ASModel m = small_model();
  EXPECT_EQ(gig::solve_theta_exact(m, m.rates, 0.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveThetaExact, MatchesNonlinearOdeSmall) {
  const ASModel m = small_model();
  const Vector exact = gig::solve_theta_exact(m, m.rates, 0.3);
  const Vector ode = oracle::inventory_cost_rk4(as_oracle(m), 0.3, 4000);
  EXPECT_LT((exact - ode).cwiseAbs().maxCoeff() / ode.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SolveThetaExact, SegmentsCompose) {
  const ASModel m = small_model();
  const Vector whole = gig::solve_theta_exact(m, m.rates, 0.5);
  const Vector split = gig::solve_theta_exact(m, {{m.rates, 0.2}, {m.rates, 0.3}});
  EXPECT_LT((whole - split).cwiseAbs().maxCoeff(), 1e-10 * whole.cwiseAbs().maxCoeff());
  // Different rates per segment against the ODE oracle run segment by segment.
  const Matrix other = (Matrix(2, 2) << 0, 7, 1, 0).finished();
  const Vector piecewise = gig::solve_theta_exact(m, {{m.rates, 0.2}, {other, 0.3}});
  auto om = as_oracle(m);
  Vector th = oracle::inventory_cost_rk4(om, 0.2, 3000);
  om.rates = other;
  const double h = 0.3 / 3000;
  for (int s = 0; s < 3000; ++s) {
    const Vector k1 = oracle::inventory_cost_rhs(om, th);
    const Vector k2 = oracle::inventory_cost_rhs(om, th + h / 2 * k1);
    const Vector k3 = oracle::inventory_cost_rhs(om, th + h / 2 * k2);
    const Vector k4 = oracle::inventory_cost_rhs(om, th + h * k3);
    th += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  EXPECT_LT((piecewise - th).cwiseAbs().maxCoeff() / th.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ThetaTable, TerminalPositivityAndAgreement) {
  const ASModel m = small_model();
  const auto table = gig::build_theta_table(m, m.rates, 50);
  EXPECT_EQ(table.theta.back().cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t n = 0; n < table.grid.n_nodes(); ++n) EXPECT_GT(table.v(n, m.gamma).minCoeff(), 0.0);
  const Vector direct = gig::solve_theta_exact(m, m.rates, m.horizon - table.grid.time(10));
  EXPECT_LT((table.theta[10] - direct).cwiseAbs().maxCoeff(), 1e-9 * direct.cwiseAbs().maxCoeff());
}

TEST(ThetaTable, SymmetricInInventory) {
  const ASModel m = small_model();
  const auto table = gig::build_theta_table(m, m.rates, 20);
  for (std::size_t n = 0; n < table.grid.n_nodes(); ++n)
    for (std::size_t i = 0; i < 2; ++i)
      for (int q = 1; q <= m.q_max; ++q) {
        EXPECT_NEAR(table.at(n, i, q), table.at(n, i, -q), 1e-10 * (1 + std::abs(table.at(n, i, q))));
        const auto up = gig::optimal_quotes(table, m, i, q, n);
        const auto down = gig::optimal_quotes(table, m, i, -q, n);
        EXPECT_NEAR(up.u_a, down.u_b, 1e-9);
        EXPECT_EQ(up.ask_active, down.bid_active);
      }
}

TEST(IntegratedVariance, Cases) {
  ASModel one = small_model();
  one.sigma = Vector::Constant(1, 0.3);
  one.rates = Matrix::Zero(1, 1);
  EXPECT_NEAR(gig::integrated_variance(one, one.rates, 0, 2.5), 0.09 * 2.5, 1e-15);

  ASModel eq = small_model();
  eq.sigma = Vector::Constant(2, 0.4);
  EXPECT_NEAR(gig::integrated_variance(eq, eq.rates, 1, 3.0), 0.16 * 3.0, 1e-13);
}

TEST(IntegratedVariance, AgreesWithQuadrature) {
  const ASModel m = small_model();
  const Matrix q = gig::regime_generator(m.rates);
  const Vector s = m.sigma.array().square();
  for (std::size_t i = 0; i < 2; ++i) {
    const double want = oracle::simpson(
        [&](double u) { return (gig::matrix_exponential(q * u) * s)(static_cast<Eigen::Index>(i)); }, 0.0, 0.7, 400);
    EXPECT_NEAR(gig::integrated_variance(m, m.rates, i, 0.7), want, 1e-10);
  }
}

TEST(IntegratedVariance, SecondOrderRemainderIsCubic) {
  const ASModel m = small_model();
  std::vector<double> ratio;
  for (int e = 2; e <= 7; ++e) {
    const double tau = std::ldexp(1.0, -e);
    const double diff = gig::integrated_variance(m, m.rates, 0, tau) - gig::integrated_variance_second_order(m, m.rates, 0, tau);
    ratio.push_back(std::abs(diff) / (tau * tau * tau));
  }
  for (double r : ratio) EXPECT_LT(r, 2.0 * ratio.back());
  EXPECT_NEAR(ratio.back(), ratio[ratio.size() - 2], 0.1 * ratio.back());
}

TEST(ThetaExpansion, Pieces) {
  ASModel m;
  EXPECT_EQ(gig::theta_expansion(m, m.rates, 0, 3, 0.0), 0.0);
  EXPECT_NEAR(std::pow(1.002, -500.0), 0.36824, 1e-5);
  EXPECT_NEAR(m.rent_rate() / m.A, std::pow(1.002, -500.0), 1e-15);
  const double tau = 1e-3;
  EXPECT_NEAR(gig::theta_expansion(m, m.rates, 0, 0, tau), -2 * m.rent_rate() / m.gamma * tau, 1e-9);
  EXPECT_NEAR(gig::macro_theta_cost(m, m.rates, 1, 4, tau), gig::theta_expansion(m, m.rates, 1, 4, tau), 0.0);
  // Edge of the band: the rent counts one side.
  const double edge = gig::theta_expansion(m, m.rates, 0, 10, tau);
  const double w = gig::integrated_variance(m, m.rates, 0, tau);
  EXPECT_NEAR(edge, 50.0 * (m.gamma * w + m.gamma * m.gamma * m.xi * tau) - m.rent_rate() / m.gamma * tau, 1e-9);
}

TEST(ThetaExpansion, CubicRemainderWithoutFills) {
  // Without fills the inventory lattice decouples and the expansion holds to
  // third order.
  ASModel m = small_model();
  m.A = 1e-300;
  std::vector<double> x, y;
  for (int e = 3; e <= 8; ++e) {
    const double tau = std::ldexp(1.0, -e);
    const Vector th = gig::solve_theta_exact(m, m.rates, tau);
    double err = 0.0;
    for (int q = -2; q <= 2; ++q) err = std::max(err, std::abs(th(m.index(0, q)) - gig::theta_expansion(m, m.rates, 0, q, tau)));
    x.push_back(std::log(tau));
    y.push_back(std::log(err));
  }
  EXPECT_NEAR(oracle::slope(x, y), 3.0, 0.3);
}

TEST(Quotes, BaseOffset) {
  ASModel m;
  gig::ThetaTable flat;
  flat.grid = gig::TimeGrid::make(0, 1, 1);
  flat.q_max = m.q_max;
  flat.n_regimes = 2;
  flat.theta.assign(2, Vector::Zero(m.n_states()));
  const auto p = gig::optimal_quotes(flat, m, 0, 0, 0);
  EXPECT_NEAR(p.u_a, std::log(1.002) / 0.02, 1e-15);
  EXPECT_NEAR(p.u_a, 0.09990, 1e-5);
  EXPECT_EQ(p.u_a, p.u_b);
  const auto top = gig::optimal_quotes(flat, m, 0, m.q_max, 0);
  EXPECT_FALSE(top.bid_active);
  EXPECT_TRUE(top.ask_active);
  EXPECT_FALSE(gig::optimal_quotes(flat, m, 0, -m.q_max, 0).ask_active);
}

TEST(Quotes, VolatileRegimeWidensAtDefaultParameters) {
  const ASModel m;
  const auto table = gig::build_theta_table(m, m.rates, 48);
  for (std::size_t n = 0; n + 1 < table.grid.n_nodes(); ++n)
    for (int q = -m.q_max + 1; q < m.q_max; ++q)
      EXPECT_GT(gig::optimal_quotes(table, m, 1, q, n).total(), gig::optimal_quotes(table, m, 0, q, n).total());
}

TEST(Quotes, MonotoneWidening) {
  ASModel base = small_model();
  base.horizon = 0.5;
  auto spread = [](const ASModel& m, std::size_t i, int q) {
    const auto t = gig::build_theta_table(m, m.rates, 10);
    return gig::optimal_quotes(t, m, i, q, 0).total();
  };
  double prev = -1;
  for (double s : {1.0, 2.0, 4.0}) {
    ASModel m = base;
    m.sigma(0) = s;
    const double sp = spread(m, 0, 1);
    EXPECT_GE(sp, prev);
    prev = sp;
  }
  prev = -1;
  for (double xi : {0.0, 5.0, 10.0, 20.0}) {
    ASModel m = base;
    m.xi = xi;
    const double sp = spread(m, 0, 1);
    EXPECT_GE(sp, prev);
    prev = sp;
  }
  prev = -1;
  for (int q = 0; q < base.q_max; ++q) {
    const double sp = spread(base, 0, q);
    EXPECT_GE(sp, prev - 1e-12);
    prev = sp;
  }
}

TEST(EffectiveVolatility, Values) {
  ASModel m = small_model();
  m.xi = 0.0;
  auto e = gig::effective_volatility(m, m.rates, 0, 0.2);
  EXPECT_EQ(e.instantaneous_variance, 4.0);
  EXPECT_NEAR(e.risk_factor, m.gamma * gig::integrated_variance(m, m.rates, 0, 0.2), 1e-15);
  ASModel p;
  p.sigma(0) = std::sqrt(0.05);
  EXPECT_NEAR(gig::effective_volatility(p, p.rates, 0, 0.0).instantaneous_variance, 0.25, 1e-15);
}

TEST(RiskIsomorphism, ThetaIdentity) {
  const ASModel m;
  const auto a = gig::build_theta_table(m, m.rates, 96);
  const auto b = gig::build_theta_table(gig::isomorphic_model(m), m.rates, 96);
  for (std::size_t n = 0; n < a.grid.n_nodes(); ++n)
    EXPECT_LE((a.theta[n] - b.theta[n]).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.theta[n].cwiseAbs().maxCoeff()));
}

TEST(MacroAs, UniformWhenRegimesAlike) {
  ASModel m = small_model();
  m.xi = 0;
  m.sigma = Vector::Constant(2, 3.0);
  const auto spec = gig::OuterGameSpec::affine(m.rates, Matrix::Zero(2, 2), Matrix::Zero(2, 2));
  const auto sol = gig::solve_macro_as(m, spec, 2, gig::TimeGrid::make(0, 0.1, 20));
  for (const auto& U : sol.outer.k) EXPECT_NEAR(U(0), U(1), 1e-12 * (1 + std::abs(U(0))));
}

TEST(MacroAs, AttackerRaisesStabilizerLowers) {
  ASModel m = small_model();
  const auto grid = gig::TimeGrid::make(0, 0.2, 40);
  const Matrix none = Matrix::Zero(2, 2);
  const Matrix push = (Matrix(2, 2) << 0, 4, 1, 0).finished();
  const auto base = gig::solve_macro_as(m, gig::OuterGameSpec::affine(m.rates, none, none), 2, grid);
  const auto att = gig::solve_macro_as(m, gig::OuterGameSpec::affine(m.rates, push, none), 2, grid);
  const auto stab = gig::solve_macro_as(m, gig::OuterGameSpec::affine(m.rates, none, (Matrix(2, 2) << 0, 1.5, 2, 0).finished()), 2, grid);
  for (std::size_t n = 0; n < grid.n_nodes(); ++n)
    for (int i = 0; i < 2; ++i) {
      EXPECT_GE(att.outer.k[n](i), base.outer.k[n](i) - 1e-12);
      EXPECT_LE(stab.outer.k[n](i), base.outer.k[n](i) + 1e-12);
    }
}

TEST(MacroAs, QuadraticModeRuns) {
  ASModel m = small_model();
  auto spec = gig::OuterGameSpec::affine(m.rates, (Matrix(2, 2) << 0, 1, 1, 0).finished(), (Matrix(2, 2) << 0, 1, 1, 0).finished());
  spec.rho_f = 2.0;
  spec.rho_g = 2.0;
  gig::MacroOptions opt;
  opt.mode = gig::MacroMode::quadratic;
  const auto sol = gig::solve_macro_as(m, spec, 1, gig::TimeGrid::make(0, 0.2, 40), opt);
  for (std::size_t n = 0; n < sol.effort_f.size(); ++n) {
    EXPECT_GE(sol.effort_f[n].minCoeff(), 0.0);
    EXPECT_LE(sol.effort_f[n].maxCoeff(), 1.0);
    EXPECT_GE(sol.outer.mu[n](0, 1), 0.0);
  }
}

TEST(MacroAs, FlippedBangBangMatchesSaddle) {
  ASModel m = small_model();
  const auto spec = gig::OuterGameSpec::affine(m.rates, (Matrix(2, 2) << 0, 4, 4, 0).finished(),
                                               (Matrix(2, 2) << 0, 1.5, 2, 0).finished());
  gig::MacroOptions saddle, printed, flipped;
  printed.affine_policy = flipped.affine_policy = gig::AffinePolicy::bang_bang;
  flipped.flip_bangbang = true;
  const auto grid = gig::TimeGrid::make(0, 0.2, 40);
  const auto a = gig::solve_macro_as(m, spec, 2, grid, printed);
  const auto b = gig::solve_macro_as(m, spec, 2, grid, flipped);
  const auto c = gig::solve_macro_as(m, spec, 2, grid, saddle);
  double diff = 0.0;
  for (std::size_t n = 0; n < grid.n_nodes(); ++n) {
    EXPECT_LT((b.outer.k[n] - c.outer.k[n]).cwiseAbs().maxCoeff(), 1e-9 * (1 + c.outer.k[n].cwiseAbs().maxCoeff()));
    diff = std::max(diff, (a.effort_f[n] - b.effort_f[n]).cwiseAbs().maxCoeff());
  }
  EXPECT_EQ(diff, 1.0);
}
