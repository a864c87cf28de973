#pragma once

// Inner layer: the Markov-jump linear-quadratic game
//
//   dX = (A_i X + B_i u + D_i w) dt + Sigma_i dW,
//   running cost X'Q_i X + u'R_i u - w'S_i w,  terminal X'Q_T,i X,
//
// with value V_i(t, x) = x' P_i(t) x + r_i(t). The gradient is 2 P_i x, so
// the saddle feedback is u = -R^{-1} B' P x, w = S^{-1} D' P x, and the
// quadratic weights follow the coupled Riccati flow
//
//   -dP_i/dt = Q_i + A_i'P_i + P_i A_i - P_i C_i P_i + sum_j mu_ij (P_j - P_i)
//   -dr_i/dt = Tr(Sigma_i Sigma_i' P_i) + sum_j mu_ij (r_j - r_i)
//
// where C_i = B_i R_i^{-1} B_i' - D_i S_i^{-1} D_i' is the control matrix.
//
// Rate schedules are sampled at grid nodes. On the backward step from node
// n+1 to node n the rates of node n+1 are held fixed, which is exactly how
// the hierarchy sweep applies the equilibrium rates it computes at n+1.

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "gig/errors.hpp"
#include "gig/numkit.hpp"

namespace gig {

struct RegimeLQ {
  Matrix A, B, D, Sigma, Q, R, S, QT;
};

struct RegimeLQModel {
  std::vector<RegimeLQ> regimes;
  Matrix baseline_rates;  // N x N; off-diagonals are mu_ij, diagonal ignored

  std::size_t n_regimes() const { return regimes.size(); }
  Eigen::Index state_dim() const { return regimes.empty() ? 0 : regimes.front().A.rows(); }

  void validate() const;
  Matrix control_matrix(std::size_t i) const;
};

/// Rates per grid node. Each entry is N x N with mu_ij >= 0 off the diagonal.
using RateSchedule = std::vector<Matrix>;

struct RiccatiSolution {
  TimeGrid grid;
  std::vector<std::vector<Matrix>> P;  // [node][regime]
  std::vector<Vector> r;               // [node], one entry per regime
};

namespace detail {

inline bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

inline void require_psd(const Matrix& m, const char* what, std::size_t i) {
  if (m.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double floor = -1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor) {
    std::ostringstream msg;
    msg << "RegimeLQModel: " << what << " of regime " << i << " is not positive semidefinite";
    throw InvalidArgument(msg.str());
  }
}

inline void require_pd(const Matrix& m, const char* what, std::size_t i) {
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "RegimeLQModel: " << what << " of regime " << i << " is not positive definite";
    throw InvalidArgument(msg.str());
  }
}

inline void require_rates(const Matrix& rates, std::size_t n) {
  if (static_cast<std::size_t>(rates.rows()) != n || static_cast<std::size_t>(rates.cols()) != n)
    throw InvalidArgument("rates: expected an N x N matrix");
  for (Eigen::Index i = 0; i < rates.rows(); ++i)
    for (Eigen::Index j = 0; j < rates.cols(); ++j)
      if (i != j && !(rates(i, j) >= 0.0 && std::isfinite(rates(i, j))))
        throw InvalidArgument("rates: off-diagonal entries must be finite and nonnegative");
}

}  // namespace detail

inline void RegimeLQModel::validate() const {
  if (regimes.empty()) throw InvalidArgument("RegimeLQModel: no regimes");
  const Eigen::Index n = state_dim();
  if (n < 1) throw InvalidArgument("RegimeLQModel: empty state dimension");
  const Eigen::Index d1 = regimes.front().B.cols();
  const Eigen::Index d2 = regimes.front().D.cols();
  const Eigen::Index dw = regimes.front().Sigma.cols();
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const auto& g = regimes[i];
    auto shape = [&](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* name) {
      if (m.rows() != r || m.cols() != c) {
        std::ostringstream msg;
        msg << "RegimeLQModel: " << name << " of regime " << i << " has shape " << m.rows() << "x" << m.cols()
            << ", expected " << r << "x" << c;
        throw InvalidArgument(msg.str());
      }
      if (!m.allFinite()) throw InvalidArgument(std::string("RegimeLQModel: non-finite ") + name);
    };
    shape(g.A, n, n, "A");
    shape(g.B, n, d1, "B");
    shape(g.D, n, d2, "D");
    shape(g.Sigma, n, dw, "Sigma");
    shape(g.Q, n, n, "Q");
    shape(g.R, d1, d1, "R");
    shape(g.S, d2, d2, "S");
    shape(g.QT, n, n, "QT");
    for (const auto& [m, name] : {std::pair{&g.Q, "Q"}, std::pair{&g.QT, "QT"}, std::pair{&g.R, "R"}, std::pair{&g.S, "S"}})
      if (!detail::is_symmetric(*m, 1e-12)) throw InvalidArgument(std::string("RegimeLQModel: ") + name + " must be symmetric");
    detail::require_psd(g.Q, "Q", i);
    detail::require_psd(g.QT, "QT", i);
    if (d1 > 0) detail::require_pd(g.R, "R", i);
    if (d2 > 0) detail::require_pd(g.S, "S", i);
  }
  detail::require_rates(baseline_rates, regimes.size());
}

inline Matrix RegimeLQModel::control_matrix(std::size_t i) const {
  const auto& g = regimes.at(i);
  Matrix c = Matrix::Zero(g.A.rows(), g.A.rows());
  if (g.B.cols() > 0) c += g.B * g.R.llt().solve(g.B.transpose());
  if (g.D.cols() > 0) c -= g.D * g.S.llt().solve(g.D.transpose());
  return 0.5 * (c + c.transpose());
}

/// -dP_i/dt for regime i given every regime's current P and the rates.
inline Matrix riccati_rhs(const std::vector<Matrix>& P, const Matrix& rates, const RegimeLQModel& model,
                          std::size_t i) {
  const auto& g = model.regimes.at(i);
  const Matrix& Pi = P.at(i);
  Matrix out = g.Q + g.A.transpose() * Pi + Pi * g.A - Pi * model.control_matrix(i) * Pi;
  for (std::size_t j = 0; j < P.size(); ++j)
    if (j != i) out += rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (P[j] - Pi);
  return 0.5 * (out + out.transpose());
}

/// -dr_i/dt for regime i.
inline double offset_rhs(const Vector& r, const std::vector<Matrix>& P, const Matrix& rates,
                         const RegimeLQModel& model, std::size_t i) {
  const auto& g = model.regimes.at(i);
  const auto ii = static_cast<Eigen::Index>(i);
  double out = (g.Sigma * g.Sigma.transpose() * P.at(i)).trace();
  for (Eigen::Index j = 0; j < r.size(); ++j)
    if (j != ii) out += rates(ii, j) * (r(j) - r(ii));
  return out;
}

namespace detail {

// Stacked inner state: vec(P_0), ..., vec(P_{N-1}), r.
inline Vector pack_inner(const std::vector<Matrix>& P, const Vector& r) {
  const auto n2 = P.front().size();
  Vector y(static_cast<Eigen::Index>(P.size()) * n2 + r.size());
  for (std::size_t i = 0; i < P.size(); ++i)
    y.segment(static_cast<Eigen::Index>(i) * n2, n2) = Eigen::Map<const Vector>(P[i].data(), n2);
  y.tail(r.size()) = r;
  return y;
}

inline void unpack_inner(const Vector& y, Eigen::Index n, std::vector<Matrix>& P, Vector& r) {
  const auto regimes = static_cast<Eigen::Index>(P.size());
  const auto n2 = n * n;
  for (Eigen::Index i = 0; i < regimes; ++i)
    P[static_cast<std::size_t>(i)] = Eigen::Map<const Matrix>(y.data() + i * n2, n, n);
  r = y.tail(regimes);
}

inline Vector inner_rhs(const Vector& y, const Matrix& rates, const RegimeLQModel& model) {
  const auto n = model.state_dim();
  std::vector<Matrix> P(model.n_regimes());
  Vector r;
  unpack_inner(y, n, P, r);
  std::vector<Matrix> dP(P.size());
  Vector dr(r.size());
  for (std::size_t i = 0; i < P.size(); ++i) {
    dP[i] = riccati_rhs(P, rates, model, i);
    dr(static_cast<Eigen::Index>(i)) = offset_rhs(r, P, rates, model, i);
  }
  return pack_inner(dP, dr);
}

// One backward RK4 step of the (P, r) flow under rates held fixed.
inline void inner_step(std::vector<Matrix>& P, Vector& r, const Matrix& rates, const RegimeLQModel& model,
                       double t, double h, double blowup_bound) {
  auto rhs = [&](double, const Vector& y) { return inner_rhs(y, rates, model); };
  const Vector y = rk4_backward_step<Vector>(rhs, t, pack_inner(P, r), h);
  unpack_inner(y, model.state_dim(), P, r);
  for (std::size_t i = 0; i < P.size(); ++i) {
    P[i] = (0.5 * (P[i] + P[i].transpose())).eval();
    if (!P[i].allFinite() || P[i].cwiseAbs().maxCoeff() > blowup_bound) {
      std::ostringstream msg;
      msg << "Riccati flow blew up in regime " << i << " at t=" << (t - h);
      throw BlowUpError(msg.str(), t - h, static_cast<int>(i));
    }
  }
  if (!r.allFinite()) throw BlowUpError("offset flow left the finite range", t - h);
}

}  // namespace detail

/// Backward solve of the coupled Riccati and offset flows from
/// P_i(T) = QT_i, r_i(T) = 0. `rates` holds one matrix per grid node.
inline RiccatiSolution solve_coupled_riccati(const RegimeLQModel& model, const RateSchedule& rates,
                                             const TimeGrid& grid, double blowup_bound = 1e8) {
  model.validate();
  grid.validate();
  if (rates.size() != grid.n_nodes()) throw InvalidArgument("solve_coupled_riccati: need one rate matrix per node");
  for (const auto& m : rates) detail::require_rates(m, model.n_regimes());

  const auto N = model.n_regimes();
  RiccatiSolution sol;
  sol.grid = grid;
  sol.P.resize(grid.n_nodes());
  sol.r.assign(grid.n_nodes(), Vector::Zero(static_cast<Eigen::Index>(N)));

  std::vector<Matrix> P(N);
  for (std::size_t i = 0; i < N; ++i) P[i] = model.regimes[i].QT;
  Vector r = Vector::Zero(static_cast<Eigen::Index>(N));
  sol.P[grid.n_steps] = P;
  const double h = grid.step();
  for (std::size_t n = grid.n_steps; n-- > 0;) {
    detail::inner_step(P, r, rates[n + 1], model, grid.time(n + 1), h, blowup_bound);
    sol.P[n] = P;
    sol.r[n] = r;
  }
  return sol;
}

/// Convenience overload: the same rate matrix at every node.
inline RiccatiSolution solve_coupled_riccati(const RegimeLQModel& model, const Matrix& rates, const TimeGrid& grid,
                                             double blowup_bound = 1e8) {
  return solve_coupled_riccati(model, RateSchedule(grid.n_nodes(), rates), grid, blowup_bound);
}

struct FeedbackGains {
  Matrix control;      // u = control * x
  Matrix disturbance;  // w = disturbance * x
};

/// Saddle feedback gains under the x'Px value convention.
inline FeedbackGains feedback_gains(const Matrix& P, const RegimeLQModel& model, std::size_t i) {
  const auto& g = model.regimes.at(i);
  FeedbackGains k;
  Eigen::LLT<Matrix> r_llt(g.R);
  Eigen::LLT<Matrix> s_llt(g.S);
  if (g.R.size() > 0 && r_llt.info() != Eigen::Success) throw InvalidArgument("feedback_gains: R is singular");
  if (g.S.size() > 0 && s_llt.info() != Eigen::Success) throw InvalidArgument("feedback_gains: S is singular");
  k.control = g.R.size() > 0 ? Matrix(-r_llt.solve(g.B.transpose() * P)) : Matrix(0, P.cols());
  k.disturbance = g.S.size() > 0 ? Matrix(s_llt.solve(g.D.transpose() * P)) : Matrix(0, P.cols());
  return k;
}

/// [[A, -C], [-Q, -A']] for regime i.
inline Matrix hamiltonian_matrix(const RegimeLQModel& model, std::size_t i) {
  const auto& g = model.regimes.at(i);
  const auto n = g.A.rows();
  Matrix h(2 * n, 2 * n);
  h.topLeftCorner(n, n) = g.A;
  h.topRightCorner(n, n) = -model.control_matrix(i);
  h.bottomLeftCorner(n, n) = -g.Q;
  h.bottomRightCorner(n, n) = -g.A.transpose();
  return h;
}

/// min over regimes and eigenvalues of |Re(lambda(H_i))|.
inline double hamiltonian_spectral_gap(const RegimeLQModel& model) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.n_regimes(); ++i)
    gap = std::min(gap, eigenvalues(hamiltonian_matrix(model, i)).real().cwiseAbs().minCoeff());
  return gap;
}

/// Algebraic steady state of the flow under constant rates, reached by
/// integrating backward until every |dP/dt| entry drops below `tol`.
inline std::vector<Matrix> steady_state_riccati(const RegimeLQModel& model, const Matrix& rates, double step = 1e-3,
                                                double tol = 1e-10, double max_time = 1e4) {
  model.validate();
  detail::require_rates(rates, model.n_regimes());
  std::vector<Matrix> P(model.n_regimes());
  for (std::size_t i = 0; i < P.size(); ++i) P[i] = model.regimes[i].QT;
  Vector r = Vector::Zero(static_cast<Eigen::Index>(P.size()));
  for (double tau = 0.0; tau < max_time; tau += step) {
    double speed = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
      speed = std::max(speed, riccati_rhs(P, rates, model, i).cwiseAbs().maxCoeff());
    if (speed < tol) return P;
    detail::inner_step(P, r, rates, model, -tau, step, 1e12);
    r.setZero();  // offsets grow linearly and are irrelevant here
  }
  throw ConvergenceError("steady_state_riccati: flow did not settle");
}

}  // namespace gig
