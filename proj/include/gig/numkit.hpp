#pragma once

// Dense linear algebra and backward ODE primitives shared by the solvers.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "gig/errors.hpp"

namespace gig {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// Uniform grid t0 = s_0 < s_1 < ... < s_n = horizon.
struct TimeGrid {
  double t0 = 0.0;
  double horizon = 1.0;
  std::size_t n_steps = 1;

  static TimeGrid make(double t0, double horizon, std::size_t n_steps) {
    TimeGrid g{t0, horizon, n_steps};
    g.validate();
    return g;
  }

  void validate() const {
    if (!std::isfinite(t0) || !std::isfinite(horizon) || !(horizon > t0))
      throw InvalidArgument("TimeGrid: horizon must exceed t0");
    if (n_steps < 1) throw InvalidArgument("TimeGrid: n_steps must be >= 1");
  }

  double step() const { return (horizon - t0) / static_cast<double>(n_steps); }
  std::size_t n_nodes() const { return n_steps + 1; }
  // Node n sits at t0 + n*step; the last node is pinned to the horizon exactly.
  double time(std::size_t n) const {
    return n == n_steps ? horizon : t0 + static_cast<double>(n) * step();
  }
};

namespace detail {

inline void require_square(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw InvalidArgument(std::string(who) + ": matrix must be square and non-empty");
}

inline void require_finite(const Matrix& m, const char* who) {
  if (!m.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite entries");
}

inline bool all_finite(double y) { return std::isfinite(y); }
template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& y) {
  return y.allFinite();
}

// Pade approximant [m/m] of exp, returned as (U, V) with exp(A) ~ (V-U)^{-1}(V+U).
inline void pade_terms(const Matrix& a, int degree, Matrix& u, Matrix& v) {
  const auto n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  switch (degree) {
    case 3: {
      constexpr std::array<double, 4> b{120.0, 60.0, 12.0, 1.0};
      u = a * (b[3] * a2 + b[1] * id);
      v = b[2] * a2 + b[0] * id;
      return;
    }
    case 5: {
      constexpr std::array<double, 6> b{30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
      const Matrix a4 = a2 * a2;
      u = a * (b[5] * a4 + b[3] * a2 + b[1] * id);
      v = b[4] * a4 + b[2] * a2 + b[0] * id;
      return;
    }
    case 7: {
      constexpr std::array<double, 8> b{17297280.0, 8648640.0, 1995840.0, 277200.0,
                                        25200.0,    1512.0,    56.0,      1.0};
      const Matrix a4 = a2 * a2;
      const Matrix a6 = a4 * a2;
      u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
      v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
      return;
    }
    case 9: {
      constexpr std::array<double, 10> b{17643225600.0, 8821612800.0, 2075673600.0,
                                         302702400.0,   30270240.0,   2162160.0,
                                         110880.0,      3960.0,       90.0,
                                         1.0};
      const Matrix a4 = a2 * a2;
      const Matrix a6 = a4 * a2;
      const Matrix a8 = a6 * a2;
      u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
      v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
      return;
    }
    default: {
      constexpr std::array<double, 14> b{
          64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
          1187353796428800.0,  129060195264000.0,   10559470521600.0,
          670442572800.0,      33522128640.0,       1323241920.0,
          40840800.0,          960960.0,            16380.0,
          182.0,               1.0};
      const Matrix a4 = a2 * a2;
      const Matrix a6 = a4 * a2;
      u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
               b[3] * a2 + b[1] * id);
      v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
          b[2] * a2 + b[0] * id;
      return;
    }
  }
}

}  // namespace detail

/// e^M by scaling and squaring around a diagonal Pade core (degrees 3..13,
/// picked from the 1-norm).
inline Matrix matrix_exponential(const Matrix& m) {
  detail::require_square(m, "matrix_exponential");
  detail::require_finite(m, "matrix_exponential");

  constexpr std::array<double, 4> theta{1.495585217958292e-2, 2.539398330063230e-1,
                                        9.504178996162932e-1, 2.097847961257068e0};
  constexpr std::array<int, 4> degrees{3, 5, 7, 9};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  Matrix u, v;
  for (std::size_t k = 0; k < degrees.size(); ++k) {
    if (norm1 <= theta[k]) {
      detail::pade_terms(m, degrees[k], u, v);
      return (v - u).partialPivLu().solve(v + u);
    }
  }

  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix scaled = m / std::ldexp(1.0, squarings);
  detail::pade_terms(scaled, 13, u, v);
  Matrix e = (v - u).partialPivLu().solve(v + u);
  for (int s = 0; s < squarings; ++s) e = e * e;
  return e;
}

/// exp(M t) v without forming the exponential: truncated Taylor series over
/// enough substeps that each substep has 1-norm <= 1, after shifting by the
/// mean eigenvalue trace(M)/n.
inline Vector expm_action(const Matrix& m, const Vector& v, double t) {
  detail::require_square(m, "expm_action");
  if (m.rows() != v.size()) throw InvalidArgument("expm_action: dimension mismatch");
  detail::require_finite(m, "expm_action");
  if (!v.allFinite() || !std::isfinite(t)) throw InvalidArgument("expm_action: non-finite input");

  const auto n = m.rows();
  const double shift = m.trace() / static_cast<double>(n);
  const Matrix a = (m - shift * Matrix::Identity(n, n)) * t;
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  const int substeps = std::max(1, static_cast<int>(std::ceil(norm1)));
  const double eta = std::exp(shift * t / substeps);
  constexpr int kMaxTerms = 60;
  constexpr double kTol = 1e-17;

  Vector f = v;
  for (int s = 0; s < substeps; ++s) {
    Vector term = f;
    Vector acc = f;
    for (int j = 1; j <= kMaxTerms; ++j) {
      term = (a * term) / (static_cast<double>(substeps) * j);
      acc += term;
      const double scale = std::max(acc.cwiseAbs().maxCoeff(), 1e-300);
      if (term.cwiseAbs().maxCoeff() <= kTol * scale) break;
    }
    f = eta * acc;
  }
  return f;
}

/// All eigenvalues with multiplicity (Hessenberg reduction + shifted QR,
/// via Eigen's EigenSolver).
inline ComplexVector eigenvalues(const Matrix& m) {
  detail::require_square(m, "eigenvalues");
  detail::require_finite(m, "eigenvalues");
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw ConvergenceError("eigenvalues: QR iteration did not converge");
  return solver.eigenvalues();
}

/// One classical RK4 step backward in time, from t to t - h, for the
/// terminal-value problem  -dy/dt = rhs(t, y).
template <typename State, typename Rhs>
State rk4_backward_step(Rhs&& rhs, double t, const State& y, double h) {
  const State k1 = rhs(t, y);
  const State k2 = rhs(t - 0.5 * h, State(y + (0.5 * h) * k1));
  const State k3 = rhs(t - 0.5 * h, State(y + (0.5 * h) * k2));
  const State k4 = rhs(t - h, State(y + h * k3));
  return State(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// Integrates -dy/dt = rhs(t, y), y(horizon) = terminal, backward over the
/// grid. Entry n of the result is the state at grid.time(n).
/// Throws BlowUpError at the first node where the state is not finite.
template <typename State, typename Rhs>
std::vector<State> integrate_backward(Rhs&& rhs, const State& terminal, const TimeGrid& grid) {
  grid.validate();
  if (!detail::all_finite(terminal)) throw InvalidArgument("integrate_backward: non-finite terminal");
  std::vector<State> out(grid.n_nodes(), terminal);
  const double h = grid.step();
  for (std::size_t n = grid.n_steps; n-- > 0;) {
    out[n] = rk4_backward_step<State>(rhs, grid.time(n + 1), out[n + 1], h);
    if (!detail::all_finite(out[n])) {
      std::ostringstream msg;
      msg << "integrate_backward: state left the finite range at t=" << grid.time(n);
      throw BlowUpError(msg.str(), grid.time(n));
    }
  }
  return out;
}

}  // namespace gig
