#pragma once

#include <vector>

#include "mflq/core.hpp"
#include "mflq/problem.hpp"

namespace mflq {

inline constexpr int kDefaultSteps = 4096;

/// Node-sampled solution of the two Riccati equations together with the
/// gain weights K0 = R + B1' P B1 and K1 = R + R_hat + (B1+B1_hat)' P (B1+B1_hat).
struct RiccatiSolution {
  TimeGrid grid{1.0, 2};
  std::vector<Matrix> P;
  std::vector<Matrix> Pi;
  std::vector<Matrix> K0;
  std::vector<Matrix> K1;

  /// P_hat = Pi - P, the coefficient of E[X] in Y beyond P.
  Matrix P_hat(int k) const { return Pi[k] - P[k]; }
};

namespace riccati_detail {

/// Right-hand side of P' = f(t, P) for the centered-state equation
///   P' + PA + A'P + A1'PA1 + Q - (PB + A1'PB1) K0^{-1} (B'P + B1'PA1) = 0.
inline Matrix p_rhs(const Coefficients& c, const Matrix& P, double t) {
  const Matrix K0 = c.R + c.B1.transpose() * P * c.B1;
  const Matrix S = P * c.B + c.A1.transpose() * P * c.B1;  // n x m
  const SpdSolver k0(K0, t, "K0 = R + B1' P B1");
  const Matrix rhs = P * c.A + c.A.transpose() * P +
                     c.A1.transpose() * P * c.A1 + c.Q -
                     S * k0.solve(S.transpose());
  return -symmetrize(rhs);
}

/// Right-hand side of Pi' = f(t, Pi; P) for the mean equation
///   Pi' + Pi A_ + A_'Pi + A1_'P A1_ + Q_ - (Pi B_ + A1_'P B1_) K1^{-1} (.)' = 0
/// where X_ denotes X + X_hat.
inline Matrix pi_rhs(const Coefficients& c, const Matrix& P, const Matrix& Pi,
                     double t) {
  const Matrix K1 = c.R_sum + c.B1_sum.transpose() * P * c.B1_sum;
  const Matrix S = Pi * c.B_sum + c.A1_sum.transpose() * P * c.B1_sum;
  const SpdSolver k1(K1, t, "K1 = R + R_hat + (B1+B1_hat)' P (B1+B1_hat)");
  const Matrix rhs = Pi * c.A_sum + c.A_sum.transpose() * Pi +
                     c.A1_sum.transpose() * P * c.A1_sum + c.Q_sum -
                     S * k1.solve(S.transpose());
  return -symmetrize(rhs);
}

inline void check_grid(const ProblemDef& prob, const TimeGrid& grid) {
  if (std::abs(grid.horizon() - prob.T) > time_tolerance(prob.T))
    throw StructuralError("riccati: grid horizon differs from problem horizon");
}

}  // namespace riccati_detail

/// Integrates the centered-state Riccati equation backward from P(T) = G with
/// classic RK4; every stage value is symmetrized.
inline std::vector<Matrix> solve_P(const ProblemDef& prob, const TimeGrid& grid) {
  check_structure(prob);
  riccati_detail::check_grid(prob, grid);
  const int N = grid.steps();
  const double h = grid.step();
  std::vector<Matrix> P(grid.nodes());
  P[N] = prob.G;
  for (int k = N - 1; k >= 0; --k) {
    const double t1 = grid.time(k + 1);
    const double tm = t1 - 0.5 * h;
    const double t0 = grid.time(k);
    const Coefficients c1 = prob.at(t1);
    const Coefficients cm = prob.at(tm);
    const Coefficients c0 = prob.at(t0);
    const Matrix& Y = P[k + 1];
    const Matrix k1 = riccati_detail::p_rhs(c1, Y, t1);
    const Matrix k2 = riccati_detail::p_rhs(cm, symmetrize(Y - 0.5 * h * k1), tm);
    const Matrix k3 = riccati_detail::p_rhs(cm, symmetrize(Y - 0.5 * h * k2), tm);
    const Matrix k4 = riccati_detail::p_rhs(c0, symmetrize(Y - h * k3), t0);
    P[k] = symmetrize(Y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  return P;
}

/// Integrates the mean Riccati equation backward from Pi(T) = G + G_hat. P
/// at the half-step stage time comes from the cubic Hermite interpolant built
/// on node values of P and its derivative from the P equation.
inline std::vector<Matrix> solve_Pi(const ProblemDef& prob, const TimeGrid& grid,
                                    const std::vector<Matrix>& P) {
  check_structure(prob);
  riccati_detail::check_grid(prob, grid);
  if (static_cast<int>(P.size()) != grid.nodes())
    throw StructuralError("solve_Pi: P path is not on the given grid");
  const int N = grid.steps();
  const double h = grid.step();
  std::vector<Matrix> Pi(grid.nodes());
  Pi[N] = prob.G + prob.G_hat;

  Coefficients c1 = prob.at(grid.time(N));
  Matrix dP1 = riccati_detail::p_rhs(c1, P[N], grid.time(N));
  for (int k = N - 1; k >= 0; --k) {
    const double t1 = grid.time(k + 1);
    const double tm = t1 - 0.5 * h;
    const double t0 = grid.time(k);
    const Coefficients cm = prob.at(tm);
    const Coefficients c0 = prob.at(t0);
    const Matrix dP0 = riccati_detail::p_rhs(c0, P[k], t0);
    const Matrix Pm =
        symmetrize(0.5 * (P[k] + P[k + 1]) + h / 8.0 * (dP0 - dP1));

    const Matrix& Y = Pi[k + 1];
    const Matrix k1 = riccati_detail::pi_rhs(c1, P[k + 1], Y, t1);
    const Matrix k2 =
        riccati_detail::pi_rhs(cm, Pm, symmetrize(Y - 0.5 * h * k1), tm);
    const Matrix k3 =
        riccati_detail::pi_rhs(cm, Pm, symmetrize(Y - 0.5 * h * k2), tm);
    const Matrix k4 = riccati_detail::pi_rhs(c0, P[k], symmetrize(Y - h * k3), t0);
    Pi[k] = symmetrize(Y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));

    c1 = c0;
    dP1 = dP0;
  }
  return Pi;
}

/// Classical (no mean-field terms) Riccati equation with weights Q0, R0, G0
/// and dynamics A, A1, B, B1 taken from `dynamics`. Same integrator as solve_P.
inline std::vector<Matrix> solve_classical_P0(const CoefficientSchedule& Q0,
                                              const CoefficientSchedule& R0,
                                              const Matrix& G0,
                                              const ProblemDef& dynamics,
                                              const TimeGrid& grid) {
  ProblemDef p = ProblemDef::zeros(dynamics.n, dynamics.m, dynamics.T);
  p.A = dynamics.A;
  p.A1 = dynamics.A1;
  p.B = dynamics.B;
  p.B1 = dynamics.B1;
  p.Q = Q0;
  p.R = R0;
  p.G = G0;
  p.x0 = dynamics.x0;
  return solve_P(p, grid);
}

/// Solves both equations and tabulates K0, K1 at every node.
inline RiccatiSolution solve_riccati(const ProblemDef& prob, const TimeGrid& grid) {
  RiccatiSolution sol;
  sol.grid = grid;
  sol.P = solve_P(prob, grid);
  sol.Pi = solve_Pi(prob, grid, sol.P);
  sol.K0.resize(grid.nodes());
  sol.K1.resize(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k) {
    const Coefficients c = prob.at(grid.time(k));
    const Matrix& P = sol.P[k];
    sol.K0[k] = symmetrize(c.R + c.B1.transpose() * P * c.B1);
    sol.K1[k] = symmetrize(c.R_sum + c.B1_sum.transpose() * P * c.B1_sum);
  }
  return sol;
}

inline RiccatiSolution solve_riccati(const ProblemDef& prob,
                                     int steps = kDefaultSteps) {
  return solve_riccati(prob, TimeGrid(prob.T, steps));
}

/// Fourth-order finite-difference derivative of a node-sampled path
/// (central in the interior, one-sided five-point at the two ends).
inline std::vector<Matrix> fd_derivative(const std::vector<Matrix>& f, double h) {
  const int n = static_cast<int>(f.size());
  if (n < 5) throw StructuralError("fd_derivative: need at least 5 nodes");
  std::vector<Matrix> d(n);
  const double s = 1.0 / (12.0 * h);
  d[0] = s * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
  d[1] = s * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
  for (int k = 2; k + 2 < n; ++k)
    d[k] = s * (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]);
  d[n - 2] = -s * (-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] -
                   6.0 * f[n - 4] + f[n - 5]);
  d[n - 1] = -s * (-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] +
                   16.0 * f[n - 4] - 3.0 * f[n - 5]);
  return d;
}

/// Substitutes P_hat = Pi - P (with a finite-difference derivative) into the
/// P_hat Riccati equation and returns the Frobenius norm of the residual at
/// every node. The equation is written in its expanded form, independent of
/// the one used to integrate Pi.
inline std::vector<double> phat_residual(const ProblemDef& prob,
                                         const TimeGrid& grid,
                                         const std::vector<Matrix>& P,
                                         const std::vector<Matrix>& Pi) {
  if (static_cast<int>(P.size()) != grid.nodes() || Pi.size() != P.size())
    throw StructuralError("phat_residual: paths are not on the given grid");
  std::vector<Matrix> Ph(P.size());
  for (std::size_t k = 0; k < P.size(); ++k) Ph[k] = Pi[k] - P[k];
  const std::vector<Matrix> dPh = fd_derivative(Ph, grid.step());

  std::vector<double> res(P.size());
  for (int k = 0; k < grid.nodes(); ++k) {
    const double t = grid.time(k);
    const Coefficients c = prob.at(t);
    const Matrix& Pk = P[k];
    const Matrix& H = Ph[k];
    const Matrix K0 = c.R + c.B1.transpose() * Pk * c.B1;
    const Matrix K1 = c.R_sum + c.B1_sum.transpose() * Pk * c.B1_sum;
    const SpdSolver k0(K0, t, "K0");
    const SpdSolver k1(K1, t, "K1");
    // M = P B_ + A1_' P B1_, S = P B + A1' P B1
    const Matrix M = Pk * c.B_sum + c.A1_sum.transpose() * Pk * c.B1_sum;
    const Matrix S = Pk * c.B + c.A1.transpose() * Pk * c.B1;
    const Matrix K1inv_Bt = k1.solve(c.B_sum.transpose());  // m x n
    const Matrix r =
        dPh[k] + H * (c.A_sum - c.B_sum * k1.solve(M.transpose())) +
        (c.A_sum.transpose() - M * K1inv_Bt) * H - H * c.B_sum * K1inv_Bt * H +
        Pk * c.A_hat + c.A_hat.transpose() * Pk +
        c.A1_sum.transpose() * Pk * c.A1_sum - c.A1.transpose() * Pk * c.A1 +
        c.Q_hat + S * k0.solve(S.transpose()) - M * k1.solve(M.transpose());
    res[k] = r.norm();
  }
  return res;
}

/// Returns P - P Bt (Rt + Bt' P Bt)^{-1} Bt' P, which is PSD whenever P is PSD
/// and Rt is PD.
inline Matrix schur_psd_certificate(const Matrix& P, const Matrix& Bt,
                                    const Matrix& Rt) {
  if (P.rows() != P.cols() || Bt.rows() != P.rows() || Rt.rows() != Rt.cols() ||
      Rt.rows() != Bt.cols())
    throw StructuralError("schur_psd_certificate: dimension mismatch");
  if (!(min_eigenvalue(Rt) > 0.0))
    throw DomainError("schur_psd_certificate: Rt must be positive definite");
  const Matrix K = symmetrize(Rt + Bt.transpose() * P * Bt);
  const Eigen::LLT<Matrix> llt(K);
  const Matrix PB = P * Bt;
  return symmetrize(P - PB * llt.solve(PB.transpose()));
}

/// The same quantity via the symmetric square root:
/// P^{1/2} (I + P^{1/2} Bt Rt^{-1} Bt' P^{1/2})^{-1} P^{1/2}.
inline Matrix schur_psd_certificate_sqrt(const Matrix& P, const Matrix& Bt,
                                         const Matrix& Rt) {
  const Matrix S = sym_sqrt(P);
  const Eigen::LLT<Matrix> rllt(symmetrize(Rt));
  const Matrix inner = Matrix::Identity(P.rows(), P.cols()) +
                       S * Bt * rllt.solve(Bt.transpose()) * S;
  return symmetrize(S * inner.llt().solve(S));
}

}  // namespace mflq
