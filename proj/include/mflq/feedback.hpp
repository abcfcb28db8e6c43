#pragma once

#include <vector>

#include "mflq/core.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"

namespace mflq {

/// Node-sampled affine feedback u = F (X - E[X]) + F_bar E[X] + c.
struct AffinePolicy {
  TimeGrid grid{1.0, 2};
  std::vector<Matrix> F;      // m x n
  std::vector<Matrix> F_bar;  // m x n
  std::vector<Vector> c;      // m

  static AffinePolicy zero(const TimeGrid& grid, int n, int m) {
    AffinePolicy p;
    p.grid = grid;
    p.F.assign(grid.nodes(), Matrix::Zero(m, n));
    p.F_bar.assign(grid.nodes(), Matrix::Zero(m, n));
    p.c.assign(grid.nodes(), Vector::Zero(m));
    return p;
  }

  int n() const { return static_cast<int>(F.front().cols()); }
  int m() const { return static_cast<int>(F.front().rows()); }
};

inline void check_policy(const AffinePolicy& pol, const ProblemDef& prob) {
  const auto nodes = static_cast<std::size_t>(pol.grid.nodes());
  if (pol.F.size() != nodes || pol.F_bar.size() != nodes || pol.c.size() != nodes)
    throw StructuralError("policy: schedule length does not match its grid");
  for (std::size_t k = 0; k < nodes; ++k) {
    if (pol.F[k].rows() != prob.m || pol.F[k].cols() != prob.n ||
        pol.F_bar[k].rows() != prob.m || pol.F_bar[k].cols() != prob.n ||
        pol.c[k].size() != prob.m)
      throw StructuralError("policy: gain dimensions do not match the problem");
    if (!pol.F[k].allFinite() || !pol.F_bar[k].allFinite() || !pol.c[k].allFinite())
      throw StructuralError("policy: non-finite gain entries");
  }
}

/// Coefficients of the adjoint pair in the decoupled representation
///   Y = Yc (X - E[X]) + Ym E[X],  Z = Zc (X - E[X]) + Zm E[X].
struct AdjointCoefficients {
  std::vector<Matrix> Yc, Ym, Zc, Zm;
};

namespace feedback_detail {

/// Optimal gains at node k: F = -K0^{-1}(B'P + B1'P A1) and
/// F_bar = -K1^{-1}((B+B_hat)'Pi + (B1+B1_hat)'P(A1+A1_hat)).
inline void optimal_gains(const Coefficients& c, const Matrix& P, const Matrix& Pi,
                          const Matrix& K0, const Matrix& K1, double t,
                          Matrix& F, Matrix& F_bar) {
  const SpdSolver k0(K0, t, "K0");
  const SpdSolver k1(K1, t, "K1");
  F = -k0.solve(c.B.transpose() * P + c.B1.transpose() * P * c.A1);
  F_bar = -k1.solve(c.B_sum.transpose() * Pi +
                    c.B1_sum.transpose() * P * c.A1_sum);
}

}  // namespace feedback_detail

/// The optimal state-feedback law (c = 0).
inline AffinePolicy synthesize(const ProblemDef& prob, const RiccatiSolution& ric) {
  AffinePolicy pol = AffinePolicy::zero(ric.grid, prob.n, prob.m);
  for (int k = 0; k < ric.grid.nodes(); ++k) {
    const double t = ric.grid.time(k);
    feedback_detail::optimal_gains(prob.at(t), ric.P[k], ric.Pi[k], ric.K0[k],
                                   ric.K1[k], t, pol.F[k], pol.F_bar[k]);
  }
  return pol;
}

/// Classical feedback u = -(R0 + B1'P0 B1)^{-1}(B'P0 + B1'P0 A1) X as an
/// AffinePolicy (F = F_bar, c = 0).
inline AffinePolicy classical_policy(const ProblemDef& dynamics,
                                     const CoefficientSchedule& R0,
                                     const std::vector<Matrix>& P0,
                                     const TimeGrid& grid) {
  AffinePolicy pol = AffinePolicy::zero(grid, dynamics.n, dynamics.m);
  for (int k = 0; k < grid.nodes(); ++k) {
    const double t = grid.time(k);
    const Coefficients c = dynamics.at(t);
    const Matrix& P = P0[k];
    const SpdSolver k0(eval_schedule(R0, t, dynamics.T) + c.B1.transpose() * P * c.B1,
                       t, "R0 + B1' P0 B1");
    pol.F[k] = -k0.solve(c.B.transpose() * P + c.B1.transpose() * P * c.A1);
    pol.F_bar[k] = pol.F[k];
  }
  return pol;
}

inline AdjointCoefficients adjoint_coefficients(const ProblemDef& prob,
                                                const RiccatiSolution& ric) {
  AdjointCoefficients adj;
  const int nodes = ric.grid.nodes();
  adj.Yc.resize(nodes);
  adj.Ym.resize(nodes);
  adj.Zc.resize(nodes);
  adj.Zm.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    const double t = ric.grid.time(k);
    const Coefficients c = prob.at(t);
    Matrix F, F_bar;
    feedback_detail::optimal_gains(c, ric.P[k], ric.Pi[k], ric.K0[k], ric.K1[k],
                                   t, F, F_bar);
    const Matrix& P = ric.P[k];
    adj.Yc[k] = P;
    adj.Ym[k] = ric.Pi[k];
    adj.Zc[k] = P * c.A1 + P * c.B1 * F;
    adj.Zm[k] = P * c.A1_sum + P * c.B1_sum * F_bar;
  }
  return adj;
}

/// Coefficient matrices of the stationarity expression
///   R u + B'Y + B1'Z + R_hat E[u] + B_hat'E[Y] + B1_hat'E[Z]
/// in (X - E[X]) and E[X]. Y uses the Riccati coefficients; Z is the
/// diffusion of Y under the given policy, Z = P (A1 X + B1 u + A1_hat E[X] +
/// B1_hat E[u]).
struct StationarityResidual {
  std::vector<Matrix> Mc;
  std::vector<Matrix> Mm;
};

inline StationarityResidual stationarity_residual(const ProblemDef& prob,
                                                  const RiccatiSolution& ric,
                                                  const AffinePolicy& pol) {
  require_same_grid(ric.grid, pol.grid, "stationarity_residual");
  check_policy(pol, prob);
  StationarityResidual res;
  const int nodes = ric.grid.nodes();
  res.Mc.resize(nodes);
  res.Mm.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    const Coefficients c = prob.at(ric.grid.time(k));
    const Matrix& P = ric.P[k];
    const Matrix Zc = P * (c.A1 + c.B1 * pol.F[k]);
    const Matrix Zm = P * (c.A1_sum + c.B1_sum * pol.F_bar[k]);
    res.Mc[k] = c.R * pol.F[k] + c.B.transpose() * P + c.B1.transpose() * Zc;
    res.Mm[k] = c.R_sum * pol.F_bar[k] + c.B_sum.transpose() * ric.Pi[k] +
                c.B1_sum.transpose() * Zm;
  }
  return res;
}

/// Evaluates the policy at an arbitrary time by linear interpolation between
/// nodes.
inline void policy_at(const AffinePolicy& pol, double t, Matrix& F, Matrix& F_bar,
                      Vector& c) {
  const double h = pol.grid.step();
  const int N = pol.grid.steps();
  double pos = std::clamp(t / h, 0.0, static_cast<double>(N));
  int k = std::min(static_cast<int>(pos), N - 1);
  const double w = pos - k;
  F = (1.0 - w) * pol.F[k] + w * pol.F[k + 1];
  F_bar = (1.0 - w) * pol.F_bar[k] + w * pol.F_bar[k + 1];
  c = (1.0 - w) * pol.c[k] + w * pol.c[k + 1];
}

}  // namespace mflq
