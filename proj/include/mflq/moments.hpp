#pragma once

#include <vector>

#include "mflq/core.hpp"
#include "mflq/feedback.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"

namespace mflq {

/// Mean m = E[X] and centered covariance Sigma = var[X] at every node, with
/// the running cost accumulated up to each node.
struct MomentTrajectory {
  TimeGrid grid{1.0, 2};
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
  std::vector<double> running_cost;
  double terminal_cost = 0.0;
  double total_cost = 0.0;
};

namespace moments_detail {

struct PolicyValue {
  Matrix F, F_bar;
  Vector c;
};

inline PolicyValue node_value(const AffinePolicy& pol, int k) {
  return {pol.F[k], pol.F_bar[k], pol.c[k]};
}

inline PolicyValue midpoint_value(const AffinePolicy& pol, int k) {
  return {midpoint_cubic(pol.F, k), midpoint_cubic(pol.F_bar, k),
          midpoint_cubic(pol.c, k)};
}

struct State {
  Vector m;
  Matrix S;
};

inline State rhs(const Coefficients& c, const PolicyValue& u, const State& x) {
  const Matrix drift = c.A + c.B * u.F;
  const Matrix diff = c.A1 + c.B1 * u.F;
  const Vector psi = (c.A1_sum + c.B1_sum * u.F_bar) * x.m + c.B1_sum * u.c;
  State d;
  d.m = (c.A_sum + c.B_sum * u.F_bar) * x.m + c.B_sum * u.c;
  d.S = drift * x.S + x.S * drift.transpose() + diff * x.S * diff.transpose() +
        psi * psi.transpose();
  d.S = symmetrize(d.S);
  return d;
}

inline State axpy(const State& x, double a, const State& d) {
  return {x.m + a * d.m, symmetrize(x.S + a * d.S)};
}

/// Expected running-cost integrand at one instant.
inline double running_integrand(const Coefficients& c, const PolicyValue& u,
                                const Vector& m, const Matrix& S) {
  const Vector mu = u.F_bar * m + u.c;
  return (c.Q * S).trace() + m.dot(c.Q_sum * m) +
         (c.R * u.F * S * u.F.transpose()).trace() + mu.dot(c.R_sum * mu);
}

}  // namespace moments_detail

/// Propagates the exact first and second moments of the controlled state
/// under an affine policy (RK4; gains at half steps from a cubic interpolant
/// of the node values) and accumulates the expected cost.
inline MomentTrajectory propagate(const ProblemDef& prob, const AffinePolicy& pol,
                                  const TimeGrid& grid) {
  using namespace moments_detail;
  check_structure(prob);
  check_policy(pol, prob);
  require_same_grid(pol.grid, grid, "propagate");
  if (std::abs(grid.horizon() - prob.T) > time_tolerance(prob.T))
    throw StructuralError("propagate: grid horizon differs from problem horizon");

  const int N = grid.steps();
  const double h = grid.step();
  MomentTrajectory tr;
  tr.grid = grid;
  tr.mean.resize(grid.nodes());
  tr.cov.resize(grid.nodes());
  tr.mean[0] = prob.x0;
  tr.cov[0] = Matrix::Zero(prob.n, prob.n);

  std::vector<double> integrand(grid.nodes());
  Coefficients c0 = prob.at(grid.time(0));
  for (int k = 0; k < N; ++k) {
    const double t0 = grid.time(k);
    const Coefficients cm = prob.at(t0 + 0.5 * h);
    const Coefficients c1 = prob.at(grid.time(k + 1));
    const PolicyValue u0 = node_value(pol, k);
    const PolicyValue um = midpoint_value(pol, k);
    const PolicyValue u1 = node_value(pol, k + 1);
    const State x{tr.mean[k], tr.cov[k]};
    integrand[k] = running_integrand(c0, u0, x.m, x.S);
    const State d1 = rhs(c0, u0, x);
    const State d2 = rhs(cm, um, axpy(x, 0.5 * h, d1));
    const State d3 = rhs(cm, um, axpy(x, 0.5 * h, d2));
    const State d4 = rhs(c1, u1, axpy(x, h, d3));
    tr.mean[k + 1] = x.m + h / 6.0 * (d1.m + 2.0 * d2.m + 2.0 * d3.m + d4.m);
    tr.cov[k + 1] =
        symmetrize(x.S + h / 6.0 * (d1.S + 2.0 * d2.S + 2.0 * d3.S + d4.S));
    c0 = c1;
  }
  integrand[N] = running_integrand(c0, node_value(pol, N), tr.mean[N], tr.cov[N]);

  tr.running_cost = cumulative_integral(integrand, h);
  const Vector& mT = tr.mean[N];
  tr.terminal_cost = (prob.G * tr.cov[N]).trace() + mT.dot((prob.G + prob.G_hat) * mT);
  tr.total_cost = tr.running_cost[N] + tr.terminal_cost;
  return tr;
}

/// Expected cost of `pol` from a trajectory produced by propagate(pol);
/// Simpson's rule on the grid, so the step count must be even.
inline double cost(const ProblemDef& prob, const AffinePolicy& pol,
                   const MomentTrajectory& traj) {
  using namespace moments_detail;
  require_same_grid(pol.grid, traj.grid, "cost");
  if (traj.grid.steps() % 2 != 0)
    throw StructuralError("cost: Simpson quadrature needs an even step count");
  std::vector<double> integrand(traj.grid.nodes());
  for (int k = 0; k < traj.grid.nodes(); ++k) {
    integrand[k] = running_integrand(prob.at(traj.grid.time(k)), node_value(pol, k),
                                     traj.mean[k], traj.cov[k]);
  }
  const int N = traj.grid.steps();
  const Vector& mT = traj.mean[N];
  return simpson(integrand, traj.grid.step()) + (prob.G * traj.cov[N]).trace() +
         mT.dot((prob.G + prob.G_hat) * mT);
}

/// <Pi(0) x0, x0>
inline double optimal_value(const RiccatiSolution& ric, const Vector& x0) {
  return x0.dot(ric.Pi.front() * x0);
}

/// J(x; pol) - <Pi(0)x, x> computed from the completed squares
///   int_0^T tr((F-F*)' K0 (F-F*) Sigma) + <K1 d, d> ds,  d = (F_bar-F_bar*) m + c.
inline double completion_gap(const ProblemDef& prob, const RiccatiSolution& ric,
                             const AffinePolicy& pol, const MomentTrajectory& traj) {
  require_same_grid(ric.grid, pol.grid, "completion_gap");
  require_same_grid(ric.grid, traj.grid, "completion_gap");
  if (ric.grid.steps() % 2 != 0)
    throw StructuralError("completion_gap: Simpson quadrature needs an even step count");
  const AffinePolicy opt = synthesize(prob, ric);
  std::vector<double> integrand(ric.grid.nodes());
  for (int k = 0; k < ric.grid.nodes(); ++k) {
    const Matrix dF = pol.F[k] - opt.F[k];
    const Vector d = (pol.F_bar[k] - opt.F_bar[k]) * traj.mean[k] + pol.c[k];
    integrand[k] =
        (dF.transpose() * ric.K0[k] * dF * traj.cov[k]).trace() + d.dot(ric.K1[k] * d);
  }
  return simpson(integrand, ric.grid.step());
}

}  // namespace mflq
