#include <gtest/gtest.h>

#include "mflq/instances.hpp"
#include "mflq/mflq.hpp"

using namespace mflq;

namespace {

double worst(const std::vector<Matrix>& v) {
  double w = 0.0;
  for (const auto& M : v) w = std::max(w, max_abs(M));
  return w;
}

}  // namespace

TEST(Synthesize, ScalarGainsMatchClosedForm) {
  const scalar::ScalarLQParams prm{0.8, 0.5, 1.0, 1.0, 1.0};
  const ProblemDef prob = scalar::standard_problem(prm);
  const RiccatiSolution ric = solve_riccati(prob, 1024);
  const AffinePolicy pol = synthesize(prob, ric);
  for (int k = 0; k < ric.grid.nodes(); k += 128) {
    const double p0 = scalar::p0(prm, ric.grid.time(k));
    EXPECT_NEAR(pol.F[k](0, 0), -prm.b * p0, 1e-11);
    EXPECT_NEAR(pol.F_bar[k](0, 0), -prm.b * p0, 1e-11);
    EXPECT_EQ(pol.c[k](0), 0.0);
  }
}

TEST(Synthesize, StationarityHoldsOnRandomInstances) {
  for (int i = 0; i < 10; ++i) {
    const ProblemDef p = random_instance(21, i);
    const RiccatiSolution ric = solve_riccati(p, 64);
    const StationarityResidual r = stationarity_residual(p, ric, synthesize(p, ric));
    EXPECT_LT(worst(r.Mc), 1e-12) << "instance " << i;
    EXPECT_LT(worst(r.Mm), 1e-12) << "instance " << i;
  }
}

TEST(Synthesize, PerturbationResidualIsLinearInGains) {
  // The residual is affine in the gains with slopes K0 and K1, so a
  // perturbation eps*D of the optimum leaves eps*K0*D and eps*K1*D.
  const ProblemDef p = random_instance(21, 3);
  const RiccatiSolution ric = solve_riccati(p, 32);
  const AffinePolicy opt = synthesize(p, ric);
  const NormalStream g(5);
  Matrix D(p.m, p.n), Db(p.m, p.n);
  for (int i = 0; i < D.size(); ++i) D.data()[i] = g(0, i), Db.data()[i] = g(1, i);
  for (double eps : {1e-3, 1e-1}) {
    AffinePolicy pert = opt;
    for (int k = 0; k < ric.grid.nodes(); ++k) {
      pert.F[k] += eps * D;
      pert.F_bar[k] += eps * Db;
    }
    const StationarityResidual r = stationarity_residual(p, ric, pert);
    for (int k = 0; k < ric.grid.nodes(); ++k) {
      EXPECT_LT(max_abs(r.Mc[k] - eps * ric.K0[k] * D), 1e-12);
      EXPECT_LT(max_abs(r.Mm[k] - eps * ric.K1[k] * Db), 1e-12);
    }
  }
}

TEST(Synthesize, ClassicalReductionMatchesClassicalLaw) {
  ProblemDef p = random_instance(8, 1);
  for (auto* s : {&p.A_hat, &p.A1_hat, &p.B_hat, &p.B1_hat, &p.Q_hat, &p.R_hat})
    *s = Matrix(Matrix::Zero(s->rows(), s->cols()));
  p.G_hat.setZero();
  const RiccatiSolution ric = solve_riccati(p, 1024);
  const AffinePolicy mf = synthesize(p, ric);
  const AffinePolicy cl = classical_policy(p, p.R, ric.P, ric.grid);
  for (int k = 0; k < ric.grid.nodes(); ++k) {
    EXPECT_LT(max_abs(mf.F[k] - cl.F[k]), 1e-12);
    EXPECT_LT(max_abs(mf.F_bar[k] - cl.F_bar[k]), 1e-9);
  }
}

TEST(Adjoint, CoefficientsUseRiccatiPaths) {
  const ProblemDef p = random_instance(2, 5);
  const RiccatiSolution ric = solve_riccati(p, 16);
  const AffinePolicy pol = synthesize(p, ric);
  const AdjointCoefficients adj = adjoint_coefficients(p, ric);
  for (int k = 0; k < ric.grid.nodes(); ++k) {
    const Coefficients c = p.at(ric.grid.time(k));
    EXPECT_EQ(adj.Yc[k], ric.P[k]);
    EXPECT_EQ(adj.Ym[k], ric.Pi[k]);
    EXPECT_LT(max_abs(adj.Zc[k] - ric.P[k] * (c.A1 + c.B1 * pol.F[k])), 1e-13);
    EXPECT_LT(max_abs(adj.Zm[k] - ric.P[k] * (c.A1_sum + c.B1_sum * pol.F_bar[k])), 1e-13);
  }
}

TEST(Policy, InterpolatesBetweenNodes) {
  const TimeGrid g(1.0, 4);
  AffinePolicy pol = AffinePolicy::zero(g, 1, 1);
  for (int k = 0; k < g.nodes(); ++k) {
    pol.F[k](0, 0) = k;
    pol.F_bar[k](0, 0) = 2.0 * k;
    pol.c[k](0) = -k;
  }
  Matrix F, Fb;
  Vector c;
  policy_at(pol, 0.375, F, Fb, c);
  EXPECT_DOUBLE_EQ(F(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(Fb(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(c(0), -1.5);
  policy_at(pol, 1.0, F, Fb, c);
  EXPECT_DOUBLE_EQ(F(0, 0), 4.0);
}

TEST(Policy, DimensionChecks) {
  const ProblemDef p = scalar::standard_problem({});
  AffinePolicy pol = AffinePolicy::zero(TimeGrid(1.0, 4), 2, 1);
  EXPECT_THROW(check_policy(pol, p), StructuralError);
  pol = AffinePolicy::zero(TimeGrid(1.0, 4), 1, 1);
  pol.c.pop_back();
  EXPECT_THROW(check_policy(pol, p), StructuralError);
  pol = AffinePolicy::zero(TimeGrid(1.0, 4), 1, 1);
  pol.F[2](0, 0) = std::nan("");
  EXPECT_THROW(check_policy(pol, p), StructuralError);
}
