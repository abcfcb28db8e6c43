#include <gtest/gtest.h>

#include <cmath>

#include "mflq/mflq.hpp"

using namespace mflq;
using scalar::ScalarLQParams;

namespace {

// Reference int_0^T p0 by composite Gauss-Legendre (3 points per panel),
// independent of the grid quadrature used by the library.
double p0_integral_gauss(const ScalarLQParams& prm, int panels) {
  const double x[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double h = prm.T / panels;
  double s = 0.0;
  for (int i = 0; i < panels; ++i)
    for (int j = 0; j < 3; ++j) s += 0.5 * h * w[j] * scalar::p0(prm, (i + 0.5 + 0.5 * x[j]) * h);
  return s;
}

}  // namespace

TEST(ScalarClosedForm, SolvesTheRiccatiEquation) {
  const ScalarLQParams prm{1.3, 0.7, 0.9, 1.5, 1.0};
  for (double s : {0.0, 0.4, 1.1, 1.5}) {
    const double d = 1e-5;
    const double dp0 = (scalar::p0(prm, s + d) - scalar::p0(prm, s - d)) / (2 * d);
    const double v = scalar::p0(prm, s);
    EXPECT_NEAR(dp0 + v - prm.b * prm.b * v * v, 0.0, 1e-8);
  }
  EXPECT_DOUBLE_EQ(scalar::p0(prm, prm.T), prm.g0);
  EXPECT_DOUBLE_EQ(scalar::p(prm, prm.T), prm.g0 + prm.g);
}

TEST(ScalarClosedForm, UnitParametersAreAFixedPoint) {
  const ScalarLQParams prm{1.0, 1.0, 1.0, 1.0, 1.0};
  for (double s : {0.0, 0.25, 0.5, 1.0}) EXPECT_EQ(scalar::p0(prm, s), 1.0);
}

TEST(ScalarClosedForm, IntegralMatchesIndependentQuadrature) {
  for (const ScalarLQParams& prm :
       {ScalarLQParams{1.0, 1.0, 1.0, 1.0, 1.0}, ScalarLQParams{0.5, 2.0, 1.0, 3.0, 1.0},
        ScalarLQParams{2.0, 0.1, 1.0, 0.5, 1.0}, ScalarLQParams{0.0, 0.7, 1.0, 1.0, 1.0}}) {
    EXPECT_NEAR(scalar::p0_integral(prm), p0_integral_gauss(prm, 400), 1e-12);
  }
}

TEST(ScalarClosedForm, StandardTerminalVariance) {
  const ScalarLQParams prm{1.0, 1.0, 1.0, 1.0, 1.0};
  const double v = scalar::var_X0bar_T(prm, TimeGrid(1.0, 64));
  EXPECT_NEAR(v, std::exp(-2.0) * (std::exp(1.0) - 1.0), 1e-15);
}

TEST(ScalarPi, MatchesGeneralEngine) {
  const ScalarLQParams prm{1.1, 0.5, 2.0, 1.0, 1.0};
  const TimeGrid g(prm.T, 512);
  const auto pi = scalar::pi_solve(prm, g);
  const RiccatiSolution ric = solve_riccati(scalar::modified_problem(prm), g);
  double dpi = 0.0, dp = 0.0;
  for (int k = 0; k < g.nodes(); ++k) {
    dpi = std::max(dpi, std::abs(ric.Pi[k](0, 0) - pi[k]));
    dp = std::max(dp, std::abs(ric.P[k](0, 0) - scalar::p(prm, g.time(k))));
  }
  EXPECT_LT(dpi, 1e-10);
  EXPECT_LT(dp, 1e-10);
}

TEST(Tradeoff, UnitParameters) {
  const ScalarLQParams prm{1.0, 1.0, 1.0, 1.0, 1.0};
  const scalar::TradeoffReport r = scalar::tradeoff_report(prm, TimeGrid(1.0, 4096));
  EXPECT_TRUE(r.all_pass());
  EXPECT_TRUE(r.cost_order);
  EXPECT_EQ(r.J0_standard, 1.0);
  EXPECT_LT(r.var_T_modified, r.var_T_standard);
  ASSERT_TRUE(r.bound_rhs.has_value());
  EXPECT_LE(r.bound_lhs, *r.bound_rhs);
  EXPECT_GE(r.bound_lhs, 0.0);
}

TEST(Tradeoff, HoldsAcrossParameterSweep) {
  for (double b : {0.5, 1.0, 2.0})
    for (double g0 : {0.2, 1.0, 3.0})
      for (double g : {0.1, 1.0, 5.0})
        for (double T : {0.5, 2.0}) {
          const ScalarLQParams prm{b, g0, g, T, 1.3};
          const auto r = scalar::tradeoff_report(prm, TimeGrid(T, 512));
          EXPECT_TRUE(r.all_pass()) << b << " " << g0 << " " << g << " " << T;
          EXPECT_TRUE(r.cost_order) << b << " " << g0 << " " << g << " " << T;
        }
}

TEST(Tradeoff, ModifiedCostAgreesWithMomentEngine) {
  const ScalarLQParams prm{0.8, 0.6, 1.5, 1.2, 0.9};
  const TimeGrid g(prm.T, 2048);
  const auto r = scalar::tradeoff_report(prm, g);
  const ProblemDef mod = scalar::modified_problem(prm);
  const AffinePolicy pol = synthesize(mod, solve_riccati(mod, g));
  const MomentTrajectory tr = propagate(scalar::standard_problem(prm), pol, g);
  EXPECT_NEAR(tr.total_cost, r.J0_modified, 1e-10);
  EXPECT_NEAR(tr.cov.back()(0, 0), r.var_T_modified, 1e-10);
}

TEST(Tradeoff, ZeroTerminalWeightHasNoPriceBound) {
  const ScalarLQParams prm{1.0, 0.0, 1.0, 1.0, 1.0};
  const auto r = scalar::tradeoff_report(prm, TimeGrid(1.0, 256));
  EXPECT_FALSE(r.price_bound.has_value());
  EXPECT_FALSE(r.bound_rhs.has_value());
  EXPECT_EQ(r.J0_standard, 0.0);
}

TEST(Tradeoff, RejectsInvalidParameters) {
  EXPECT_THROW(scalar::tradeoff_report({1.0, -1.0, 1.0, 1.0, 1.0}, TimeGrid(1.0, 8)),
               DomainError);
  EXPECT_THROW(scalar::tradeoff_report({1.0, 1.0, 0.0, 1.0, 1.0}, TimeGrid(1.0, 8)),
               DomainError);
  EXPECT_THROW(scalar::tradeoff_report({1.0, 1.0, 1.0, 1.0, 1.0}, TimeGrid(2.0, 8)),
               StructuralError);
}
