#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "mflq/instances.hpp"
#include "mflq/mflq.hpp"

using namespace mflq;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix M(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) M(i, j++) = v;
    ++i;
  }
  return M;
}

ProblemDef classical_2x1() {
  ProblemDef p = ProblemDef::zeros(2, 1, 1.0);
  p.A = mat({{0.0, 1.0}, {-1.0, 0.0}});
  p.B = mat({{0.0}, {1.0}});
  p.A1 = mat({{0.1, 0.0}, {0.0, 0.2}});
  p.Q = Matrix(Matrix::Identity(2, 2));
  p.R = Matrix(Matrix::Identity(1, 1));
  p.G = Matrix::Identity(2, 2);
  p.x0 = Vector::Ones(2);
  return p;
}

}  // namespace

TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  const auto r = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r[0], 0x6627e8d5u);
  EXPECT_EQ(r[1], 0xe169c58du);
  EXPECT_EQ(r[2], 0xbc57ac4cu);
  EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto r = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                      {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r[0], 0x408f276du);
  EXPECT_EQ(r[1], 0x41c83b0eu);
  EXPECT_EQ(r[2], 0xa20bc7c6u);
  EXPECT_EQ(r[3], 0x6d5451fdu);
}

TEST(NormalStream, AddressableAndDistinctStreams) {
  const NormalStream a(42), b(42), c(43);
  EXPECT_EQ(a(7, 11), b(7, 11));
  EXPECT_NE(a(7, 11), c(7, 11));
  EXPECT_NE(a(7, 11), a(8, 11));
  const auto pr = a.pair(3, 5);
  EXPECT_EQ(pr[0], a(3, 10));
  EXPECT_EQ(pr[1], a(3, 11));
}

TEST(NormalStream, MomentsMatchStandardNormal) {
  const NormalStream g(2024);
  const int n = 200000;
  double s1 = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = g(i % 17, i);
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(TimeGrid, NodesAndSteps) {
  const TimeGrid g(2.0, 8);
  EXPECT_EQ(g.nodes(), 9);
  EXPECT_DOUBLE_EQ(g.step(), 0.25);
  EXPECT_DOUBLE_EQ(g.time(0), 0.0);
  EXPECT_DOUBLE_EQ(g.time(8), 2.0);
  EXPECT_THROW(TimeGrid(1.0, 0), Error);
  EXPECT_THROW(TimeGrid(-1.0, 4), Error);
}

TEST(Quadrature, SimpsonExactForCubics) {
  const TimeGrid g(1.0, 10);
  std::vector<double> f(g.nodes());
  for (int k = 0; k < g.nodes(); ++k) {
    const double t = g.time(k);
    f[k] = 1.0 + t + t * t + t * t * t;
  }
  EXPECT_NEAR(simpson(f, g.step()), 1.0 + 0.5 + 1.0 / 3.0 + 0.25, 1e-14);
  const auto c = cumulative_integral(f, g.step());
  for (int k = 0; k < g.nodes(); ++k) {
    const double t = g.time(k);
    EXPECT_NEAR(c[k], t + t * t / 2 + t * t * t / 3 + t * t * t * t / 4, 1e-13);
  }
}

TEST(Schedule, ConstantAndLinearInterpolation) {
  const CoefficientSchedule c = CoefficientSchedule::constant(mat({{2.0}}));
  EXPECT_DOUBLE_EQ(c.at(0.3)(0, 0), 2.0);
  const CoefficientSchedule s =
      CoefficientSchedule::sampled({0.0, 1.0, 2.0}, {mat({{0.0}}), mat({{2.0}}), mat({{0.0}})});
  EXPECT_DOUBLE_EQ(s.at(0.5)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.at(1.0)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.at(1.25)(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(eval_schedule(s, 2.0, 2.0)(0, 0), 0.0);
  EXPECT_THROW(eval_schedule(s, 2.5, 2.0), Error);
}

TEST(Schedule, RejectsMalformedSamples) {
  EXPECT_THROW(CoefficientSchedule::sampled({0.0, 0.0}, {mat({{1.0}}), mat({{1.0}})}),
               StructuralError);
  EXPECT_THROW(CoefficientSchedule::sampled({0.0}, {}), StructuralError);
  EXPECT_THROW(CoefficientSchedule::sampled({0.0, 1.0}, {mat({{1.0}}), mat({{1.0, 2.0}})}),
               StructuralError);
}

TEST(Schedule, AddMergesSampleTimes) {
  const CoefficientSchedule a = CoefficientSchedule::sampled(
      {0.0, 1.0}, {mat({{0.0}}), mat({{1.0}})});
  const CoefficientSchedule b = CoefficientSchedule::sampled(
      {0.0, 0.5, 1.0}, {mat({{1.0}}), mat({{3.0}}), mat({{1.0}})});
  const CoefficientSchedule s = add(a, b);
  for (double t : {0.0, 0.2, 0.5, 0.8, 1.0})
    EXPECT_NEAR(s.at(t)(0, 0), a.at(t)(0, 0) + b.at(t)(0, 0), 1e-15);
}

TEST(Problem, SumsOfCoefficients) {
  ProblemDef p = classical_2x1();
  p.A_hat = mat({{1.0, 0.0}, {0.0, 1.0}});
  const Coefficients c = p.at(0.5);
  EXPECT_TRUE(c.A_sum.isApprox(c.A + c.A_hat));
  EXPECT_TRUE(c.Q_sum.isApprox(c.Q + c.Q_hat));
  EXPECT_FALSE(p.is_classical());
  EXPECT_TRUE(classical_2x1().is_classical());
}

TEST(Problem, StructuralChecks) {
  ProblemDef p = classical_2x1();
  p.B = Matrix(Matrix::Zero(2, 2));
  EXPECT_THROW(check_structure(p), StructuralError);

  p = classical_2x1();
  p.Q = mat({{1.0, 0.5}, {0.0, 1.0}});
  EXPECT_THROW(check_structure(p), StructuralError);

  p = classical_2x1();
  p.x0 = Vector::Zero(3);
  EXPECT_THROW(check_structure(p), StructuralError);

  p = classical_2x1();
  p.Q = CoefficientSchedule::sampled({0.0, 0.5}, {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  EXPECT_THROW(check_structure(p), StructuralError);

  p = classical_2x1();
  p.T = 0.0;
  EXPECT_THROW(check_structure(p), DomainError);
}

TEST(Validate, ReportsStrongestLevel) {
  const ProblemDef p = classical_2x1();
  const TimeGrid g(p.T, 16);
  EXPECT_EQ(validate(p, kDefaultDelta, g).level, AssumptionLevel::H2_double_prime);

  ProblemDef weak = p;
  weak.R = Matrix(Matrix::Zero(1, 1));
  const ValidationReport r = validate(weak, kDefaultDelta, g);
  EXPECT_EQ(r.level, AssumptionLevel::H2_prime);
  EXPECT_TRUE(r.passes("R >= 0"));
  EXPECT_FALSE(r.passes("R >= delta I"));

  ProblemDef bad = p;
  bad.Q_hat = Matrix(-2.0 * Matrix::Identity(2, 2));
  const ValidationReport rb = validate(bad, kDefaultDelta, g);
  EXPECT_EQ(rb.level, AssumptionLevel::H2);
  EXPECT_FALSE(rb.passes("Q + Q_hat >= 0"));
  EXPECT_NEAR(rb.find("Q + Q_hat >= 0")->min_eigenvalue, -1.0, 1e-12);
}

TEST(Validate, InspectsSampleTimesBetweenNodes) {
  ProblemDef p = classical_2x1();
  // Dips below zero only at t = 0.3, which is not a node of the 4-step grid.
  p.Q = CoefficientSchedule::sampled(
      {0.0, 0.3, 1.0},
      {Matrix(Matrix::Identity(2, 2)), Matrix(-Matrix::Identity(2, 2)),
       Matrix(Matrix::Identity(2, 2))});
  const ValidationReport r = validate(p, kDefaultDelta, TimeGrid(1.0, 4));
  EXPECT_FALSE(r.passes("Q >= 0"));
  EXPECT_NEAR(r.find("Q >= 0")->worst_time, 0.3, 1e-15);
}

TEST(Validate, RandomFamilyMeetsStrongestLevel) {
  for (int i = 0; i < 10; ++i) {
    const ProblemDef p = random_instance(99, i);
    EXPECT_EQ(validate(p, kDefaultDelta, TimeGrid(p.T, 8)).level,
              AssumptionLevel::H2_double_prime);
  }
}

TEST(ModifiedLQ, BuildsVariancePenalties) {
  const ProblemDef base = classical_2x1();
  const ProblemDef mod = build_modified_lq(base, 0.5, 0.25, 2.0);
  const Coefficients c = mod.at(0.0);
  EXPECT_TRUE(c.Q.isApprox(Matrix(1.5 * Matrix::Identity(2, 2))));
  EXPECT_TRUE(c.Q_hat.isApprox(Matrix(-0.5 * Matrix::Identity(2, 2))));
  EXPECT_TRUE(c.Q_sum.isApprox(Matrix::Identity(2, 2)));
  EXPECT_NEAR(c.R(0, 0), 1.25, 1e-15);
  EXPECT_NEAR(c.R_sum(0, 0), 1.0, 1e-15);
  EXPECT_TRUE(mod.G.isApprox(Matrix(3.0 * Matrix::Identity(2, 2))));
  EXPECT_TRUE((mod.G + mod.G_hat).isApprox(base.G));
  EXPECT_EQ(validate(mod, kDefaultDelta, TimeGrid(1.0, 8)).level,
            AssumptionLevel::H2_double_prime);
}

TEST(ModifiedLQ, RejectsInvalidInputs) {
  const ProblemDef base = classical_2x1();
  EXPECT_THROW(build_modified_lq(base, -1.0, 0.0, 0.0), DomainError);
  EXPECT_THROW(build_modified_lq(base, 0.0, 0.0, -0.1), DomainError);
  ProblemDef mf = base;
  mf.A_hat = Matrix(Matrix::Identity(2, 2));
  EXPECT_THROW(build_modified_lq(mf, 0.1, 0.1, 0.1), DomainError);
}

TEST(ModifiedLQ, TimeVaryingPenalty) {
  const ProblemDef base = classical_2x1();
  const CoefficientSchedule q = CoefficientSchedule::sampled({0.0, 1.0}, {mat({{0.0}}), mat({{1.0}})});
  const ProblemDef mod =
      build_modified_lq(base, base.Q, base.R, base.G, q, mat({{0.0}}), 0.0);
  EXPECT_NEAR(mod.at(0.5).Q_hat(1, 1), -0.5, 1e-15);
  EXPECT_NEAR(mod.at(0.5).Q_sum(1, 1), 1.0, 1e-15);
}

TEST(Instances, DeterministicAndVaried) {
  const ProblemDef a = random_instance(5, 3);
  const ProblemDef b = random_instance(5, 3);
  EXPECT_TRUE(a.A.at(0) == b.A.at(0));
  EXPECT_TRUE(a.x0 == b.x0);
  std::set<int> dims;
  for (int i = 0; i < 20; ++i) dims.insert(random_instance(5, i).n);
  EXPECT_GT(dims.size(), 1u);
}
