#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mflq/core.hpp"
#include "mflq/problem.hpp"

namespace mflq::scalar {

/// One-dimensional benchmark: dX = b u ds + X dW, X(0) = x, standard cost
/// E[int u^2 + g0 X(T)^2] and its variance-penalized variant adding
/// g var[X(T)].
struct ScalarLQParams {
  double b = 1.0;
  double g0 = 1.0;
  double g = 1.0;
  double T = 1.0;
  double x = 1.0;

  void check() const {
    if (!std::isfinite(b) || !std::isfinite(x))
      throw DomainError("scalar: b and x must be finite");
    if (!(g0 >= 0.0)) throw DomainError("scalar: g0 must be >= 0");
    if (!(g > 0.0)) throw DomainError("scalar: g must be > 0");
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("scalar: T must be > 0");
  }
};

namespace detail {

inline double riccati_closed_form(double b, double terminal, double T, double s) {
  const double e = std::exp(T - s);
  return e * terminal / ((e - 1.0) * b * b * terminal + 1.0);
}

}  // namespace detail

/// Solution of p0' + p0 - b^2 p0^2 = 0, p0(T) = g0.
inline double p0(const ScalarLQParams& prm, double s) {
  return detail::riccati_closed_form(prm.b, prm.g0, prm.T, s);
}

/// Same equation with terminal value g0 + g.
inline double p(const ScalarLQParams& prm, double s) {
  return detail::riccati_closed_form(prm.b, prm.g0 + prm.g, prm.T, s);
}

/// Closed-form int_0^T p0 = ln((e^T - 1) b^2 g0 + 1) / b^2 (T g0 when b = 0).
inline double p0_integral(const ScalarLQParams& prm) {
  const double b2 = prm.b * prm.b;
  if (b2 == 0.0) return prm.g0 * std::expm1(prm.T);
  return std::log1p(std::expm1(prm.T) * b2 * prm.g0) / b2;
}

inline std::vector<double> tabulate(const TimeGrid& grid, double (*f)(const ScalarLQParams&, double),
                                    const ScalarLQParams& prm) {
  std::vector<double> v(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k) v[k] = f(prm, grid.time(k));
  return v;
}

/// pi' - b^2 pi^2 + p = 0, pi(T) = g0, integrated backward with RK4 (p is
/// evaluated in closed form at every stage).
inline std::vector<double> pi_solve(const ScalarLQParams& prm, const TimeGrid& grid) {
  const double b2 = prm.b * prm.b;
  const int N = grid.steps();
  const double h = grid.step();
  auto f = [&](double s, double pi) { return b2 * pi * pi - p(prm, s); };
  std::vector<double> pi(grid.nodes());
  pi[N] = prm.g0;
  for (int k = N - 1; k >= 0; --k) {
    const double t1 = grid.time(k + 1);
    const double tm = t1 - 0.5 * h;
    const double y = pi[k + 1];
    const double k1 = f(t1, y);
    const double k2 = f(tm, y - 0.5 * h * k1);
    const double k3 = f(tm, y - 0.5 * h * k2);
    const double k4 = f(grid.time(k), y - h * k3);
    pi[k] = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return pi;
}

/// E[X(s)] = x exp(-b^2 int_0^s pi) at every node.
inline std::vector<double> mean_Xbar(const ScalarLQParams& prm, const TimeGrid& grid,
                                     const std::vector<double>& pi) {
  const std::vector<double> Ipi = cumulative_integral(pi, grid.step());
  std::vector<double> out(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k)
    out[k] = prm.x * std::exp(-prm.b * prm.b * Ipi[k]);
  return out;
}

/// var[X(s)] = x^2 int_0^s exp(s - t - 2b^2 int_t^s p - 2b^2 int_0^t pi) dt at
/// every node, factored as x^2 e^{s - 2b^2 Ip(s)} int_0^s e^{-t + 2b^2 (Ip - Ipi)(t)} dt.
inline std::vector<double> var_Xbar(const ScalarLQParams& prm, const TimeGrid& grid,
                                    const std::vector<double>& p_path,
                                    const std::vector<double>& pi) {
  const double b2 = prm.b * prm.b;
  const double h = grid.step();
  const std::vector<double> Ip = cumulative_integral(p_path, h);
  const std::vector<double> Ipi = cumulative_integral(pi, h);
  std::vector<double> inner(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k)
    inner[k] = std::exp(-grid.time(k) + 2.0 * b2 * (Ip[k] - Ipi[k]));
  const std::vector<double> C = cumulative_integral(inner, h);
  std::vector<double> out(grid.nodes());
  for (int k = 0; k < grid.nodes(); ++k)
    out[k] = prm.x * prm.x * std::exp(grid.time(k) - 2.0 * b2 * Ip[k]) * C[k];
  return out;
}

/// var[X0(T)] = x^2 exp(-2 b^2 int_0^T p0) (e^T - 1) for the standard optimal
/// state; the integral is taken by Simpson's rule on `grid`.
inline double var_X0bar_T(const ScalarLQParams& prm, const TimeGrid& grid) {
  const std::vector<double> p0s = tabulate(grid, &p0, prm);
  const double I = simpson(p0s, grid.step());
  return prm.x * prm.x * std::exp(-2.0 * prm.b * prm.b * I) * std::expm1(prm.T);
}

/// Trade-off between the standard and variance-penalized optimal laws.
struct TradeoffReport {
  double J0_standard = 0.0;      // J0(x; u0) = p0(0) x^2
  double Jhat_modified = 0.0;    // Jhat0(x; u) = pi(0) x^2
  double J0_modified = 0.0;      // J0(x; u) = pi(0) x^2 - g var[X(T)]
  double var_T_modified = 0.0;   // var[X(T)] under u
  double var_T_standard = 0.0;   // var[X0(T)] under u0
  double cost_increase = 0.0;    // J0(x; u) - J0(x; u0)
  double bound_lhs = 0.0;        // J0(x;u) - J0(x;u0) + g var[X(T)]
  std::optional<double> bound_rhs;  // (g / g0) J0(x; u0); none when g0 = 0

  bool riccati_ordering = false;  // p0 < pi < p at interior nodes
  bool cost_order = false;       // J0(u0) <= J0(u)
  bool variance_order = false;   // var[X(T)] < var[X0(T)]
  bool pointwise_bound = false;  // p0 > g0/(g0+g) p before T (equality at T)
  std::optional<bool> price_bound;  // 0 <= lhs <= rhs; none when g0 = 0

  bool all_pass() const {
    return riccati_ordering && variance_order && pointwise_bound &&
           price_bound.value_or(true);
  }
};

inline TradeoffReport tradeoff_report(const ScalarLQParams& prm, const TimeGrid& grid) {
  prm.check();
  if (std::abs(grid.horizon() - prm.T) > time_tolerance(prm.T))
    throw StructuralError("tradeoff_report: grid horizon differs from T");
  const std::vector<double> p_path = tabulate(grid, &p, prm);
  const std::vector<double> p0_path = tabulate(grid, &p0, prm);
  const std::vector<double> pi = pi_solve(prm, grid);
  const std::vector<double> var = var_Xbar(prm, grid, p_path, pi);

  TradeoffReport r;
  const double x2 = prm.x * prm.x;
  r.J0_standard = p0_path.front() * x2;
  r.Jhat_modified = pi.front() * x2;
  r.var_T_modified = var.back();
  r.var_T_standard = var_X0bar_T(prm, grid);
  r.J0_modified = r.Jhat_modified - prm.g * r.var_T_modified;
  r.cost_increase = r.J0_modified - r.J0_standard;
  r.bound_lhs = r.cost_increase + prm.g * r.var_T_modified;

  r.cost_order = r.J0_standard <= r.J0_modified;
  r.variance_order = r.var_T_modified < r.var_T_standard;

  bool ordered = true;
  for (int k = 1; k < grid.steps(); ++k)
    ordered = ordered && p0_path[k] < pi[k] && pi[k] < p_path[k];
  r.riccati_ordering = ordered;

  const double ratio = prm.g0 / (prm.g0 + prm.g);
  bool pw = true;
  for (int k = 0; k < grid.nodes(); ++k) {
    const double lhs = p0_path[k];
    const double rhs = ratio * p_path[k];
    if (k < grid.steps()) {
      pw = pw && lhs > rhs;
    } else {
      pw = pw && std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs));
    }
  }
  r.pointwise_bound = pw;

  if (prm.g0 > 0.0) {
    r.bound_rhs = prm.g / prm.g0 * r.J0_standard;
    r.price_bound = r.bound_lhs >= 0.0 && r.bound_lhs <= *r.bound_rhs;
  }
  return r;
}

/// Standard scalar problem as a ProblemDef: A = 0, B = b, A1 = 1, B1 = 0,
/// Q = 0, R = 1, G = g0.
inline ProblemDef standard_problem(const ScalarLQParams& prm) {
  ProblemDef pr = ProblemDef::zeros(1, 1, prm.T);
  pr.B = Matrix(Matrix::Constant(1, 1, prm.b));
  pr.A1 = Matrix(Matrix::Constant(1, 1, 1.0));
  pr.R = Matrix(Matrix::Constant(1, 1, 1.0));
  pr.G = Matrix::Constant(1, 1, prm.g0);
  pr.x0 = Vector::Constant(1, prm.x);
  return pr;
}

/// Variance-penalized scalar problem: G = g0 + g, G_hat = -g.
inline ProblemDef modified_problem(const ScalarLQParams& prm) {
  return build_modified_lq(standard_problem(prm), 0.0, 0.0, prm.g);
}

}  // namespace mflq::scalar
