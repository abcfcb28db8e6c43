#pragma once

#include <array>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mflq/core.hpp"
#include "mflq/schedule.hpp"

namespace mflq {

/// Coefficients of the mean-field LQ problem frozen at one instant. The
/// `*_sum` members are the combined mean-field coefficients, e.g.
/// A_sum = A + A_hat.
struct Coefficients {
  Matrix A, A_hat, A1, A1_hat;
  Matrix B, B_hat, B1, B1_hat;
  Matrix Q, Q_hat, R, R_hat;

  Matrix A_sum, A1_sum, B_sum, B1_sum, Q_sum, R_sum;
};

/// A finite-horizon mean-field LQ problem:
///
///   dX = (A X + B u + A_hat E[X] + B_hat E[u]) ds
///      + (A1 X + B1 u + A1_hat E[X] + B1_hat E[u]) dW,   X(0) = x0,
///
///   J = E{ int_0^T <Q X,X> + <Q_hat E[X],E[X]> + <R u,u> + <R_hat E[u],E[u]> ds
///          + <G X(T),X(T)> + <G_hat E[X(T)],E[X(T)]> }.
///
/// W is a scalar Brownian motion.
struct ProblemDef {
  int n = 0;
  int m = 0;
  double T = 1.0;
  CoefficientSchedule A, A_hat, A1, A1_hat;
  CoefficientSchedule B, B_hat, B1, B1_hat;
  CoefficientSchedule Q, Q_hat, R, R_hat;
  Matrix G, G_hat;
  Vector x0;

  /// A problem with every coefficient zero.
  static ProblemDef zeros(int n, int m, double T) {
    ProblemDef p;
    p.n = n;
    p.m = m;
    p.T = T;
    for (auto* s : {&p.A, &p.A_hat, &p.A1, &p.A1_hat, &p.Q, &p.Q_hat})
      *s = CoefficientSchedule::zero(n, n);
    for (auto* s : {&p.B, &p.B_hat, &p.B1, &p.B1_hat})
      *s = CoefficientSchedule::zero(n, m);
    for (auto* s : {&p.R, &p.R_hat}) *s = CoefficientSchedule::zero(m, m);
    p.G = Matrix::Zero(n, n);
    p.G_hat = Matrix::Zero(n, n);
    p.x0 = Vector::Zero(n);
    return p;
  }

  Coefficients at(double t) const {
    Coefficients c;
    c.A = eval_schedule(A, t, T);
    c.A_hat = eval_schedule(A_hat, t, T);
    c.A1 = eval_schedule(A1, t, T);
    c.A1_hat = eval_schedule(A1_hat, t, T);
    c.B = eval_schedule(B, t, T);
    c.B_hat = eval_schedule(B_hat, t, T);
    c.B1 = eval_schedule(B1, t, T);
    c.B1_hat = eval_schedule(B1_hat, t, T);
    c.Q = eval_schedule(Q, t, T);
    c.Q_hat = eval_schedule(Q_hat, t, T);
    c.R = eval_schedule(R, t, T);
    c.R_hat = eval_schedule(R_hat, t, T);
    c.A_sum = c.A + c.A_hat;
    c.A1_sum = c.A1 + c.A1_hat;
    c.B_sum = c.B + c.B_hat;
    c.B1_sum = c.B1 + c.B1_hat;
    c.Q_sum = c.Q + c.Q_hat;
    c.R_sum = c.R + c.R_hat;
    return c;
  }

  /// True when every mean-field coefficient (hatted term) vanishes.
  bool is_classical() const {
    for (const auto* s : {&A_hat, &A1_hat, &B_hat, &B1_hat, &Q_hat, &R_hat})
      for (const auto& v : s->values())
        if (max_abs(v) != 0.0) return false;
    return max_abs(G_hat) == 0.0;
  }

  bool operator==(const ProblemDef&) const = default;
};

namespace detail {

struct NamedSchedule {
  const char* name;
  const CoefficientSchedule* sched;
  int rows;
  int cols;
};

inline std::array<NamedSchedule, 12> schedules_of(const ProblemDef& p) {
  return {{{"A", &p.A, p.n, p.n},
           {"A_hat", &p.A_hat, p.n, p.n},
           {"A1", &p.A1, p.n, p.n},
           {"A1_hat", &p.A1_hat, p.n, p.n},
           {"B", &p.B, p.n, p.m},
           {"B_hat", &p.B_hat, p.n, p.m},
           {"B1", &p.B1, p.n, p.m},
           {"B1_hat", &p.B1_hat, p.n, p.m},
           {"Q", &p.Q, p.n, p.n},
           {"Q_hat", &p.Q_hat, p.n, p.n},
           {"R", &p.R, p.m, p.m},
           {"R_hat", &p.R_hat, p.m, p.m}}};
}

inline bool is_weight(const std::string& name) {
  return name == "Q" || name == "Q_hat" || name == "R" || name == "R_hat";
}

inline bool all_finite(const Matrix& M) { return M.allFinite(); }

}  // namespace detail

/// Structural checks: dimensions, horizon, sample coverage, finiteness and
/// symmetry of the weights. Throws StructuralError / DomainError.
inline void check_structure(const ProblemDef& p) {
  if (p.n < 1 || p.m < 1)
    throw StructuralError("problem: n and m must be positive");
  if (!(p.T > 0.0) || !std::isfinite(p.T))
    throw DomainError("problem: horizon T must be positive and finite");
  const double tol = time_tolerance(p.T);
  for (const auto& s : detail::schedules_of(p)) {
    const std::string name = s.name;
    if (s.sched->values().empty())
      throw StructuralError("problem: coefficient " + name + " is empty");
    if (s.sched->rows() != s.rows || s.sched->cols() != s.cols) {
      throw StructuralError("problem: coefficient " + name + " must be " +
                            std::to_string(s.rows) + "x" +
                            std::to_string(s.cols));
    }
    if (!s.sched->is_constant()) {
      if (s.sched->times().front() > tol ||
          s.sched->times().back() < p.T - tol)
        throw StructuralError("problem: samples of " + name +
                              " do not cover [0, T]");
    }
    for (const auto& v : s.sched->values()) {
      if (!detail::all_finite(v))
        throw StructuralError("problem: coefficient " + name +
                              " has non-finite entries");
      if (detail::is_weight(name) && !is_symmetric(v))
        throw StructuralError("problem: weight " + name + " is not symmetric");
    }
  }
  if (p.G.rows() != p.n || p.G.cols() != p.n || p.G_hat.rows() != p.n ||
      p.G_hat.cols() != p.n)
    throw StructuralError("problem: G and G_hat must be n x n");
  if (!detail::all_finite(p.G) || !detail::all_finite(p.G_hat))
    throw StructuralError("problem: G/G_hat have non-finite entries");
  if (!is_symmetric(p.G))
    throw StructuralError("problem: weight G is not symmetric");
  if (!is_symmetric(p.G_hat))
    throw StructuralError("problem: weight G_hat is not symmetric");
  if (p.x0.size() != p.n)
    throw StructuralError("problem: x0 must have n entries");
  if (!p.x0.allFinite())
    throw StructuralError("problem: x0 has non-finite entries");
}

// ---------------------------------------------------------------------------
// Assumption levels
// ---------------------------------------------------------------------------

enum class AssumptionLevel { H2, H2_prime, H2_double_prime };

inline const char* to_string(AssumptionLevel l) {
  switch (l) {
    case AssumptionLevel::H2: return "H2";
    case AssumptionLevel::H2_prime: return "H2'";
    case AssumptionLevel::H2_double_prime: return "H2''";
  }
  return "?";
}

struct ConditionRecord {
  std::string name;
  double worst_time = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double threshold = 0.0;
  bool pass = true;
};

struct ValidationReport {
  double delta = kDefaultDelta;
  std::vector<ConditionRecord> conditions;
  AssumptionLevel level = AssumptionLevel::H2;

  const ConditionRecord* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
  bool passes(const std::string& name) const {
    const auto* c = find(name);
    return c != nullptr && c->pass;
  }
};

/// Checks the semidefiniteness conditions at every grid node (and at every
/// sample time of a sampled weight) and reports the strongest assumption
/// level met. Asymmetric weights are a StructuralError; failed
/// semidefiniteness is recorded in the report.
inline ValidationReport validate(const ProblemDef& p, double delta,
                                 const TimeGrid& grid) {
  if (!(delta > 0.0)) throw DomainError("validate: delta must be positive");
  check_structure(p);
  if (std::abs(grid.horizon() - p.T) > time_tolerance(p.T))
    throw StructuralError("validate: grid does not cover [0, T]");

  std::vector<double> times;
  for (int k = 0; k < grid.nodes(); ++k) times.push_back(grid.time(k));
  for (const auto* s : {&p.Q, &p.Q_hat, &p.R, &p.R_hat})
    for (double t : s->times())
      if (t >= 0.0 && t <= p.T) times.push_back(t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  ValidationReport rep;
  rep.delta = delta;
  ConditionRecord q{"Q >= 0"}, qs{"Q + Q_hat >= 0"}, r{"R >= 0"},
      rs{"R + R_hat >= 0"}, rd{"R >= delta I"}, rsd{"R + R_hat >= delta I"};

  auto update = [](ConditionRecord& rec, const Matrix& M, double threshold,
                   double t) {
    const double ev = min_eigenvalue(M);
    rec.threshold = threshold;
    if (ev < rec.min_eigenvalue) {
      rec.min_eigenvalue = ev;
      rec.worst_time = t;
    }
    if (ev < threshold - psd_tolerance(M)) rec.pass = false;
  };

  for (double t : times) {
    const Matrix Qt = p.Q.at(t);
    const Matrix Qs = Qt + p.Q_hat.at(t);
    const Matrix Rt = p.R.at(t);
    const Matrix Rs = Rt + p.R_hat.at(t);
    update(q, Qt, 0.0, t);
    update(qs, Qs, 0.0, t);
    update(r, Rt, 0.0, t);
    update(rs, Rs, 0.0, t);
    update(rd, Rt, delta, t);
    update(rsd, Rs, delta, t);
  }
  ConditionRecord g{"G >= 0"}, gs{"G + G_hat >= 0"};
  update(g, p.G, 0.0, p.T);
  update(gs, p.G + p.G_hat, 0.0, p.T);

  rep.conditions = {q, qs, r, rs, rd, rsd, g, gs};
  const bool h2p = q.pass && qs.pass && r.pass && rs.pass && g.pass && gs.pass;
  const bool h2pp = h2p && rd.pass && rsd.pass;
  rep.level = h2pp  ? AssumptionLevel::H2_double_prime
              : h2p ? AssumptionLevel::H2_prime
                    : AssumptionLevel::H2;
  return rep;
}

// ---------------------------------------------------------------------------
// Variance-penalized ("modified") LQ
// ---------------------------------------------------------------------------

namespace detail {

inline void require_nonnegative(const CoefficientSchedule& s, const char* name) {
  if (s.rows() != 1 || s.cols() != 1)
    throw StructuralError(std::string("modified LQ: ") + name +
                          " must be a scalar schedule");
  for (const auto& v : s.values())
    if (!(v(0, 0) >= 0.0))
      throw DomainError(std::string("modified LQ: ") + name +
                        " must be nonnegative");
}

inline CoefficientSchedule scaled_identity(const CoefficientSchedule& s,
                                           int dim, double sign) {
  return s.map([&](const Matrix& v) -> Matrix {
    return sign * v(0, 0) * Matrix::Identity(dim, dim);
  });
}

}  // namespace detail

/// Builds the mean-field problem whose cost equals the classical LQ cost
/// with Q0, R0, G0 plus q var[X] + rho var[u] running penalties and a
/// g var[X(T)] terminal penalty:
///   Q = Q0 + qI, Q_hat = -qI, R = R0 + rho I, R_hat = -rho I,
///   G = G0 + gI, G_hat = -gI.
/// Dynamics (A, A1, B, B1), horizon and x0 are copied from `base`, whose
/// hatted dynamics must be zero.
inline ProblemDef build_modified_lq(const ProblemDef& base,
                                   const CoefficientSchedule& Q0,
                                   const CoefficientSchedule& R0,
                                   const Matrix& G0,
                                   const CoefficientSchedule& q,
                                   const CoefficientSchedule& rho, double g) {
  detail::require_nonnegative(q, "q");
  detail::require_nonnegative(rho, "rho");
  if (!(g >= 0.0)) throw DomainError("modified LQ: g must be nonnegative");
  for (const auto* s : {&base.A_hat, &base.A1_hat, &base.B_hat, &base.B1_hat})
    for (const auto& v : s->values())
      if (max_abs(v) != 0.0)
        throw DomainError("modified LQ: base dynamics must have zero hatted terms");

  ProblemDef p = base;
  const int n = base.n;
  const int m = base.m;
  p.Q = add(Q0, detail::scaled_identity(q, n, 1.0));
  p.Q_hat = detail::scaled_identity(q, n, -1.0);
  p.R = add(R0, detail::scaled_identity(rho, m, 1.0));
  p.R_hat = detail::scaled_identity(rho, m, -1.0);
  p.G = G0 + g * Matrix::Identity(n, n);
  p.G_hat = -g * Matrix::Identity(n, n);
  check_structure(p);
  return p;
}

/// Convenience overload with constant penalties; Q0, R0, G0 are taken from
/// the classical problem `standard` (whose hatted weights must be zero).
inline ProblemDef build_modified_lq(const ProblemDef& standard, double q,
                                   double rho, double g) {
  if (!standard.is_classical())
    throw DomainError("modified LQ: the standard problem must be classical");
  return build_modified_lq(standard, standard.Q, standard.R, standard.G,
                           CoefficientSchedule(Matrix::Constant(1, 1, q)),
                           CoefficientSchedule(Matrix::Constant(1, 1, rho)), g);
}

}  // namespace mflq
