#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mflq/core.hpp"
#include "mflq/feedback.hpp"
#include "mflq/instances.hpp"
#include "mflq/io.hpp"
#include "mflq/mcsim.hpp"
#include "mflq/moments.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"
#include "mflq/scalar.hpp"

namespace mflq::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr std::uint64_t kInstanceSeed = 20240611;
inline constexpr int kInstances = 20;

/// The random constant-coefficient family used by the value, completion and
/// stationarity checks.
inline std::vector<ProblemDef> random_family() {
  std::vector<ProblemDef> out;
  for (int i = 0; i < kInstances; ++i) out.push_back(random_instance(kInstanceSeed, i));
  return out;
}

namespace detail {

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline CriterionResult timed(int id, std::string name,
                             const std::function<bool(std::ostringstream&)>& body,
                             double budget = 0.0) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  std::ostringstream os;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.pass = body(os);
  } catch (const std::exception& e) {
    r.pass = false;
    os << "exception: " << e.what();
  }
  r.seconds = elapsed(t0);
  if (budget > 0.0) {
    os << " time=" << sci(r.seconds) << "s (budget " << budget << "s)";
    if (r.seconds >= budget) r.pass = false;
  }
  r.detail = os.str();
  return r;
}

inline double max_node_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, max_abs(a[k] - b[k]));
  return worst;
}

/// Optimal policy plus a random constant perturbation of F, F_bar and c.
inline AffinePolicy perturbed(const AffinePolicy& opt, std::uint64_t stream) {
  NormalStream rng(kInstanceSeed + 7);
  std::uint64_t idx = 0;
  auto draw = [&] { return 0.3 * rng(stream, idx++); };
  const int n = opt.n();
  const int m = opt.m();
  Matrix dF(m, n), dFb(m, n);
  Vector dc(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      dF(i, j) = draw();
      dFb(i, j) = draw();
    }
    dc(i) = draw();
  }
  AffinePolicy p = opt;
  for (std::size_t k = 0; k < p.F.size(); ++k) {
    p.F[k] += dF;
    p.F_bar[k] += dFb;
    p.c[k] += dc;
  }
  return p;
}

}  // namespace detail

inline CriterionResult scalar_riccati_golden() {
  return detail::timed(1, "scalar Riccati closed form", [](std::ostringstream& os) {
    bool ok = true;
    const double cases[3][3] = {{1, 1, 1}, {1, 2, 1}, {0.5, 1, 2}};
    for (const auto& cs : cases) {
      scalar::ScalarLQParams prm{cs[0], cs[1], 1.0, cs[2], 1.0};
      const ProblemDef dyn = scalar::standard_problem(prm);
      const TimeGrid grid(prm.T, 4096);
      const auto P0 = solve_classical_P0(dyn.Q, dyn.R, dyn.G, dyn, grid);
      double err = 0.0;
      for (int k = 0; k < grid.nodes(); ++k)
        err = std::max(err, std::abs(P0[k](0, 0) - scalar::p0(prm, grid.time(k))));
      os << "(b,g0,T)=(" << cs[0] << "," << cs[1] << "," << cs[2]
         << ") err=" << detail::sci(err) << "; ";
      ok = ok && err <= 1e-8;
      if (cs[0] == 1 && cs[1] == 1 && cs[2] == 1) {
        double dev = 0.0;
        for (int k = 0; k < grid.nodes(); ++k)
          dev = std::max(dev, std::abs(P0[k](0, 0) - 1.0));
        os << "p0==1 dev=" << detail::sci(dev) << "; ";
        ok = ok && dev <= 1e-8;
      }
    }
    return ok;
  }, 1.0);
}

inline CriterionResult value_identity(const std::vector<ProblemDef>& family) {
  return detail::timed(2, "value identity on random instances", [&](std::ostringstream& os) {
    double worst = 0.0;
    for (const auto& p : family) {
      const RiccatiSolution ric = solve_riccati(p, kDefaultSteps);
      const AffinePolicy pol = synthesize(p, ric);
      const MomentTrajectory tr = propagate(p, pol, ric.grid);
      const double v = optimal_value(ric, p.x0);
      worst = std::max(worst, std::abs(cost(p, pol, tr) - v) / (1.0 + std::abs(v)));
    }
    os << "instances=" << family.size() << " worst rel err=" << detail::sci(worst);
    return worst <= 1e-6;
  }, 10.0);
}

inline CriterionResult completion_of_squares(const std::vector<ProblemDef>& family,
                                             int perturbations = 50) {
  return detail::timed(3, "completion of squares", [&](std::ostringstream& os) {
    double min_gap = std::numeric_limits<double>::infinity();
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& p : family) {
      const RiccatiSolution ric = solve_riccati(p, 2048);
      const AffinePolicy opt = synthesize(p, ric);
      const double J_opt = propagate(p, opt, ric.grid).total_cost;
      for (int j = 0; j < perturbations; ++j) {
        const AffinePolicy pol = detail::perturbed(opt, stream++);
        const MomentTrajectory tr = propagate(p, pol, ric.grid);
        const double gap = completion_gap(p, ric, pol, tr);
        const double diff = tr.total_cost - J_opt;
        min_gap = std::min(min_gap, gap);
        worst = std::max(worst, std::abs(gap - diff) / (1.0 + std::abs(diff)));
      }
    }
    os << "policies=" << stream << " min gap=" << detail::sci(min_gap)
       << " worst rel mismatch=" << detail::sci(worst);
    return min_gap >= -1e-9 && worst <= 1e-6;
  });
}

inline CriterionResult stationarity(const std::vector<ProblemDef>& family) {
  return detail::timed(4, "stationarity of synthesized policy", [&](std::ostringstream& os) {
    double worst = 0.0;
    for (const auto& p : family) {
      const RiccatiSolution ric = solve_riccati(p, kDefaultSteps);
      const AffinePolicy pol = synthesize(p, ric);
      const StationarityResidual res = stationarity_residual(p, ric, pol);
      for (int k = 0; k < ric.grid.nodes(); ++k) {
        const Coefficients c = p.at(ric.grid.time(k));
        const double scale =
            std::max({max_abs(c.R), max_abs(c.R_sum), max_abs(c.B), max_abs(c.B1),
                      max_abs(c.B_sum), max_abs(c.B1_sum), max_abs(ric.P[k]),
                      max_abs(ric.Pi[k]), max_abs(pol.F[k]), max_abs(pol.F_bar[k])});
        worst = std::max(worst, std::max(res.Mc[k].norm(), res.Mm[k].norm()) / (1.0 + scale));
      }
    }
    os << "worst scaled residual=" << detail::sci(worst);
    return worst <= 1e-9;
  });
}

inline CriterionResult classical_reduction(const std::vector<ProblemDef>& family) {
  return detail::timed(5, "classical reduction", [&](std::ostringstream& os) {
    double pi_err = 0.0, gain_err = 0.0;
    for (ProblemDef p : family) {
      p.A_hat = CoefficientSchedule::zero(p.n, p.n);
      p.A1_hat = CoefficientSchedule::zero(p.n, p.n);
      p.B_hat = CoefficientSchedule::zero(p.n, p.m);
      p.B1_hat = CoefficientSchedule::zero(p.n, p.m);
      p.Q_hat = CoefficientSchedule::zero(p.n, p.n);
      p.R_hat = CoefficientSchedule::zero(p.m, p.m);
      p.G_hat = Matrix::Zero(p.n, p.n);
      const RiccatiSolution ric = solve_riccati(p, kDefaultSteps);
      pi_err = std::max(pi_err, detail::max_node_diff(ric.Pi, ric.P));
      const AffinePolicy pol = synthesize(p, ric);
      const auto P0 = solve_classical_P0(p.Q, p.R, p.G, p, ric.grid);
      const AffinePolicy cl = classical_policy(p, p.R, P0, ric.grid);
      for (int k = 0; k < ric.grid.nodes(); ++k) {
        const double s = 1.0 + max_abs(cl.F[k]);
        gain_err = std::max({gain_err, max_abs(pol.F[k] - cl.F[k]) / s,
                             max_abs(pol.F_bar[k] - cl.F_bar[k]) / s,
                             max_abs(pol.c[k]) / s});
      }
    }
    os << "max |Pi-P|=" << detail::sci(pi_err) << " max gain rel err=" << detail::sci(gain_err);
    return pi_err <= 1e-8 && gain_err <= 1e-9;
  });
}

/// Options for the P_hat residual check: faster dynamics over a longer
/// horizon so the discretization error dominates rounding at fine grids.
inline InstanceOptions smooth_options() {
  InstanceOptions o;
  o.T = 2.0;
  o.drift_scale = 1.5;
  o.diffusion_scale = 0.6;
  o.weight_scale = 1.0;
  return o;
}

inline double phat_residual_max(const ProblemDef& p, int steps) {
  const RiccatiSolution ric = solve_riccati(p, steps);
  const auto r = phat_residual(p, ric.grid, ric.P, ric.Pi);
  return *std::max_element(r.begin(), r.end());
}

inline CriterionResult phat_convergence(int instances = 3) {
  return detail::timed(6, "P_hat residual convergence order", [&](std::ostringstream& os) {
    bool ok = true;
    for (int i = 0; i < instances; ++i) {
      const ProblemDef p = random_instance(kInstanceSeed + 1, i, smooth_options());
      const double r11 = phat_residual_max(p, 1 << 11);
      const double r13 = phat_residual_max(p, 1 << 13);
      const double order = std::log2(r11 / r13) / 2.0;
      os << "n=" << p.n << " r(2^11)=" << detail::sci(r11) << " r(2^13)=" << detail::sci(r13)
         << " order=" << order << "; ";
      ok = ok && order >= 3.5;
    }
    return ok;
  });
}

inline CriterionResult scalar_tradeoff() {
  return detail::timed(7, "scalar variance trade-off", [](std::ostringstream& os) {
    const scalar::ScalarLQParams prm{1, 1, 1, 1, 1};
    const scalar::TradeoffReport r = scalar::tradeoff_report(prm, TimeGrid(prm.T, 4096));
    const double var0 = std::exp(-2.0) * (std::numbers::e - 1.0);
    const double var_err = std::abs(r.var_T_standard - var0);
    const double j_err = std::abs(r.J0_standard - 1.0);
    os << "ordering=" << r.riccati_ordering << " pointwise=" << r.pointwise_bound
       << " variance=" << r.variance_order << " price=" << r.price_bound.value_or(false)
       << " var0 err=" << detail::sci(var_err) << " J0 err=" << detail::sci(j_err);
    return r.all_pass() && var_err <= 1e-10 && j_err <= 1e-12;
  }, 2.0);
}

inline CriterionResult monte_carlo_consistency(int particles = 100000, unsigned threads = 0) {
  return detail::timed(8, "Monte Carlo consistency", [&](std::ostringstream& os) {
    std::vector<ProblemDef> problems;
    problems.push_back(scalar::modified_problem({1, 1, 1, 1, 1}));
    for (int i = 0; i < 3; ++i) {
      InstanceOptions o;
      o.max_n = 3;
      o.max_m = 2;
      problems.push_back(random_instance(kInstanceSeed + 2, i, o));
    }
    SimulationOptions opt;
    opt.particles = particles;
    opt.seed = 12345;
    opt.threads = threads;
    bool ok = true;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      const ProblemDef& p = problems[i];
      const TimeGrid grid(p.T, static_cast<int>(std::lround(p.T * 1024)));
      const AffinePolicy pol = synthesize(p, solve_riccati(p, grid));
      const MomentTrajectory tr = propagate(p, pol, grid);
      const ParticleEnsemble ens = simulate(p, pol, grid, opt);
      const double z_cost = (ens.cost_estimate - tr.total_cost) / ens.cost_std_error;
      double z_var = 0.0;
      for (Eigen::Index j = 0; j < ens.terminal_var.size(); ++j)
        z_var = std::max(z_var, std::abs(ens.terminal_var(j) - tr.cov.back()(j, j)) /
                                    ens.terminal_var_se(j));
      os << "#" << i << " z_cost=" << std::abs(z_cost) << " z_var=" << z_var << "; ";
      ok = ok && std::abs(z_cost) <= 3.0 && z_var <= 3.0;
      if (i == 0) {
        const ParticleEnsemble again = simulate(p, pol, grid, opt);
        const bool same = again.cost_estimate == ens.cost_estimate &&
                          again.final_states == ens.final_states;
        os << "rerun identical=" << same << "; ";
        ok = ok && same;
      }
    }
    return ok;
  }, 60.0);
}

/// Shifts used by the perturbation identity check: constant, ramp and a
/// single smooth bump, each along a fixed direction in control space.
inline std::vector<ControlSchedule> identity_shifts(const TimeGrid& grid, int m) {
  Vector dir = Vector::LinSpaced(m, 1.0, 0.5);
  std::vector<ControlSchedule> out(3, ControlSchedule(grid.nodes()));
  const double T = grid.horizon();
  for (int k = 0; k < grid.nodes(); ++k) {
    const double t = grid.time(k);
    const double z = (t - 0.5 * T) / (0.15 * T);
    out[0][k] = 0.5 * dir;
    out[1][k] = (t / T) * dir;
    out[2][k] = std::exp(-z * z) * dir;
  }
  return out;
}

inline CriterionResult perturbation_identity(int particles = 20000, unsigned threads = 0) {
  return detail::timed(9, "perturbation identity", [&](std::ostringstream& os) {
    std::vector<ProblemDef> problems{scalar::modified_problem({1, 1, 1, 1, 1}),
                                     random_instance(kInstanceSeed + 3, 0)};
    bool ok = true;
    const char* names[] = {"constant", "ramp", "bump"};
    for (std::size_t i = 0; i < problems.size(); ++i) {
      const ProblemDef& p = problems[i];
      const RiccatiSolution ric = solve_riccati(p, TimeGrid(p.T, 512));
      const auto shifts = identity_shifts(ric.grid, p.m);
      for (std::size_t s = 0; s < shifts.size(); ++s) {
        const IdentityCheck c = identity_check(p, ric, shifts[s], particles, 777 + s, threads);
        os << "#" << i << " " << names[s] << " diff=" << detail::sci(c.difference)
           << " se=" << detail::sci(c.difference_se)
           << " J(0;w)=" << detail::sci(c.J0_w_moments) << "; ";
        ok = ok && c.pass && c.J0_w_moments >= -1e-9;
      }
    }
    return ok;
  });
}

inline std::vector<CriterionResult> run_all(unsigned threads = 0) {
  const std::vector<ProblemDef> family = random_family();
  std::vector<CriterionResult> out;
  out.push_back(scalar_riccati_golden());
  out.push_back(value_identity(family));
  out.push_back(completion_of_squares(family));
  out.push_back(stationarity(family));
  out.push_back(classical_reduction(family));
  out.push_back(phat_convergence());
  out.push_back(scalar_tradeoff());
  out.push_back(monte_carlo_consistency(100000, threads));
  out.push_back(perturbation_identity(20000, threads));
  return out;
}

inline std::string format(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " :: " << r.detail;
  return os.str();
}

}  // namespace mflq::acceptance
