#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mflq/acceptance.hpp"
#include "mflq/feedback.hpp"
#include "mflq/io.hpp"
#include "mflq/mcsim.hpp"
#include "mflq/moments.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"
#include "mflq/scalar.hpp"

namespace mflq::cli {

enum ExitCode : int { kOk = 0, kValidationFailed = 1, kUsage = 2, kNumerical = 3 };

inline constexpr const char* kOutputDirEnv = "MFLQ_OUTPUT_DIR";

namespace detail {

using json = nlohmann::json;

struct Common {
  int steps = kDefaultSteps;
  double delta = kDefaultDelta;
  int particles = 10000;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
};

/// 12 significant digits, always with a decimal point or exponent.
inline std::string number(double v) {
  std::string s = io::fmt(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

/// Where a tabular result goes: --out, else $MFLQ_OUTPUT_DIR/<name>, else
/// nowhere (empty) for optional tables or stdout for primary ones.
inline std::optional<std::string> table_path(const Common& o, const std::string& name) {
  if (!o.out.empty()) return o.out;
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0')
    return (std::filesystem::path(dir) / name).string();
  return std::nullopt;
}

inline void write_table(const io::Table& t, const Common& o, const std::string& stem,
                        std::ostream& out, bool to_stdout_by_default) {
  const bool as_json = o.format == "json";
  const auto path = table_path(o, stem + (as_json ? ".json" : ".csv"));
  if (!path) {
    if (!to_stdout_by_default) return;
    if (as_json)
      out << t.to_json().dump(2) << '\n';
    else
      t.write_csv(out);
    return;
  }
  std::ofstream f(*path);
  if (!f) throw Error("cannot write '" + *path + "'");
  if (as_json)
    f << t.to_json().dump(2) << '\n';
  else
    t.write_csv(f);
  if (!to_stdout_by_default) out << "wrote " << *path << '\n';
}

inline json rounded(double v) { return std::stod(io::fmt(v)); }

inline json report_json(const ValidationReport& r) {
  json j;
  j["level"] = to_string(r.level);
  j["delta"] = rounded(r.delta);
  j["conditions"] = json::array();
  for (const auto& c : r.conditions)
    j["conditions"].push_back({{"name", c.name},
                               {"pass", c.pass},
                               {"min_eigenvalue", rounded(c.min_eigenvalue)},
                               {"threshold", rounded(c.threshold)},
                               {"worst_time", rounded(c.worst_time)}});
  return j;
}

inline void print_report(const ValidationReport& r, std::ostream& out) {
  out << std::left << std::setw(24) << "condition" << std::setw(6) << "pass" << std::setw(22)
      << "min eigenvalue" << std::setw(22) << "at t" << "threshold\n";
  for (const auto& c : r.conditions)
    out << std::left << std::setw(24) << c.name << std::setw(6) << (c.pass ? "yes" : "NO")
        << std::setw(22) << number(c.min_eigenvalue) << std::setw(22) << number(c.worst_time)
        << number(c.threshold) << '\n';
  out << "level: " << to_string(r.level) << '\n';
}

inline int cmd_validate(const ProblemDef& p, const Common& o, std::ostream& out) {
  const ValidationReport r = validate(p, o.delta, TimeGrid(p.T, o.steps));
  if (o.format == "json") {
    out << report_json(r).dump(2) << '\n';
  } else {
    print_report(r, out);
    out << report_json(r).dump() << '\n';
  }
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    f << report_json(r).dump(2) << '\n';
  }
  return r.level == AssumptionLevel::H2_double_prime ? kOk : kValidationFailed;
}

inline int cmd_value(const ProblemDef& p, const Common& o, std::ostream& out) {
  const RiccatiSolution ric = solve_riccati(p, o.steps);
  const double v = optimal_value(ric, p.x0);
  if (o.format == "json")
    out << json{{"value", rounded(v)}, {"steps", o.steps}}.dump() << '\n';
  else
    out << number(v) << '\n';
  return kOk;
}

inline int cmd_evaluate(const ProblemDef& p, const std::string& policy_file, const Common& o,
                        std::ostream& out) {
  std::ifstream in(policy_file);
  if (!in) throw ParseError("cannot open policy file '" + policy_file + "'");
  const AffinePolicy pol = io::policy_from_table(io::read_csv(in), p.n, p.m);
  if (std::abs(pol.grid.horizon() - p.T) > time_tolerance(p.T))
    throw ParseError("policy: last time " + number(pol.grid.horizon()) +
                     " does not match T = " + number(p.T));
  const MomentTrajectory tr = propagate(p, pol, pol.grid);
  const RiccatiSolution ric = solve_riccati(p, pol.grid);
  const double v = optimal_value(ric, p.x0);
  if (o.format == "json") {
    out << json{{"cost", rounded(tr.total_cost)},
                {"optimal_value", rounded(v)},
                {"excess", rounded(tr.total_cost - v)},
                {"steps", pol.grid.steps()}}
               .dump()
        << '\n';
  } else {
    out << "cost          " << number(tr.total_cost) << '\n'
        << "optimal value " << number(v) << '\n'
        << "excess        " << number(tr.total_cost - v) << '\n';
  }
  write_table(io::trajectory_table(tr), o, "trajectory", out, false);
  return kOk;
}

inline int cmd_simulate(const ProblemDef& p, const Common& o, std::ostream& out) {
  const TimeGrid grid(p.T, o.steps);
  const AffinePolicy pol = synthesize(p, solve_riccati(p, grid));
  SimulationOptions opt;
  opt.particles = o.particles;
  opt.seed = o.seed;
  const ParticleEnsemble ens = simulate(p, pol, grid, opt);
  const MomentTrajectory tr = propagate(p, pol, grid);
  const double z = (ens.cost_estimate - tr.total_cost) / ens.cost_std_error;
  if (o.format == "json") {
    out << json{{"cost_estimate", rounded(ens.cost_estimate)},
                {"std_error", rounded(ens.cost_std_error)},
                {"moment_cost", rounded(tr.total_cost)},
                {"z", rounded(z)},
                {"particles", o.particles},
                {"seed", o.seed},
                {"steps", o.steps}}
               .dump()
        << '\n';
  } else {
    out << "particles " << o.particles << "  seed " << o.seed << "  steps " << o.steps << '\n'
        << "cost estimate " << number(ens.cost_estimate) << " +- " << number(ens.cost_std_error)
        << '\n'
        << "moment cost   " << number(tr.total_cost) << '\n'
        << "z             " << number(z) << '\n';
  }
  write_table(io::ensemble_table(ens), o, "ensemble", out, false);
  return kOk;
}

/// Standard vs variance-penalized comparison on a shared grid: each
/// optimal law is evaluated under both cost functionals.
inline json compare_json(const ProblemDef& base, double q, double rho, double g, int steps,
                         const std::string& emit_modified) {
  const ProblemDef modified = build_modified_lq(base, q, rho, g);
  if (!emit_modified.empty()) io::write_problem(modified, emit_modified);
  const TimeGrid grid(base.T, steps);
  const AffinePolicy u0 = synthesize(base, solve_riccati(base, grid));
  const RiccatiSolution ric_mod = solve_riccati(modified, grid);
  const AffinePolicy u = synthesize(modified, ric_mod);

  auto summarize = [&](const AffinePolicy& pol) {
    const MomentTrajectory std_tr = propagate(base, pol, grid);
    const MomentTrajectory mod_tr = propagate(modified, pol, grid);
    double var_u = 0.0;
    std::vector<double> vu(grid.nodes());
    for (int k = 0; k < grid.nodes(); ++k)
      vu[k] = (pol.F[k] * std_tr.cov[k] * pol.F[k].transpose()).trace();
    var_u = cumulative_integral(vu, grid.step()).back();
    return json{{"standard_cost", rounded(std_tr.total_cost)},
                {"modified_cost", rounded(mod_tr.total_cost)},
                {"var_X_T", rounded(std_tr.cov.back().trace())},
                {"int_var_u", rounded(var_u)}};
  };
  json j;
  j["q"] = q;
  j["rho"] = rho;
  j["g"] = g;
  j["steps"] = steps;
  j["modified_level"] = to_string(validate(modified, kDefaultDelta, grid).level);
  j["standard_law"] = summarize(u0);
  j["modified_law"] = summarize(u);
  const auto& s = j["standard_law"];
  const auto& m = j["modified_law"];
  j["cost_increase"] =
      rounded(m["standard_cost"].get<double>() - s["standard_cost"].get<double>());
  j["variance_reduction"] = rounded(s["var_X_T"].get<double>() - m["var_X_T"].get<double>());
  j["modified_value"] = rounded(optimal_value(ric_mod, modified.x0));
  return j;
}

inline int cmd_compare(const ProblemDef& base, double q, double rho, double g,
                       const std::string& emit_modified, const Common& o, std::ostream& out) {
  const json j = compare_json(base, q, rho, g, o.steps, emit_modified);
  if (!o.out.empty()) std::ofstream(o.out) << j.dump(2) << '\n';
  if (o.format == "json") {
    out << j.dump(2) << '\n';
    return kOk;
  }
  auto row = [&](const char* label, const json& v) {
    out << std::left << std::setw(28) << label << std::setw(22)
        << number(v["standard_law"].get<double>()) << number(v["modified_law"].get<double>())
        << '\n';
  };
  auto field = [&](const char* key) {
    return json{{"standard_law", j["standard_law"][key]}, {"modified_law", j["modified_law"][key]}};
  };
  out << "q=" << number(q) << " rho=" << number(rho) << " g=" << number(g)
      << " steps=" << o.steps << " modified level " << j["modified_level"].get<std::string>()
      << '\n';
  out << std::left << std::setw(28) << "" << std::setw(22) << "standard law" << "modified law\n";
  row("standard cost", field("standard_cost"));
  row("modified cost", field("modified_cost"));
  row("tr var[X(T)]", field("var_X_T"));
  row("int tr var[u] ds", field("int_var_u"));
  out << "cost increase       " << number(j["cost_increase"].get<double>()) << '\n'
      << "variance reduction  " << number(j["variance_reduction"].get<double>()) << '\n';
  return kOk;
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline io::Table scalar_table(const scalar::ScalarLQParams& prm, const TimeGrid& grid) {
  const auto p0 = scalar::tabulate(grid, &scalar::p0, prm);
  const auto p = scalar::tabulate(grid, &scalar::p, prm);
  const auto pi = scalar::pi_solve(prm, grid);
  const auto mean = scalar::mean_Xbar(prm, grid, pi);
  const auto var = scalar::var_Xbar(prm, grid, p, pi);
  io::Table t;
  t.metadata = {std::string("mflq ") + kVersion + " scalar-demo",
                "b=" + io::fmt(prm.b) + " g0=" + io::fmt(prm.g0) + " g=" + io::fmt(prm.g) +
                    " T=" + io::fmt(prm.T) + " x=" + io::fmt(prm.x),
                io::grid_metadata(grid)};
  t.columns = {"t", "p0", "pi", "p", "bound", "mean", "var"};
  const double ratio = prm.g0 / (prm.g0 + prm.g);
  for (int k = 0; k < grid.nodes(); ++k)
    t.rows.push_back({grid.time(k), p0[k], pi[k], p[k], ratio * p[k], mean[k], var[k]});
  return t;
}

inline int cmd_scalar_demo(const scalar::ScalarLQParams& prm, const Common& o,
                           std::ostream& out) {
  prm.check();
  const TimeGrid grid(prm.T, o.steps);
  const scalar::TradeoffReport r = scalar::tradeoff_report(prm, grid);
  const io::Table table = scalar_table(prm, grid);
  auto verdict = [](bool b) { return b ? "PASS" : "FAIL"; };
  if (o.format == "json") {
    json j{{"J0_standard", rounded(r.J0_standard)},
           {"J0_modified", rounded(r.J0_modified)},
           {"Jhat_modified", rounded(r.Jhat_modified)},
           {"var_T_standard", rounded(r.var_T_standard)},
           {"var_T_modified", rounded(r.var_T_modified)},
           {"cost_increase", rounded(r.cost_increase)},
           {"bound_lhs", rounded(r.bound_lhs)},
           {"riccati_ordering", r.riccati_ordering},
           {"pointwise_bound", r.pointwise_bound},
           {"variance_order", r.variance_order},
           {"cost_order", r.cost_order}};
    if (r.bound_rhs) j["bound_rhs"] = rounded(*r.bound_rhs);
    if (r.price_bound) j["price_bound"] = *r.price_bound;
    out << j.dump(2) << '\n';
  } else {
    out << "b=" << number(prm.b) << " g0=" << number(prm.g0) << " g=" << number(prm.g)
        << " T=" << number(prm.T) << " x=" << number(prm.x) << " steps=" << o.steps << '\n'
        << "J0(u0) = " << fixed6(r.J0_standard) << "   standard optimal cost\n"
        << "J0(u)  = " << fixed6(r.J0_modified) << "   standard cost of the penalized law\n"
        << "Jhat(u)= " << fixed6(r.Jhat_modified) << "   penalized optimal cost\n"
        << "var X0(T) = " << fixed6(r.var_T_standard)
        << "   var X(T) = " << fixed6(r.var_T_modified) << '\n'
        << "cost increase = " << fixed6(r.cost_increase) << '\n';
    out << verdict(r.riccati_ordering) << "  p0 < pi < p before T\n"
        << verdict(r.pointwise_bound) << "  p0 > g0/(g0+g) p\n"
        << verdict(r.variance_order) << "  var X(T) < var X0(T)\n";
    if (r.price_bound) {
      out << verdict(*r.price_bound) << "  0 <= J0(u) - J0(u0) + g var X(T) <= (g/g0) J0(u0)"
          << "  [" << fixed6(r.bound_lhs) << " <= " << fixed6(*r.bound_rhs) << "]\n";
    } else {
      out << "n/a   price bound (g0 = 0)\n";
    }
    // Coarse table on stdout; the full one goes to --out / MFLQ_OUTPUT_DIR.
    io::Table coarse = table;
    coarse.rows.clear();
    int last = -1;
    for (int j = 0; j <= 10; ++j) {
      const int k = static_cast<int>(std::lround(j * grid.steps() / 10.0));
      if (k != last) coarse.rows.push_back(table.rows[k]);
      last = k;
    }
    coarse.metadata.clear();
    coarse.write_csv(out);
  }
  write_table(table, o, "scalar", out, false);
  return r.all_pass() ? kOk : kValidationFailed;
}

inline int cmd_selftest(std::ostream& out) {
  int failed = 0;
  const auto results = acceptance::run_all();
  for (const auto& r : results) {
    out << acceptance::format(r) << std::endl;
    if (!r.pass) ++failed;
  }
  out << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? kOk : kValidationFailed;
}

}  // namespace detail

/// Entry point of the command-line tool; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Mean-field linear-quadratic control toolkit", "mflq"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common o;
  std::string problem_file;
  auto add_common = [&](CLI::App* sub, bool with_problem) {
    if (with_problem)
      sub->add_option("problem", problem_file, "Problem file (JSON)")->required();
    sub->add_option("--N", o.steps, "Number of time steps (even, >= 2)")
        ->check(CLI::Validator(
            [](std::string& s) -> std::string {
              const long v = std::strtol(s.c_str(), nullptr, 10);
              return v >= 2 && v % 2 == 0 ? "" : "N must be even and >= 2";
            },
            "EVEN"))
        ->capture_default_str();
    sub->add_option("--out", o.out,
                    std::string("Output file (default: $") + kOutputDirEnv + "/<name>)");
    sub->add_option("--format", o.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  };

  auto* validate_cmd = app.add_subcommand("validate", "Check the positivity assumptions");
  add_common(validate_cmd, true);
  validate_cmd->add_option("--delta", o.delta, "Uniform positivity margin for R")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* riccati_cmd = app.add_subcommand("riccati", "Solve for P and Pi (CSV)");
  add_common(riccati_cmd, true);
  auto* gains_cmd = app.add_subcommand("gains", "Optimal feedback gains (CSV)");
  add_common(gains_cmd, true);
  auto* value_cmd = app.add_subcommand("value", "Optimal value <Pi(0)x0, x0>");
  add_common(value_cmd, true);

  std::string policy_file;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Expected cost of a supplied policy");
  add_common(evaluate_cmd, true);
  evaluate_cmd->add_option("--policy", policy_file, "Gains CSV as written by `gains`")
      ->required();

  auto* simulate_cmd = app.add_subcommand("simulate", "Particle simulation of the optimal law");
  add_common(simulate_cmd, true);
  simulate_cmd->add_option("--particles", o.particles, "Number of particles")
      ->check(CLI::Range(2, 100000000))
      ->capture_default_str();
  simulate_cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();

  std::string base_file, emit_modified;
  double q = 0.0, rho = 0.0, g = 0.0;
  auto* compare_cmd = app.add_subcommand("compare", "Standard vs variance-penalized LQ");
  add_common(compare_cmd, false);
  compare_cmd->add_option("--base", base_file, "Classical problem file")->required();
  compare_cmd->add_option("--q", q, "Running penalty on var[X]")->capture_default_str();
  compare_cmd->add_option("--rho", rho, "Running penalty on var[u]")->capture_default_str();
  compare_cmd->add_option("--g", g, "Terminal penalty on var[X(T)]")->capture_default_str();
  compare_cmd->add_option("--emit-modified", emit_modified,
                          "Also write the penalized problem file here");

  scalar::ScalarLQParams prm;
  auto* demo_cmd = app.add_subcommand("scalar-demo", "One-dimensional variance trade-off");
  add_common(demo_cmd, false);
  demo_cmd->add_option("--b", prm.b, "Control gain")->capture_default_str();
  demo_cmd->add_option("--g0", prm.g0, "Terminal weight")->capture_default_str();
  demo_cmd->add_option("--g", prm.g, "Terminal variance penalty")->capture_default_str();
  demo_cmd->add_option("--T", prm.T, "Horizon")->capture_default_str();
  demo_cmd->add_option("--x", prm.x, "Initial state")->capture_default_str();

  auto* selftest_cmd = app.add_subcommand("selftest", "Run the acceptance suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*selftest_cmd) return cmd_selftest(out);
    if (*demo_cmd) return cmd_scalar_demo(prm, o, out);
    if (*compare_cmd) {
      const ProblemDef base = io::read_problem(base_file);
      return cmd_compare(base, q, rho, g, emit_modified, o, out);
    }
    const ProblemDef p = io::read_problem(problem_file);
    if (*validate_cmd) return cmd_validate(p, o, out);
    if (*value_cmd) return cmd_value(p, o, out);
    if (*evaluate_cmd) return cmd_evaluate(p, policy_file, o, out);
    if (*simulate_cmd) return cmd_simulate(p, o, out);
    const RiccatiSolution ric = solve_riccati(p, o.steps);
    if (*riccati_cmd) {
      write_table(io::riccati_table(ric), o, "riccati", out, true);
    } else if (*gains_cmd) {
      write_table(io::gains_table(synthesize(p, ric)), o, "gains", out, true);
    }
    return kOk;
  } catch (const ParseError& e) {
    err << "error: ";
    if (e.line() > 0) err << "line " << e.line() << ": ";
    err << e.what() << '\n';
    return kUsage;
  } catch (const IllConditionedError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace mflq::cli
