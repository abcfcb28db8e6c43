#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mflq/core.hpp"
#include "mflq/feedback.hpp"
#include "mflq/mcsim.hpp"
#include "mflq/moments.hpp"
#include "mflq/problem.hpp"
#include "mflq/riccati.hpp"

namespace mflq {

inline constexpr const char* kVersion = "0.3.0";

/// Malformed input file; carries a line (0 when unknown) and a field name.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, std::string field = {})
      : Error(what), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

namespace io {

using json = nlohmann::json;

/// Formats a double with 12 significant digits.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Problem files (JSON)
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix matrix_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty())
    throw ParseError("field '" + field + "': expected a non-empty array of rows", 0, field);
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty())
    throw ParseError("field '" + field + "': rows must be non-empty arrays", 0, field);
  const std::size_t cols = j[0].size();
  Matrix M(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ParseError("field '" + field + "': row " + std::to_string(r) +
                           " has the wrong length", 0, field);
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw ParseError("field '" + field + "': entry (" + std::to_string(r) + "," +
                             std::to_string(c) + ") is not a number", 0, field);
      M(r, c) = j[r][c].get<double>();
      if (!std::isfinite(M(r, c)))
        throw ParseError("field '" + field + "': non-finite entry", 0, field);
    }
  }
  return M;
}

inline json matrix_to(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CoefficientSchedule schedule_from(const json& j, const std::string& field) {
  if (!j.is_object())
    throw ParseError("field '" + field + "': expected {\"constant\": ...} or {\"sampled\": ...}",
                     0, field);
  if (j.contains("constant")) return CoefficientSchedule(matrix_from(j["constant"], field));
  if (j.contains("sampled")) {
    const json& s = j["sampled"];
    if (!s.is_object() || !s.contains("times") || !s.contains("values"))
      throw ParseError("field '" + field + "': sampled needs times and values", 0, field);
    if (!s["times"].is_array() || !s["values"].is_array())
      throw ParseError("field '" + field + "': times/values must be arrays", 0, field);
    std::vector<double> times;
    for (const auto& t : s["times"]) {
      if (!t.is_number())
        throw ParseError("field '" + field + "': times must be numbers", 0, field);
      times.push_back(t.get<double>());
    }
    std::vector<Matrix> values;
    for (const auto& v : s["values"]) values.push_back(matrix_from(v, field));
    try {
      return CoefficientSchedule::sampled(std::move(times), std::move(values));
    } catch (const Error& e) {
      throw ParseError("field '" + field + "': " + e.what(), 0, field);
    }
  }
  throw ParseError("field '" + field + "': expected key constant or sampled", 0, field);
}

inline json schedule_to(const CoefficientSchedule& s) {
  if (s.is_constant()) return json{{"constant", matrix_to(s.values().front())}};
  json values = json::array();
  for (const auto& v : s.values()) values.push_back(matrix_to(v));
  return json{{"sampled", json{{"times", s.times()}, {"values", values}}}};
}

inline int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

/// Coefficient keys in a problem file. Hatted terms, A1 and B1 default to
/// zero when omitted; A, B, Q, R, G are required.
inline constexpr const char* kScheduleKeys[] = {"A",  "A_hat",  "A1", "A1_hat",
                                                "B",  "B_hat",  "B1", "B1_hat",
                                                "Q",  "Q_hat",  "R",  "R_hat"};

inline ProblemDef problem_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("problem file: top level must be an object");
  auto require = [&](const char* key) -> const json& {
    if (!j.contains(key))
      throw ParseError(std::string("problem file: missing field '") + key + "'", 0, key);
    return j[key];
  };
  auto integer = [&](const char* key) {
    const json& v = require(key);
    if (!v.is_number_integer() || v.get<long long>() < 1)
      throw ParseError(std::string("field '") + key + "': expected a positive integer", 0, key);
    return static_cast<int>(v.get<long long>());
  };
  const int n = integer("n");
  const int m = integer("m");
  const json& Tj = require("T");
  if (!Tj.is_number() || !(Tj.get<double>() > 0.0))
    throw ParseError("field 'T': expected a positive number", 0, "T");

  ProblemDef p = ProblemDef::zeros(n, m, Tj.get<double>());
  CoefficientSchedule* targets[] = {&p.A,  &p.A_hat,  &p.A1, &p.A1_hat, &p.B, &p.B_hat,
                                    &p.B1, &p.B1_hat, &p.Q,  &p.Q_hat,  &p.R, &p.R_hat};
  int idx = 0;
  for (const char* key : kScheduleKeys) {
    const std::string k = key;
    const bool required = k == "A" || k == "B" || k == "Q" || k == "R";
    if (j.contains(key)) {
      *targets[idx] = detail::schedule_from(j[key], k);
    } else if (required) {
      throw ParseError("problem file: missing field '" + k + "'", 0, k);
    }
    ++idx;
  }
  p.G = detail::matrix_from(require("G"), "G");
  if (j.contains("G_hat")) p.G_hat = detail::matrix_from(j["G_hat"], "G_hat");
  const json& xj = require("x0");
  if (!xj.is_array() || static_cast<int>(xj.size()) != n)
    throw ParseError("field 'x0': expected an array of n numbers", 0, "x0");
  for (int i = 0; i < n; ++i) {
    if (!xj[i].is_number()) throw ParseError("field 'x0': entries must be numbers", 0, "x0");
    p.x0(i) = xj[i].get<double>();
  }
  try {
    check_structure(p);
  } catch (const Error& e) {
    throw ParseError(std::string("problem file: ") + e.what());
  }
  return p;
}

inline ProblemDef parse_problem(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("problem file: JSON syntax error: ") + e.what(),
                     detail::line_of(text, e.byte));
  }
  try {
    return problem_from_json(j);
  } catch (const ParseError& e) {
    if (e.line() > 0 || e.field().empty()) throw;
    const auto pos = text.find("\"" + e.field() + "\"");
    if (pos == std::string::npos) throw;
    throw ParseError(e.what(), detail::line_of(text, pos), e.field());
  }
}

inline ProblemDef read_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

inline json problem_to_json(const ProblemDef& p) {
  json j;
  j["n"] = p.n;
  j["m"] = p.m;
  j["T"] = p.T;
  j["x0"] = std::vector<double>(p.x0.data(), p.x0.data() + p.x0.size());
  const CoefficientSchedule* sources[] = {&p.A,  &p.A_hat,  &p.A1, &p.A1_hat,
                                          &p.B,  &p.B_hat,  &p.B1, &p.B1_hat,
                                          &p.Q,  &p.Q_hat,  &p.R,  &p.R_hat};
  int idx = 0;
  for (const char* key : kScheduleKeys) j[key] = detail::schedule_to(*sources[idx++]);
  j["G"] = detail::matrix_to(p.G);
  j["G_hat"] = detail::matrix_to(p.G_hat);
  return j;
}

inline void write_problem(const ProblemDef& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << problem_to_json(p).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Time-series tables
// ---------------------------------------------------------------------------

/// Column-named numeric table with '#' metadata lines; rendered as CSV or
/// JSON.
struct Table {
  std::vector<std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write_csv(std::ostream& os) const {
    for (const auto& m : metadata) os << "# " << m << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << fmt(r[c]);
      os << '\n';
    }
  }

  json to_json() const {
    json j;
    j["metadata"] = metadata;
    j["columns"] = columns;
    json rs = json::array();
    for (const auto& r : rows) {
      json row = json::array();
      for (double v : r) row.push_back(std::stod(fmt(v)));
      rs.push_back(row);
    }
    j["rows"] = rs;
    return j;
  }
};

inline Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.metadata.push_back(line.size() > 2 ? line.substr(2) : "");
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header) {
      t.columns = cells;
      header = true;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw ParseError("csv: wrong number of cells", lineno);
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ParseError("csv: '" + c + "' is not a number", lineno);
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!header) throw ParseError("csv: missing header line");
  return t;
}

inline std::vector<std::string> matrix_columns(const std::string& prefix, int rows, int cols) {
  std::vector<std::string> out;
  for (int r = 1; r <= rows; ++r)
    for (int c = 1; c <= cols; ++c)
      out.push_back(prefix + "_" + std::to_string(r) + std::to_string(c));
  return out;
}

inline std::vector<std::string> vector_columns(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

inline void append_rowmajor(std::vector<double>& row, const Matrix& M) {
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
}

inline std::string grid_metadata(const TimeGrid& g) {
  return "steps=" + std::to_string(g.steps()) + " T=" + fmt(g.horizon());
}

/// t, P_11..P_nn, Pi_11..Pi_nn
inline Table riccati_table(const RiccatiSolution& ric) {
  Table t;
  const int n = static_cast<int>(ric.P.front().rows());
  t.metadata = {std::string("mflq ") + kVersion + " riccati", grid_metadata(ric.grid)};
  t.columns = {"t"};
  for (const auto& c : matrix_columns("P", n, n)) t.columns.push_back(c);
  for (const auto& c : matrix_columns("Pi", n, n)) t.columns.push_back(c);
  for (int k = 0; k < ric.grid.nodes(); ++k) {
    std::vector<double> row{ric.grid.time(k)};
    append_rowmajor(row, ric.P[k]);
    append_rowmajor(row, ric.Pi[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// t, F_11..F_mn, F_bar_11..F_bar_mn, c_1..c_m
inline Table gains_table(const AffinePolicy& pol) {
  Table t;
  const int m = pol.m();
  const int n = pol.n();
  t.metadata = {std::string("mflq ") + kVersion + " gains", grid_metadata(pol.grid)};
  t.columns = {"t"};
  for (const auto& c : matrix_columns("F", m, n)) t.columns.push_back(c);
  for (const auto& c : matrix_columns("F_bar", m, n)) t.columns.push_back(c);
  for (const auto& c : vector_columns("c", m)) t.columns.push_back(c);
  for (int k = 0; k < pol.grid.nodes(); ++k) {
    std::vector<double> row{pol.grid.time(k)};
    append_rowmajor(row, pol.F[k]);
    append_rowmajor(row, pol.F_bar[k]);
    for (Eigen::Index i = 0; i < pol.c[k].size(); ++i) row.push_back(pol.c[k](i));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rebuilds a policy from a gains table for a problem of size (n, m). Times
/// must form a uniform grid starting at 0.
inline AffinePolicy policy_from_table(const Table& t, int n, int m) {
  const std::size_t width = 1 + 2 * static_cast<std::size_t>(m * n) + m;
  if (t.columns.size() != width)
    throw ParseError("policy: expected " + std::to_string(width) + " columns for n=" +
                     std::to_string(n) + ", m=" + std::to_string(m));
  if (t.rows.size() < 3) throw ParseError("policy: need at least 3 rows");
  const int steps = static_cast<int>(t.rows.size()) - 1;
  const double T = t.rows.back()[0];
  TimeGrid grid(T, steps);
  if (std::abs(t.rows.front()[0]) > time_tolerance(T))
    throw ParseError("policy: first time must be 0");
  AffinePolicy pol = AffinePolicy::zero(grid, n, m);
  for (int k = 0; k <= steps; ++k) {
    const auto& r = t.rows[k];
    if (std::abs(r[0] - grid.time(k)) > 1e-9 * std::max(1.0, T))
      throw ParseError("policy: times are not a uniform grid", 0, "t");
    std::size_t i = 1;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < n; ++b) pol.F[k](a, b) = r[i++];
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < n; ++b) pol.F_bar[k](a, b) = r[i++];
    for (int a = 0; a < m; ++a) pol.c[k](a) = r[i++];
  }
  return pol;
}

/// t, m_1..m_n, Sigma_11..Sigma_nn, running_cost
inline Table trajectory_table(const MomentTrajectory& tr) {
  Table t;
  const int n = static_cast<int>(tr.mean.front().size());
  t.metadata = {std::string("mflq ") + kVersion + " moments", grid_metadata(tr.grid),
                "total_cost=" + fmt(tr.total_cost) + " terminal_cost=" + fmt(tr.terminal_cost)};
  t.columns = {"t"};
  for (const auto& c : vector_columns("m", n)) t.columns.push_back(c);
  for (const auto& c : matrix_columns("Sigma", n, n)) t.columns.push_back(c);
  t.columns.push_back("running_cost");
  for (int k = 0; k < tr.grid.nodes(); ++k) {
    std::vector<double> row{tr.grid.time(k)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(tr.mean[k](i));
    append_rowmajor(row, tr.cov[k]);
    row.push_back(tr.running_cost[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// t, mean_1..mean_n, var_11..var_nn, cost_estimate, std_error. The last row
/// carries the total (running + terminal) cost estimate.
inline Table ensemble_table(const ParticleEnsemble& ens) {
  Table t;
  const int n = static_cast<int>(ens.mean.front().size());
  t.metadata = {std::string("mflq ") + kVersion + " simulate",
                "seed=" + std::to_string(ens.seed) + " N=" + std::to_string(ens.particles) +
                    " closure=" + (ens.closure == MeanClosure::exact ? "exact" : "empirical"),
                grid_metadata(ens.grid),
                "total_cost=" + fmt(ens.cost_estimate) + " std_error=" + fmt(ens.cost_std_error)};
  t.columns = {"t"};
  for (const auto& c : vector_columns("mean", n)) t.columns.push_back(c);
  for (const auto& c : matrix_columns("var", n, n)) t.columns.push_back(c);
  t.columns.push_back("cost_estimate");
  t.columns.push_back("std_error");
  const int N = ens.grid.steps();
  for (int k = 0; k <= N; ++k) {
    std::vector<double> row{ens.grid.time(k)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(ens.mean[k](i));
    append_rowmajor(row, ens.cov[k]);
    row.push_back(k == N ? ens.cost_estimate : ens.running_cost[k]);
    row.push_back(k == N ? ens.cost_std_error : ens.running_stderr[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace io
}  // namespace mflq
