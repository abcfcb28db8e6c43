#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mflq/cli.hpp"

using namespace mflq;
namespace fs = std::filesystem;

namespace {

const std::string kProblems = MFLQ_PROBLEMS_DIR;

struct RunResult {
  int code;
  std::string out, err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "mflq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string problem(const char* name) { return kProblems + "/" + name; }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mflq_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string dir() const { return path_.string(); }

 private:
  fs::path path_;
};

std::string write(const TempDir& d, const std::string& name, const std::string& text) {
  const std::string path = d.file(name);
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------------

TEST(ProblemFile, RoundTripPreservesEveryCoefficient) {
  TempDir d;
  const ProblemDef p = io::read_problem(problem("two_dim.json"));
  io::write_problem(p, d.file("copy.json"));
  const ProblemDef q = io::read_problem(d.file("copy.json"));
  EXPECT_EQ(q.n, p.n);
  EXPECT_EQ(q.m, p.m);
  EXPECT_EQ(q.T, p.T);
  EXPECT_TRUE(q.A == p.A);
  EXPECT_TRUE(q.Q == p.Q);
  EXPECT_TRUE(q.R_hat == p.R_hat);
  EXPECT_TRUE(q.G_hat == p.G_hat);
  EXPECT_TRUE(q.x0 == p.x0);
  EXPECT_FALSE(p.Q.is_constant());
}

TEST(ProblemFile, OptionalTermsDefaultToZero) {
  const ProblemDef p = io::read_problem(problem("scalar_standard.json"));
  EXPECT_TRUE(p.is_classical());
  EXPECT_EQ(p.G_hat(0, 0), 0.0);
  EXPECT_EQ(p.B1.at(0.0)(0, 0), 0.0);
}

TEST(ProblemFile, SyntaxErrorsCarryLine) {
  try {
    io::parse_problem("{\n  \"n\": 1,\n  \"m\": 1,\n  \"T\": 1.0\n  \"x0\": [1]\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5);
  }
}

TEST(ProblemFile, FieldErrorsCarryLineAndField) {
  const std::string text =
      "{\n  \"n\": 1,\n  \"m\": 1,\n  \"T\": 1.0,\n  \"x0\": [1.0],\n"
      "  \"A\": {\"constant\": [[0.0]]},\n  \"B\": {\"constant\": [[1.0]]},\n"
      "  \"Q\": {\"constant\": [[0.0]]},\n  \"R\": {\"constant\": \"one\"},\n"
      "  \"G\": [[1.0]]\n}";
  try {
    io::parse_problem(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "R");
    EXPECT_EQ(e.line(), 9);
  }
}

TEST(ProblemFile, MissingRequiredField) {
  try {
    io::parse_problem("{\"n\": 1, \"m\": 1, \"T\": 1.0, \"x0\": [1.0]}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "A");
  }
}

TEST(ProblemFile, DimensionMismatchRejected) {
  EXPECT_THROW(io::parse_problem("{\"n\": 2, \"m\": 1, \"T\": 1.0, \"x0\": [1.0, 0.0],"
                                 "\"A\": {\"constant\": [[0.0]]}, \"B\": {\"constant\": [[1.0]]},"
                                 "\"Q\": {\"constant\": [[0.0]]}, \"R\": {\"constant\": [[1.0]]},"
                                 "\"G\": [[1.0]]}"),
               ParseError);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

TEST(Tables, CsvRoundTripKeepsTwelveDigits) {
  io::Table t;
  t.metadata = {"note"};
  t.columns = {"t", "x"};
  t.rows = {{0.0, 1.0 / 3.0}, {0.5, -2.718281828459045e-7}};
  std::stringstream ss;
  t.write_csv(ss);
  const io::Table r = io::read_csv(ss);
  EXPECT_EQ(r.metadata, t.metadata);
  EXPECT_EQ(r.columns, t.columns);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_NEAR(r.rows[0][1], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.rows[1][1] / -2.718281828459045e-7, 1.0, 1e-11);
}

TEST(Tables, MalformedCsvReportsLine) {
  std::stringstream ss("# meta\nt,x\n0,1\n0.5,abc\n");
  try {
    io::read_csv(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Tables, GainsRoundTripReproducesCost) {
  const ProblemDef p = io::read_problem(problem("two_dim.json"));
  const RiccatiSolution ric = solve_riccati(p, 256);
  const AffinePolicy pol = synthesize(p, ric);
  std::stringstream ss;
  io::gains_table(pol).write_csv(ss);
  const AffinePolicy back = io::policy_from_table(io::read_csv(ss), p.n, p.m);
  const double a = propagate(p, pol, pol.grid).total_cost;
  const double b = propagate(p, back, back.grid).total_cost;
  EXPECT_NEAR(a, b, 1e-10 * (1.0 + a));
}

TEST(Tables, RiccatiColumns) {
  const ProblemDef p = io::read_problem(problem("two_dim.json"));
  const io::Table t = io::riccati_table(solve_riccati(p, 8));
  EXPECT_EQ(t.columns.front(), "t");
  EXPECT_EQ(t.columns.size(), 1u + 2u * p.n * p.n);
  EXPECT_EQ(t.rows.size(), 9u);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

TEST(Cli, ValidateShippedProblems) {
  for (const char* f : {"scalar_standard.json", "scalar_modified.json", "two_dim.json"}) {
    const RunResult r = run({"validate", problem(f)});
    EXPECT_EQ(r.code, 0) << f << "\n" << r.err;
    EXPECT_NE(r.out.find("level: H2''"), std::string::npos);
  }
}

TEST(Cli, ValidateFailsBelowStrongestLevel) {
  TempDir d;
  const std::string f = write(d, "weak.json",
                              "{\"n\": 1, \"m\": 1, \"T\": 1.0, \"x0\": [1.0],"
                              "\"A\": {\"constant\": [[0.0]]}, \"B\": {\"constant\": [[1.0]]},"
                              "\"Q\": {\"constant\": [[1.0]]}, \"R\": {\"constant\": [[0.0]]},"
                              "\"G\": [[1.0]]}");
  const RunResult r = run({"validate", f});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("level: H2'"), std::string::npos);
  const RunResult j = run({"validate", f, "--format", "json"});
  EXPECT_EQ(nlohmann::json::parse(j.out)["level"], "H2'");
}

TEST(Cli, ValueOfShippedProblems) {
  EXPECT_EQ(run({"value", problem("scalar_standard.json")}).out, "1.0\n");
  const RunResult r = run({"value", problem("scalar_modified.json")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NEAR(std::stod(r.out), 1.15437150682, 1e-10);
}

TEST(Cli, ValueAtZeroStateIsZero) {
  TempDir d;
  std::string text = slurp(problem("two_dim.json"));
  const auto pos = text.find("\"x0\"");
  const auto end = text.find(']', pos);
  text.replace(pos, end - pos + 1, "\"x0\": [0.0, 0.0]");
  const RunResult r = run({"value", write(d, "zero.json", text)});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0.0\n");
}

TEST(Cli, GainsThenEvaluateHasNoExcess) {
  TempDir d;
  const std::string gains = d.file("gains.csv");
  ASSERT_EQ(run({"gains", problem("two_dim.json"), "--N", "512", "--out", gains}).code, 0);
  const RunResult r = run({"evaluate", problem("two_dim.json"), "--policy", gains});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto pos = r.out.find("excess");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::abs(std::stod(r.out.substr(pos + 6))), 1e-8);
}

TEST(Cli, EvaluateRejectsHorizonMismatch) {
  TempDir d;
  const std::string gains = d.file("gains.csv");
  ASSERT_EQ(run({"gains", problem("scalar_standard.json"), "--N", "16", "--out", gains}).code, 0);
  std::string text = slurp(problem("scalar_standard.json"));
  text.replace(text.find("\"T\": 1.0"), 8, "\"T\": 2.0");
  const RunResult r = run({"evaluate", write(d, "long.json", text), "--policy", gains});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, OutputDirectoryEnvironment) {
  TempDir d;
  ::setenv(cli::kOutputDirEnv, d.dir().c_str(), 1);
  const RunResult r = run({"riccati", problem("scalar_standard.json"), "--N", "8"});
  ::unsetenv(cli::kOutputDirEnv);
  EXPECT_EQ(r.code, 0);
  std::ifstream in(d.file("riccati.csv"));
  ASSERT_TRUE(in.good());
  const io::Table t = io::read_csv(in);
  EXPECT_EQ(t.rows.size(), 9u);
  EXPECT_EQ(t.rows[3][1], 1.0);
}

TEST(Cli, RiccatiJsonToStdout) {
  const RunResult r = run({"riccati", problem("scalar_standard.json"), "--N", "4", "--format", "json"});
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["rows"].size(), 5u);
  EXPECT_EQ(j["columns"][0], "t");
}

TEST(Cli, SimulateReportsConsistentEstimate) {
  const RunResult r = run({"simulate", problem("scalar_modified.json"), "--N", "256",
                           "--particles", "20000", "--seed", "3", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LT(std::abs(j["z"].get<double>()), 4.0);
  const RunResult again = run({"simulate", problem("scalar_modified.json"), "--N", "256",
                               "--particles", "20000", "--seed", "3", "--format", "json"});
  EXPECT_EQ(r.out, again.out);
}

TEST(Cli, CompareTradesCostForVariance) {
  TempDir d;
  const std::string emitted = d.file("mod.json");
  const RunResult r = run({"compare", "--base", problem("scalar_standard.json"), "--q", "0.5",
                           "--rho", "0.2", "--g", "1", "--N", "512", "--format", "json",
                           "--emit-modified", emitted});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GE(j["cost_increase"].get<double>(), 0.0);
  EXPECT_GT(j["variance_reduction"].get<double>(), 0.0);
  EXPECT_EQ(j["modified_level"], "H2''");
  EXPECT_EQ(run({"validate", emitted}).code, 0);
}

TEST(Cli, CompareNeedsClassicalBase) {
  EXPECT_EQ(run({"compare", "--base", problem("two_dim.json"), "--g", "1"}).code, 2);
}

TEST(Cli, ScalarDemoDefaults) {
  const RunResult r = run({"scalar-demo"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("J0(u0) = 1.000000"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  std::size_t passes = 0;
  for (auto p = r.out.find("PASS"); p != std::string::npos; p = r.out.find("PASS", p + 1))
    ++passes;
  EXPECT_EQ(passes, 4u);
  EXPECT_NE(r.out.find("t,p0,pi,p,bound,mean,var"), std::string::npos);
}

TEST(Cli, ScalarDemoWritesFullTable) {
  TempDir d;
  const RunResult r = run({"scalar-demo", "--g0", "2", "--N", "64", "--out", d.file("s.csv")});
  EXPECT_EQ(r.code, 0);
  std::ifstream in(d.file("s.csv"));
  EXPECT_EQ(io::read_csv(in).rows.size(), 65u);
}

TEST(Cli, ExitCodes) {
  TempDir d;
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  EXPECT_EQ(run({"value"}).code, 2);
  EXPECT_EQ(run({"value", d.file("missing.json")}).code, 2);
  EXPECT_EQ(run({"value", problem("scalar_standard.json"), "--format", "xml"}).code, 2);
  EXPECT_EQ(run({"scalar-demo", "--g", "0"}).code, 2);
  EXPECT_EQ(run({"value", problem("scalar_standard.json"), "--N", "7"}).code, 2);
  EXPECT_EQ(run({"value", problem("scalar_standard.json"), "--N", "0"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);

  const RunResult bad = run({"value", write(d, "bad.json", "{\n\"n\": 1,\n\"m\": 1,\n\"T\": x\n}")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("line 4"), std::string::npos) << bad.err;

  const std::string singular = write(d, "singular.json",
                                     "{\"n\": 1, \"m\": 1, \"T\": 1.0, \"x0\": [1.0],"
                                     "\"A\": {\"constant\": [[0.0]]}, \"B\": {\"constant\": [[1.0]]},"
                                     "\"Q\": {\"constant\": [[1.0]]}, \"R\": {\"constant\": [[0.0]]},"
                                     "\"G\": [[1.0]]}");
  const RunResult num = run({"value", singular});
  EXPECT_EQ(num.code, 3);
  EXPECT_NE(num.err.find("t = 1"), std::string::npos) << num.err;
}

TEST(Cli, ExecutableExitStatus) {
  const std::string exe = MFLQ_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("value " + problem("scalar_standard.json")), 0);
  EXPECT_EQ(status("value /nonexistent.json"), 2);
  EXPECT_EQ(status("--version"), 0);
}
