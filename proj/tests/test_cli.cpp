#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "uotkit/io.hpp"
#include "uotkit/rng.hpp"

using namespace uot;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "uotkit_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Outcome run_cli(const std::string& args) {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = std::string("\"") + UOTKIT_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.out = read_file(out);
  o.err = read_file(err);
  return o;
}

std::string path_arg(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("solve on single points") {
  write_file_atomic(scratch() / "one_a.csv", "x0,x1\n0,0\n");
  write_file_atomic(scratch() / "one_b.csv", "x0,x1\n1,2\n");
  const auto o = run_cli("solve --source " + path_arg(scratch() / "one_a.csv") + " --target " +
                         path_arg(scratch() / "one_b.csv") + " --out " + path_arg(scratch() / "one_plan.csv"));
  CHECK(o.status == 0);
  CHECK(read_file(scratch() / "one_plan.csv") == "t0\n1\n");
  CHECK(o.out.find("converged = true") != std::string::npos);
}

TEST_CASE("solve rejects bad arguments") {
  write_file_atomic(scratch() / "one_a.csv", "x0,x1\n0,0\n");
  auto o = run_cli("solve --source " + path_arg(scratch() / "one_a.csv") + " --target " +
                   path_arg(scratch() / "one_a.csv") + " --tau1 0 --out " + path_arg(scratch() / "bad.csv"));
  CHECK(o.status == 1);
  CHECK(o.err.find("tau") != std::string::npos);
  CHECK_FALSE(fs::exists(scratch() / "bad.csv"));

  o = run_cli("solve --source " + path_arg(scratch() / "nope.csv") + " --target " + path_arg(scratch() / "nope.csv") +
              " --out " + path_arg(scratch() / "bad.csv"));
  CHECK(o.status == 1);
  CHECK(o.err.rfind("uotkit: error:", 0) == 0);
}

TEST_CASE("plan rows match the reported marginal") {
  Rng rng(5);
  std::ostringstream a, b;
  a << "x0,x1\n";
  b << "x0,x1\n";
  for (int i = 0; i < 10; ++i) a << rng.normal() << "," << rng.normal() << "\n";
  for (int i = 0; i < 10; ++i) b << rng.normal() + 1 << "," << rng.normal() << "\n";
  write_file_atomic(scratch() / "ten_a.csv", a.str());
  write_file_atomic(scratch() / "ten_b.csv", b.str());
  const auto o = run_cli("solve --source " + path_arg(scratch() / "ten_a.csv") + " --target " +
                         path_arg(scratch() / "ten_b.csv") + " --tau1 0.9 --tau2 0.9 --out " +
                         path_arg(scratch() / "ten_plan.csv") + " --diag " + path_arg(scratch() / "ten_diag.txt"));
  REQUIRE(o.status == 0);
  const Matrix plan = parse_plan_csv(read_file(scratch() / "ten_plan.csv"));
  REQUIRE(plan.rows() == 10);
  const std::string diag = read_file(scratch() / "ten_diag.txt");
  const auto pos = diag.find("row_marginal = ");
  REQUIRE(pos != std::string::npos);
  std::istringstream row(diag.substr(pos + 15, diag.find('\n', pos) - pos - 15));
  for (Eigen::Index i = 0; i < 10; ++i) {
    double v = -1;
    row >> v;
    CHECK(std::abs(v - plan.row(i).sum()) <= 1e-10);
  }
}

TEST_CASE("run a coupling experiment") {
  const auto out_dir = scratch() / "run_out";
  const std::string config =
      "[experiment]\n"
      "estimator = coupling_only\n"
      "coupling_mode = unbalanced\n"
      "taus = 1, 0.99, 0.9\n"
      "seeds = 0\n"
      "output = " +
      out_dir.string() +
      "\n"
      "[dataset]\n"
      "kind = uniform_mixture\n"
      "[solver]\n"
      "epsilon_abs = 0.1\n";
  write_file_atomic(scratch() / "run.ini", config);
  const auto o = run_cli("run " + path_arg(scratch() / "run.ini"));
  REQUIRE(o.status == 0);
  const auto first = read_file(out_dir / "metrics.csv");
  const auto rows = parse_csv(first);
  REQUIRE(rows.size() == 4);
  CHECK(std::find(rows[0].begin(), rows[0].end(), "cross_cluster_mass") != rows[0].end());

  REQUIRE(run_cli("run " + path_arg(scratch() / "run.ini")).status == 0);
  CHECK(read_file(out_dir / "metrics.csv") == first);

  write_file_atomic(scratch() / "bad.ini", "[experiment]\nestimator = magic\n");
  const auto bad = run_cli("run " + path_arg(scratch() / "bad.ini"));
  CHECK(bad.status == 1);
  CHECK(bad.err.find("experiment.estimator") != std::string::npos);
}

TEST_CASE("unknown subcommand") { CHECK(run_cli("frobnicate").status != 0); }
