#include <doctest.h>

#include <filesystem>
#include <string>

#include "uotkit/config.hpp"
#include "uotkit/experiments.hpp"
#include "uotkit/io.hpp"
#include "uotkit/solver.hpp"

using namespace uot;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(1e-20) == "1e-20");
}

TEST_CASE("measure csv round trip") {
  Matrix x(3, 2);
  x << 0.5, -1.25, 2, 3, 1e-7, 4;
  Vector w(3);
  w << 0.25, 0.25, 0.5;
  const auto m = make_measure(x, w);
  const std::vector<int> labels{0, 1, -1};
  const std::string text = measure_csv(m, labels);
  CHECK(text.rfind("x0,x1,weight,label\n", 0) == 0);
  const auto back = parse_measure_csv(text);
  CHECK(back.measure.points.isApprox(x, 1e-12));
  CHECK(back.measure.weights.isApprox(w, 1e-12));
  CHECK(back.labels == labels);

  const auto bare = parse_measure_csv("x0\n1\n2\n3\n4\n");
  CHECK(bare.measure.points.rows() == 4);
  CHECK(bare.measure.weights.isApprox(Vector::Constant(4, 0.25)));
  CHECK(bare.labels == std::vector<int>(4, 0));

  CHECK_THROWS_AS(parse_measure_csv("x0,colour\n1,red\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_measure_csv("x0,x1\n1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_measure_csv("x0\nabc\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_measure_csv(""), std::invalid_argument);
}

TEST_CASE("plan csv and diagnostics") {
  Matrix p(2, 3);
  p << 0.1, 0.2, 0.0, 1.0 / 3.0, 1e-30, 0.5;
  const auto back = parse_plan_csv(plan_csv(p));
  CHECK((back - p).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(plan_csv(p).rfind("t0,t1,t2\n", 0) == 0);

  Vector a = Vector::Constant(2, 0.5);
  SolverConfig cfg;
  cfg.epsilon_abs = 0.5;
  const auto plan = solve(a, a, CostMatrix{Matrix::Identity(2, 2), 0.5}, cfg);
  const std::string diag = plan_diagnostics(plan);
  CHECK(contains(diag, "converged = true"));
  CHECK(contains(diag, "epsilon = 0.5"));
  CHECK(contains(diag, "row_marginal = "));
  CHECK(contains(diag, "lambda1 = inf"));
}

TEST_CASE("loss history, trajectories and report tables") {
  const std::vector<double> losses{1.0, 0.5};
  CHECK(loss_history_csv(losses) == "iter,loss\n0,1\n1,0.5\n");

  Matrix s0(2, 1), s1(2, 1);
  s0 << 0, 1;
  s1 << 0.5, 1.5;
  const auto rows = parse_csv(trajectory_csv({s0, s1}));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"point_id", "t", "x0"});
  CHECK(rows[2] == std::vector<std::string>{"0", "1", "0.5"});
  CHECK(rows[3] == std::vector<std::string>{"1", "0", "1"});

  EvalReport a, b;
  a.dataset = b.dataset = "uniform_mixture";
  a.estimator = b.estimator = "coupling_only";
  a.mode = b.mode = "unbalanced";
  b.tau = 0.9;
  a.add("cross_cluster_mass", 0.2);
  b.add("cross_cluster_mass", 0.01);
  b.add("total_mass", 0.8);
  const auto table = parse_csv(reports_csv({a, b}));
  REQUIRE(table.size() == 3);
  CHECK(table[0] == std::vector<std::string>{"dataset", "estimator", "mode", "tau", "seed", "cross_cluster_mass",
                                              "total_mass"});
  CHECK(table[1].back() == "");
  CHECK(table[2][3] == "0.9");
}

TEST_CASE("atomic writes") {
  const auto dir = std::filesystem::temp_directory_path() / "uotkit_io_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  write_file_atomic(dir / "a.txt", "first");
  write_file_atomic(dir / "a.txt", "second");
  CHECK(read_file(dir / "a.txt") == "second");
  CHECK_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  CHECK_THROWS(read_file(dir / "missing.txt"));
  std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("config document") {
  const auto doc = ConfigDocument::parse(
      "# comment\n"
      "top = 1\n"
      "[s]\n"
      "name = hello world  # trailing\n"
      "x = 2.5\n"
      "n = 7\n"
      "flag = true\n"
      "list = 1, 0.99, 0.9\n");
  CHECK(doc.get_int("", "top", 0) == 1);
  CHECK(doc.get_string("s", "name", "") == "hello world");
  CHECK(doc.get_double("s", "x", 0) == 2.5);
  CHECK(doc.get_bool("s", "flag", false));
  CHECK(doc.get_doubles("s", "list", {}) == std::vector<double>{1, 0.99, 0.9});
  CHECK(doc.get_double("s", "absent", 3.0) == 3.0);
  CHECK_THROWS_WITH_AS(doc.get_int("s", "x", 0), doctest::Contains("s.x (line 5)"), ConfigError);
  CHECK_THROWS_WITH_AS(doc.get_bool("s", "name", false), doctest::Contains("s.name"), ConfigError);
  CHECK_THROWS_WITH_AS(doc.require_known({{"s", {"name"}}}), doctest::Contains("top"), ConfigError);

  CHECK_THROWS_AS(ConfigDocument::parse("[s]\na = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(ConfigDocument::parse("[broken\n"), ConfigError);
  CHECK_THROWS_AS(ConfigDocument::parse("no equals sign\n"), ConfigError);
}

TEST_CASE("experiment config") {
  const auto cfg = parse_experiment_config(
      "[experiment]\n"
      "estimator = coupling_only\n"
      "coupling_mode = unbalanced\n"
      "taus = 1, 0.99, 0.9\n"
      "seeds = 0, 1\n"
      "output = out_dir\n"
      "[dataset]\n"
      "kind = uniform_mixture\n"
      "[solver]\n"
      "epsilon_abs = 0.1\n"
      "tolerance = 1e-9\n");
  CHECK(cfg.estimator == Estimator::coupling_only);
  CHECK(cfg.coupling == PairingMode::unbalanced);
  CHECK(cfg.taus == std::vector<double>{1.0, 0.99, 0.9});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(cfg.output == "out_dir");
  CHECK(cfg.solver.epsilon_abs == 0.1);
  CHECK(cfg.solver.tolerance == 1e-9);
  CHECK(cfg.dataset.kind == DatasetKind::uniform_mixture);

  CHECK(contains(config_error("[experiment]\nestimator = magic\n"), "experiment.estimator"));
  CHECK(contains(config_error("[experiment]\nestimatr = fm\n"), "experiment.estimatr"));
  CHECK(contains(config_error("[solvr]\nmax_iters = 5\n"), "solvr"));
  CHECK(contains(config_error("[solver]\nmax_iters = 0\n"), "solver.max_iters"));
  CHECK(contains(config_error("[training]\nhidden = 64, x\n"), "training.hidden"));
  CHECK(contains(config_error("[dataset]\nsource_counts = 1, 2, 3\n"), "dataset.source_counts"));
  CHECK_FALSE(config_error("[experiment]\ntaus = 0.9\ncoupling_mode = balanced\n").empty());
  CHECK_FALSE(config_error("[experiment]\nestimator = monge_gap\ncoupling_mode = independent\n").empty());
}
