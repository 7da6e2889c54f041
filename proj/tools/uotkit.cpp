#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "uotkit/config.hpp"
#include "uotkit/experiments.hpp"
#include "uotkit/grad_suite.hpp"
#include "uotkit/io.hpp"
#include "uotkit/solver.hpp"

namespace {

int report_outcome(const uot::RunOutcome& outcome) {
  for (const auto& f : outcome.failures) std::cerr << "uotkit: cell failed: " << f << "\n";
  for (const auto& p : outcome.written) std::cout << "wrote " << p.string() << "\n";
  return outcome.failures.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbalanced entropic optimal transport and neural Monge map estimators"};
  app.require_subcommand(1);

  std::string source_path, target_path, out_path, diag_path;
  double tau1 = 1.0, tau2 = 1.0, epsilon_scale = 0.01;
  std::optional<double> epsilon_abs, tolerance;
  int max_iters = 10000;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one entropic (U)OT problem between two CSV point clouds");
  solve_cmd->add_option("--source", source_path, "Source CSV (x0,...,weight,label)")->required();
  solve_cmd->add_option("--target", target_path, "Target CSV")->required();
  solve_cmd->add_option("--tau1", tau1, "Source marginal relaxation in (0, 1]");
  solve_cmd->add_option("--tau2", tau2, "Target marginal relaxation in (0, 1]");
  solve_cmd->add_option("--epsilon-scale", epsilon_scale, "epsilon as a multiple of the mean cost");
  solve_cmd->add_option("--epsilon-abs", epsilon_abs, "Absolute epsilon (overrides --epsilon-scale)");
  solve_cmd->add_option("--max-iters", max_iters, "Sweep limit");
  solve_cmd->add_option("--tol", tolerance, "Absolute potential-change tolerance (default 1e-6 * mean cost)");
  solve_cmd->add_option("--out", out_path, "Plan CSV output path")->required();
  solve_cmd->add_option("--diag", diag_path, "Diagnostics output path (default: stdout)");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", config_path, "Config file")->required();

  uot::Fig2Options fig2;
  std::string fig2_out = fig2.output.string();
  auto* fig2_cmd = app.add_subcommand("reproduce-fig2", "Mixture-of-uniforms couplings and FM/OT-FM/UOT-FM maps");
  fig2_cmd->add_option("--out", fig2_out, "Output directory");
  fig2_cmd->add_option("--iterations", fig2.iterations, "Training iterations per flow");
  fig2_cmd->add_option("--seed", fig2.seed, "Dataset and training seed");
  fig2_cmd->add_option("--ode-steps", fig2.ode_steps, "RK4 steps for pushing points through the flows");

  std::uint64_t grad_seed = 0;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference checks of the training-loss gradients");
  grad_cmd->add_option("--seed", grad_seed, "Instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*solve_cmd) {
      uot::SolverConfig cfg;
      cfg.tau1 = tau1;
      cfg.tau2 = tau2;
      cfg.epsilon_scale = epsilon_scale;
      cfg.epsilon_abs = epsilon_abs;
      cfg.max_iters = max_iters;
      cfg.tolerance = tolerance;
      uot::validate(cfg);
      const auto src = uot::parse_measure_csv(uot::read_file(source_path));
      const auto tgt = uot::parse_measure_csv(uot::read_file(target_path));
      const auto plan = uot::solve(src.measure, tgt.measure, cfg);
      uot::write_file_atomic(out_path, uot::plan_csv(plan.plan));
      const std::string diag = uot::plan_diagnostics(plan);
      if (diag_path.empty()) {
        std::cout << diag;
      } else {
        uot::write_file_atomic(diag_path, diag);
      }
      if (!plan.converged) std::cerr << "uotkit: warning: solver did not converge within " << max_iters << " sweeps\n";
      return 0;
    }
    if (*run_cmd) {
      return report_outcome(uot::run_experiment(uot::load_experiment_config(config_path)));
    }
    if (*fig2_cmd) {
      fig2.output = fig2_out;
      return report_outcome(uot::reproduce_fig2(fig2));
    }
    if (*grad_cmd) {
      bool ok = true;
      for (const auto& e : uot::run_grad_suite(grad_seed)) {
        std::printf("%-18s max_rel_err=%.3e threshold=%.0e %s\n", e.name.c_str(), e.max_relative_error, e.threshold,
                    e.pass() ? "ok" : "FAIL");
        ok = ok && e.pass();
      }
      return ok ? 0 : 1;
    }
  } catch (const uot::ConfigError& e) {
    std::cerr << "uotkit: config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "uotkit: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
