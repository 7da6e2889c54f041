#include "uotkit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include "uotkit/config.hpp"
#include "uotkit/io.hpp"
#include "uotkit/monge_gap.hpp"
#include "uotkit/rebalance.hpp"
#include "uotkit/svg.hpp"

namespace uot {

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::fm: return "fm";
    case Estimator::monge_gap: return "monge_gap";
    case Estimator::coupling_only: return "coupling_only";
  }
  return "?";
}

const char* to_string(PairingMode m) {
  switch (m) {
    case PairingMode::independent: return "independent";
    case PairingMode::balanced: return "balanced";
    case PairingMode::unbalanced: return "unbalanced";
  }
  return "?";
}

namespace {

const char* kSourceColor = "#1f77b4";
const char* kTargetColor = "#ff7f0e";
const char* kMappedColor = "#2ca02c";
const char* kLineColor = "#555555";

template <class E>
E pick(const ConfigDocument& doc, const std::string& section, const std::string& key, E fallback,
       const std::vector<std::pair<std::string, E>>& options) {
  const auto raw = doc.raw(section, key);
  if (!raw) return fallback;
  for (const auto& [name, value] : options) {
    if (*raw == name) return value;
  }
  std::string choices;
  for (const auto& [name, value] : options) choices += (choices.empty() ? "" : ", ") + name;
  throw ConfigError(section + "." + key + ": unknown value '" + *raw + "' (expected one of: " + choices + ")");
}

void override_counts(const ConfigDocument& doc, const std::string& key, std::vector<UniformBox>& boxes,
                     std::vector<GaussianBlob>& blobs) {
  if (!doc.has("dataset", key)) return;
  const auto counts = doc.get_ints("dataset", key, {});
  const std::size_t clusters = boxes.empty() ? blobs.size() : boxes.size();
  if (counts.size() != clusters) {
    throw ConfigError("dataset." + key + ": expected " + std::to_string(clusters) + " counts, got " +
                      std::to_string(counts.size()));
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] <= 0) throw ConfigError("dataset." + key + ": counts must be positive");
    if (boxes.empty()) {
      blobs[k].count = static_cast<int>(counts[k]);
    } else {
      boxes[k].count = static_cast<int>(counts[k]);
    }
  }
}

std::string tau_tag(double tau) { return "tau" + format_number(tau); }

std::string cell_name(std::uint64_t seed, double tau) { return "s" + std::to_string(seed) + "_" + tau_tag(tau); }

double tail_mean(const std::vector<double>& xs, std::size_t window = 100) {
  if (xs.empty()) return 0.0;
  const std::size_t k = std::min(window, xs.size());
  double s = 0.0;
  for (std::size_t i = xs.size() - k; i < xs.size(); ++i) s += xs[i];
  return s / static_cast<double>(k);
}

double mean_displacement(const Matrix& from, const Matrix& to) {
  return (to - from).rowwise().norm().mean();
}

// Runs jobs[0..n) on up to thread_budget() workers; each job must be
// self-contained. Exceptions are captured per job.
void run_parallel(std::size_t n, const std::function<void(std::size_t)>& job) {
  const unsigned workers = std::max(1u, std::min<unsigned>(thread_budget(), static_cast<unsigned>(n)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) job(i);
  };
  if (workers == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct Cell {
  std::uint64_t seed = 0;
  double tau = 1.0;
  EvalReport report;
  std::vector<double> losses;
  std::optional<TransportPlan> coupling;
  SvgPlot plot;
  std::string error;
  bool ok = false;
};

std::string plan_diag_csv(const std::vector<const Cell*>& cells) {
  std::string out =
      "cell,seed,tau,epsilon,lambda1,lambda2,iterations,converged,final_residual,total_mass,transported_cost\n";
  for (const auto* c : cells) {
    if (!c->coupling) continue;
    const auto& p = *c->coupling;
    out += c->report.estimator + "_" + c->report.mode + "_" + cell_name(c->seed, c->tau) + "," +
           std::to_string(c->seed) + "," + format_number(c->tau) + "," + format_number(p.epsilon) + "," +
           format_number(p.lambda1) + "," + format_number(p.lambda2) + "," + std::to_string(p.iterations_used) + "," +
           (p.converged ? "1" : "0") + "," + format_number(p.final_residual) + "," + format_number(p.total_mass()) +
           "," + format_number(p.transported_cost) + "\n";
  }
  return out;
}

std::string losses_csv(const std::vector<std::pair<std::string, const std::vector<double>*>>& columns) {
  std::string out = "iter";
  std::size_t rows = 0;
  for (const auto& [name, xs] : columns) {
    out += "," + name;
    rows = std::max(rows, xs->size());
  }
  out += "\n";
  for (std::size_t i = 0; i < rows; ++i) {
    out += std::to_string(i);
    for (const auto& [name, xs] : columns) {
      out += ",";
      if (i < xs->size()) out += format_number((*xs)[i]);
    }
    out += "\n";
  }
  return out;
}

void add_coupling_metrics(EvalReport& r, const TransportPlan& p, const LabeledMeasure& src,
                          const LabeledMeasure& tgt) {
  r.add("cross_cluster_mass", cross_cluster_mass(p.plan, src.labels, tgt.labels));
  r.add("total_mass", p.total_mass());
  r.add("transported_cost", p.transported_cost);
  const auto [dev_a, dev_b] = marginal_deviation(p.plan, src.measure.weights, tgt.measure.weights);
  r.add("marginal_deviation_source", dev_a);
  r.add("marginal_deviation_target", dev_b);
  r.note("coupling_iterations", std::to_string(p.iterations_used));
  r.note("coupling_converged", p.converged ? "true" : "false");
}

// Shared held-out evaluation of a learned map.
void add_map_metrics(EvalReport& r, const Matrix& mapped, const LabeledMeasure& hsrc, const LabeledMeasure& htgt) {
  r.add("cluster_preservation", map_class_consistency(mapped, hsrc.labels, htgt.measure.points, htgt.labels));
  r.add("transport_cost", mean_displacement(hsrc.measure.points, mapped));
  r.add("sinkhorn_divergence", sinkhorn_divergence(make_measure(mapped), htgt.measure, SolverConfig{}));
}

void plot_map(SvgPlot& plot, const LabeledMeasure& hsrc, const LabeledMeasure& htgt, const Matrix& mapped,
              std::size_t arrows = 100) {
  plot.scatter(hsrc.measure.points, kSourceColor, 2.0, 0.5);
  plot.scatter(htgt.measure.points, kTargetColor, 2.0, 0.5);
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(arrows), mapped.rows());
  // evenly spaced subset so every cluster shows arrows
  std::vector<std::size_t> rows;
  for (Eigen::Index i = 0; i < k; ++i) rows.push_back(static_cast<std::size_t>(i * mapped.rows() / k));
  plot.arrows(take_rows(hsrc.measure.points, rows), take_rows(mapped, rows), kLineColor, 0.5);
  plot.scatter(mapped, kMappedColor, 2.0, 0.8);
}

std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const std::vector<Cell>& cells,
                                                 const std::vector<std::pair<std::string, std::string>>& extra_files) {
  std::vector<std::filesystem::path> written;
  std::vector<EvalReport> reports;
  std::vector<const Cell*> done;
  std::vector<std::pair<std::string, const std::vector<double>*>> loss_columns;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    reports.push_back(c.report);
    done.push_back(&c);
    if (!c.losses.empty()) {
      loss_columns.emplace_back(c.report.estimator + "_" + c.report.mode + "_" + cell_name(c.seed, c.tau), &c.losses);
    }
  }
  auto put = [&](const std::string& name, const std::string& content) {
    write_file_atomic(dir / name, content);
    written.push_back(dir / name);
  };
  put("metrics.csv", reports_csv(reports));
  put("loss_history.csv", losses_csv(loss_columns));
  put("plan_diag.csv", plan_diag_csv(done));
  for (const auto& [name, content] : extra_files) put(name, content);
  return written;
}

}  // namespace

unsigned thread_budget() {
  if (const char* env = std::getenv("UOTKIT_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw std::invalid_argument(std::string("UOTKIT_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  const auto doc = ConfigDocument::parse(text);
  doc.require_known({
      {"experiment", {"estimator", "coupling_mode", "taus", "seeds", "output"}},
      {"dataset",
       {"kind", "noise_scale", "outlier_fraction", "source_counts", "target_counts", "holdout_offset"}},
      {"solver", {"epsilon_scale", "epsilon_abs", "max_iters", "tolerance"}},
      {"training",
       {"iterations", "batch_size", "learning_rate", "hidden", "sigma", "ode_steps", "ode_method", "fit_weight",
        "gap_weight", "mg_epsilon_scale", "learn_rescaling"}},
  });

  ExperimentConfig cfg;
  cfg.estimator = pick<Estimator>(doc, "experiment", "estimator", cfg.estimator,
                                  {{"fm", Estimator::fm},
                                   {"monge_gap", Estimator::monge_gap},
                                   {"coupling_only", Estimator::coupling_only}});
  cfg.coupling = pick<PairingMode>(doc, "experiment", "coupling_mode", cfg.coupling,
                                   {{"independent", PairingMode::independent},
                                    {"balanced", PairingMode::balanced},
                                    {"unbalanced", PairingMode::unbalanced}});
  cfg.taus = doc.get_doubles("experiment", "taus", cfg.taus);
  cfg.seeds.clear();
  for (const auto s : doc.get_ints("experiment", "seeds", {0})) {
    if (s < 0) throw ConfigError("experiment.seeds: seeds must be nonnegative");
    cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  cfg.output = doc.get_string("experiment", "output", cfg.output.string());

  const auto kind = pick<DatasetKind>(doc, "dataset", "kind", DatasetKind::uniform_mixture,
                                      {{"uniform_mixture", DatasetKind::uniform_mixture},
                                       {"gaussian_imbalance", DatasetKind::gaussian_imbalance},
                                       {"gaussian_outliers", DatasetKind::gaussian_outliers}});
  switch (kind) {
    case DatasetKind::uniform_mixture: cfg.dataset = DatasetSpec::uniform_mixture_default(); break;
    case DatasetKind::gaussian_imbalance: cfg.dataset = DatasetSpec::gaussian_imbalance_default(); break;
    case DatasetKind::gaussian_outliers: cfg.dataset = DatasetSpec::gaussian_outliers_default(); break;
  }
  cfg.dataset.noise_scale = doc.get_double("dataset", "noise_scale", cfg.dataset.noise_scale);
  cfg.dataset.outlier_fraction = doc.get_double("dataset", "outlier_fraction", cfg.dataset.outlier_fraction);
  override_counts(doc, "source_counts", cfg.dataset.source_boxes, cfg.dataset.source_blobs);
  override_counts(doc, "target_counts", cfg.dataset.target_boxes, cfg.dataset.target_blobs);
  const auto offset = doc.get_int("dataset", "holdout_offset", static_cast<long long>(cfg.holdout_offset));
  if (offset < 1) throw ConfigError("dataset.holdout_offset: must be positive");
  cfg.holdout_offset = static_cast<std::uint64_t>(offset);

  cfg.solver.epsilon_scale = doc.get_double("solver", "epsilon_scale", cfg.solver.epsilon_scale);
  if (doc.has("solver", "epsilon_abs")) cfg.solver.epsilon_abs = doc.get_double("solver", "epsilon_abs", 0.0);
  const auto max_iters = doc.get_int("solver", "max_iters", cfg.solver.max_iters);
  if (max_iters < 1 || max_iters > 100'000'000) throw ConfigError("solver.max_iters: out of range");
  cfg.solver.max_iters = static_cast<int>(max_iters);
  if (doc.has("solver", "tolerance")) cfg.solver.tolerance = doc.get_double("solver", "tolerance", 0.0);

  auto& t = cfg.training;
  auto positive_int = [&](const std::string& key, int fallback) {
    const auto v = doc.get_int("training", key, fallback);
    if (v < 1 || v > 100'000'000) throw ConfigError("training." + key + ": must be a positive integer");
    return static_cast<int>(v);
  };
  t.iterations = positive_int("iterations", t.iterations);
  t.batch_size = positive_int("batch_size", t.batch_size);
  t.ode_steps = positive_int("ode_steps", t.ode_steps);
  t.learning_rate = doc.get_double("training", "learning_rate", t.learning_rate);
  t.sigma = doc.get_double("training", "sigma", t.sigma);
  t.fit_weight = doc.get_double("training", "fit_weight", t.fit_weight);
  t.gap_weight = doc.get_double("training", "gap_weight", t.gap_weight);
  t.mg_epsilon_scale = doc.get_double("training", "mg_epsilon_scale", t.mg_epsilon_scale);
  t.learn_rescaling = doc.get_bool("training", "learn_rescaling", t.learn_rescaling);
  if (doc.has("training", "hidden")) {
    t.hidden.clear();
    for (const auto h : doc.get_ints("training", "hidden", {})) {
      if (h < 1 || h > 100'000) throw ConfigError("training.hidden: layer widths must be positive");
      t.hidden.push_back(static_cast<int>(h));
    }
  }
  t.ode_method = pick<OdeMethod>(doc, "training", "ode_method", t.ode_method,
                                 {{"euler", OdeMethod::euler}, {"rk4", OdeMethod::rk4}});

  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path));
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.taus.empty()) throw std::invalid_argument("experiment.taus: at least one tau is required");
  for (const double tau : cfg.taus) {
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("experiment.taus: every tau must lie in (0, 1]");
    if (tau != 1.0 && cfg.coupling != PairingMode::unbalanced) {
      throw std::invalid_argument("experiment.taus: taus below 1 require coupling_mode = unbalanced");
    }
  }
  if (cfg.seeds.empty()) throw std::invalid_argument("experiment.seeds: at least one seed is required");
  if (cfg.coupling == PairingMode::independent && cfg.estimator != Estimator::fm) {
    throw std::invalid_argument("experiment.coupling_mode: independent pairing applies to estimator = fm only");
  }
  if (cfg.output.empty()) throw std::invalid_argument("experiment.output: empty path");
  validate(cfg.dataset);
  validate(cfg.solver);
  const auto& t = cfg.training;
  if (!(t.learning_rate > 0.0)) throw std::invalid_argument("training.learning_rate: must be positive");
  if (!(t.sigma >= 0.0)) throw std::invalid_argument("training.sigma: must be nonnegative");
  if (!(t.fit_weight > 0.0) || !(t.gap_weight > 0.0)) {
    throw std::invalid_argument("training.fit_weight/gap_weight: must be positive");
  }
  if (!(t.mg_epsilon_scale > 0.0)) throw std::invalid_argument("training.mg_epsilon_scale: must be positive");
}

namespace {

void run_cell(const ExperimentConfig& cfg, Cell& cell) {
  DatasetSpec spec = cfg.dataset;
  spec.seed = cell.seed;
  const auto src = sample_dataset(spec, Role::source);
  const auto tgt = sample_dataset(spec, Role::target);
  spec.seed = cell.seed + cfg.holdout_offset;
  const auto hsrc = sample_dataset(spec, Role::source);
  const auto htgt = sample_dataset(spec, Role::target);

  auto& r = cell.report;
  r.dataset = to_string(cfg.dataset.kind);
  r.estimator = to_string(cfg.estimator);
  r.mode = to_string(cfg.coupling);
  r.tau = cell.tau;
  r.seed = cell.seed;

  const SolverConfig cell_solver = cfg.solver.with_tau(cell.tau);
  cell.coupling = solve(src.measure, tgt.measure, cell_solver);
  const auto& t = cfg.training;
  const std::string title = std::string(to_string(cfg.estimator)) + " " + to_string(cfg.coupling) + " seed " +
                            std::to_string(cell.seed) + " tau " + format_number(cell.tau);
  cell.plot = SvgPlot(title);

  switch (cfg.estimator) {
    case Estimator::coupling_only: {
      add_coupling_metrics(r, *cell.coupling, src, tgt);
      r.add("rebalancing_gap", verify_rebalancing(src.measure, tgt.measure, cell_solver).relative_frobenius_gap);
      cell.plot.coupling(src.measure.points, tgt.measure.points, cell.coupling->plan, kLineColor);
      cell.plot.scatter(src.measure.points, kSourceColor);
      cell.plot.scatter(tgt.measure.points, kTargetColor);
      break;
    }
    case Estimator::fm: {
      FmTrainConfig fc;
      fc.coupling = cfg.coupling == PairingMode::independent ? CouplingMode::independent
                    : cfg.coupling == PairingMode::balanced  ? CouplingMode::balanced_ot
                                                             : CouplingMode::unbalanced_ot;
      fc.solver = cell_solver;
      fc.batch_size = t.batch_size;
      fc.iterations = t.iterations;
      fc.sigma = t.sigma;
      fc.hidden = t.hidden;
      fc.optimizer.learning_rate = t.learning_rate;
      fc.seed = cell.seed;
      auto res = train_fm(src.measure, tgt.measure, fc);
      cell.losses = std::move(res.loss_history);
      const Matrix mapped = integrate(res.net, hsrc.measure.points, t.ode_steps, t.ode_method);
      add_map_metrics(r, mapped, hsrc, htgt);
      r.add("final_loss", tail_mean(cell.losses));
      r.note("solver_fallbacks", std::to_string(res.solver_fallbacks));
      r.note("unconverged_couplings", std::to_string(res.unconverged_couplings));
      plot_map(cell.plot, hsrc, htgt, mapped);
      break;
    }
    case Estimator::monge_gap: {
      MgTrainConfig mc;
      mc.fit_solver.epsilon_scale = t.mg_epsilon_scale;
      mc.gap_solver.epsilon_scale = t.mg_epsilon_scale;
      mc.fit_weight = t.fit_weight;
      mc.gap_weight = t.gap_weight;
      mc.coupling = cfg.coupling == PairingMode::unbalanced ? MgCoupling::unbalanced : MgCoupling::balanced;
      mc.rebalance_solver = cell_solver;
      mc.learn_rescaling = t.learn_rescaling;
      mc.batch_size = t.batch_size;
      mc.iterations = t.iterations;
      mc.hidden = t.hidden;
      mc.optimizer.learning_rate = t.learning_rate;
      mc.seed = cell.seed;
      auto res = train_mg(src.measure, tgt.measure, mc);
      cell.losses = std::move(res.loss_history);
      const Matrix mapped = map_points(res.net, hsrc.measure.points);
      add_map_metrics(r, mapped, hsrc, htgt);
      SolverConfig gap_cfg;
      gap_cfg.epsilon_scale = t.mg_epsilon_scale;
      r.add("monge_gap", monge_gap(hsrc.measure.points, mapped, gap_cfg).value);
      r.add("final_loss", tail_mean(cell.losses));
      plot_map(cell.plot, hsrc, htgt, mapped);
      break;
    }
  }
}

void execute(std::vector<Cell>& cells, const std::function<void(Cell&)>& body) {
  run_parallel(cells.size(), [&](std::size_t i) {
    auto& c = cells[i];
    try {
      body(c);
      c.ok = true;
    } catch (const TrainingDiverged& e) {
      c.error = std::string("training diverged at iteration ") + std::to_string(e.iteration()) + ": " + e.what();
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<Cell> cells;
  for (const auto seed : cfg.seeds) {
    for (const double tau : cfg.taus) {
      Cell c;
      c.seed = seed;
      c.tau = tau;
      cells.push_back(std::move(c));
    }
  }
  execute(cells, [&](Cell& c) { run_cell(cfg, c); });

  RunOutcome out;
  std::vector<std::pair<std::string, std::string>> plots;
  for (const auto& c : cells) {
    if (c.ok) {
      out.reports.push_back(c.report);
      plots.emplace_back("plot_" + cell_name(c.seed, c.tau) + ".svg", c.plot.render());
    } else {
      out.failures.push_back("seed " + std::to_string(c.seed) + " tau " + format_number(c.tau) + ": " + c.error);
    }
  }
  out.written = write_outputs(cfg.output, cells, plots);
  return out;
}

RunOutcome reproduce_fig2(const Fig2Options& options) {
  if (options.iterations < 1) throw std::invalid_argument("reproduce-fig2: iterations must be positive");
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("reproduce-fig2: epsilon must be positive");
  if (options.ode_steps < 1) throw std::invalid_argument("reproduce-fig2: ode_steps must be positive");

  const auto spec = DatasetSpec::uniform_mixture_default(options.seed);
  const auto src = sample_dataset(spec, Role::source);
  const auto tgt = sample_dataset(spec, Role::target);
  const auto hold = DatasetSpec::uniform_mixture_default(options.seed + 1000);
  const auto hsrc = sample_dataset(hold, Role::source);
  const auto htgt = sample_dataset(hold, Role::target);

  SolverConfig base;
  base.epsilon_abs = options.epsilon;
  // Tight enough that the tau = 1 marginals are exact to ~1e-8.
  SolverConfig coupling_solver = base;
  coupling_solver.tolerance = 1e-9 * cost_matrix(src.measure, tgt.measure).mean_cost;
  coupling_solver.max_iters = 100000;

  struct Spec {
    std::string panel;
    std::string title;
    bool coupling = false;
    CouplingMode mode = CouplingMode::independent;
    double tau = 1.0;
  };
  const std::vector<Spec> specs{
      {"b", "Discrete OT (tau=1.0)", true, CouplingMode::balanced_ot, 1.0},
      {"c", "Disc. UOT (tau=0.99)", true, CouplingMode::unbalanced_ot, 0.99},
      {"d", "Disc. UOT (tau=0.9)", true, CouplingMode::unbalanced_ot, 0.9},
      {"e", "Flow Matching", false, CouplingMode::independent, 1.0},
      {"f", "OT-FM (tau=1.0)", false, CouplingMode::balanced_ot, 1.0},
      {"g", "UOT-FM (tau=0.99)", false, CouplingMode::unbalanced_ot, 0.99},
      {"h", "UOT-FM (tau=0.9)", false, CouplingMode::unbalanced_ot, 0.9},
  };
  std::vector<Cell> cells(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    cells[i].seed = options.seed;
    cells[i].tau = specs[i].tau;
  }

  execute(cells, [&](Cell& cell) {
    const auto& s = specs[static_cast<std::size_t>(&cell - cells.data())];
    auto& r = cell.report;
    r.dataset = to_string(DatasetKind::uniform_mixture);
    r.tau = s.tau;
    r.seed = options.seed;
    cell.plot = SvgPlot("(" + s.panel + ") " + s.title);
    if (s.coupling) {
      r.estimator = "coupling";
      r.mode = s.tau == 1.0 ? "balanced" : "unbalanced";
      const auto cfg = coupling_solver.with_tau(s.tau);
      cell.coupling = solve(src.measure, tgt.measure, cfg);
      add_coupling_metrics(r, *cell.coupling, src, tgt);
      r.add("rebalancing_gap", verify_rebalancing(src.measure, tgt.measure, cfg).relative_frobenius_gap);
      cell.plot.coupling(src.measure.points, tgt.measure.points, cell.coupling->plan, kLineColor);
      cell.plot.scatter(src.measure.points, kSourceColor);
      cell.plot.scatter(tgt.measure.points, kTargetColor);
      return;
    }
    r.estimator = "fm";
    r.mode = s.mode == CouplingMode::independent ? "independent"
             : s.mode == CouplingMode::balanced_ot ? "balanced"
                                                   : "unbalanced";
    FmTrainConfig fc;
    fc.coupling = s.mode;
    fc.solver = base.with_tau(s.tau);
    fc.iterations = options.iterations;
    fc.seed = options.seed;
    auto res = train_fm(src.measure, tgt.measure, fc);
    cell.losses = std::move(res.loss_history);
    const Matrix mapped = integrate(res.net, hsrc.measure.points, options.ode_steps, OdeMethod::rk4);
    add_map_metrics(r, mapped, hsrc, htgt);
    r.add("final_loss", tail_mean(cell.losses));
    r.note("solver_fallbacks", std::to_string(res.solver_fallbacks));
    plot_map(cell.plot, hsrc, htgt, mapped);
  });

  RunOutcome out;
  for (const auto& c : cells) {
    if (c.ok) {
      out.reports.push_back(c.report);
    } else {
      out.failures.push_back(c.report.estimator + " " + c.report.mode + " tau " + format_number(c.tau) + ": " +
                             c.error);
    }
  }

  SvgPlot data("(a) Unbalanced data");
  data.scatter(src.measure.points, kSourceColor);
  data.scatter(tgt.measure.points, kTargetColor);
  std::vector<SvgPlot> panels{data};
  std::vector<std::pair<std::string, std::string>> files{{"fig2_a.svg", data.render()}};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    panels.push_back(cells[i].plot);
    files.emplace_back("fig2_" + specs[i].panel + ".svg", cells[i].plot.render());
  }
  files.emplace_back("fig2.svg", svg_grid(panels, 4));
  out.written = write_outputs(options.output, cells, files);
  return out;
}

}  // namespace uot
