// Command-line front end: plan, simulate, batch, sweep.
//
// Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.

#include "ilqrace/batch.hpp"
#include "ilqrace/config.hpp"
#include "ilqrace/io.hpp"
#include "ilqrace/sim.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace ilqrace;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string mode;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output path (file, or directory for batch)");
  cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--mode", c.mode, "equilibrium concept override for game planners")
      ->check(CLI::IsMember({"open-loop", "feedback"}));
}

config::Config load_config(const Common& c) {
  config::Config cfg = c.config_path.empty() ? config::parse(nlohmann::json::object())
                                             : config::load(c.config_path);
  if (c.seed) cfg.batch.seed = *c.seed;
  if (!c.mode.empty()) {
    const auto kind = c.mode == "feedback" ? sim::PlannerKind::GameFeedback
                                           : sim::PlannerKind::GameOpenLoop;
    auto remap = [&](sim::PlannerKind& k) {
      if (k != sim::PlannerKind::Sequential) k = kind;
    };
    for (auto& p : cfg.scenario.players) remap(p.planner.kind);
    for (auto& k : cfg.batch.ego_kinds) remap(k);
    for (auto& k : cfg.batch.opponent_kinds) remap(k);
  }
  cfg.batch.base = cfg.scenario;
  return cfg;
}

// Writes to `path`, or to stdout when empty.
void emit(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(std::cout);
  } else {
    io::write_file(path, body);
  }
}

int run_plan(const Common& c) {
  const auto cfg = load_config(c);
  const auto& sc = cfg.scenario;
  racing::RacingGame game(sc.track, sc.racing_players(), sc.horizon, sc.dt);
  SolverParams params = sc.players.front().planner.solver;
  params.mode = c.mode == "open-loop" ? EquilibriumConcept::OpenLoop : EquilibriumConcept::Feedback;
  const SolveResult res = solve(game, sc.initial_state(), std::nullopt, params);
  std::vector<double> times;
  for (std::size_t k = 0; k <= sc.horizon; ++k) times.push_back(static_cast<double>(k) * sc.dt);
  const std::size_t N = sc.players.size();
  if (c.format == "json") {
    nlohmann::json j{{"mode", params.mode == EquilibriumConcept::Feedback ? "feedback" : "open-loop"},
                     {"converged", res.converged},
                     {"iterations", res.iterations},
                     {"costs", res.costs},
                     {"rows", io::trajectory_json(N, times, res.op.states, res.op.inputs)}};
    emit(c.out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  } else {
    emit(c.out, [&](std::ostream& os) {
      io::write_trajectory_csv(os, N, times, res.op.states, res.op.inputs);
    });
  }
  std::cerr << "converged: " << (res.converged ? "true" : "false") << '\n'
            << "iterations: " << res.iterations << '\n';
  return 0;
}

int run_simulate(const Common& c) {
  const auto cfg = load_config(c);
  const std::uint64_t seed = cfg.batch.seed;
  const sim::SimLog log = sim::run_scenario(cfg.scenario, seed);
  const auto summary = io::summarize_log(log, cfg.scenario);
  if (c.format == "json") {
    emit(c.out, [&](std::ostream& os) { os << io::log_json(log, cfg.scenario).dump(2) << '\n'; });
  } else {
    emit(c.out, [&](std::ostream& os) { io::write_log_csv(os, log); });
  }
  io::write_summary(c.out.empty() ? std::cerr : std::cout, summary, seed);
  return 0;
}

int run_batch_cmd(const Common& c, std::optional<std::size_t> samples,
                  std::optional<std::size_t> threads, bool quiet) {
  auto cfg = load_config(c);
  if (samples) cfg.batch.samples = *samples;
  if (threads) cfg.batch.threads = *threads;
  if (c.out.empty()) throw ConfigError("batch: --out DIRECTORY is required");
  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  auto progress = [&](std::size_t done, std::size_t total) {
    if (!quiet) std::cerr << "\r" << done << "/" << total << std::flush;
  };
  const batch::BatchResult res = batch::run_batch(cfg.batch, progress);
  if (!quiet) std::cerr << '\n';
  const auto hist = io::histogram(res.records);
  if (c.format == "json") {
    nlohmann::json j{{"seed", cfg.batch.seed},
                     {"samples", cfg.batch.samples},
                     {"cells", io::summary_cells_json(res.cells)},
                     {"histogram", io::histogram_json(hist)},
                     {"records", io::records_json(res.records)}};
    io::write_file((dir / "batch.json").string(),
                   [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  } else {
    io::write_file((dir / "records.csv").string(),
                   [&](std::ostream& os) { io::write_records_csv(os, res.records); });
    io::write_file((dir / "summary.csv").string(),
                   [&](std::ostream& os) { io::write_summary_csv(os, res.cells); });
    io::write_file((dir / "table.csv").string(),
                   [&](std::ostream& os) { io::write_table_csv(os, cfg.batch, res.cells); });
    io::write_file((dir / "histogram.csv").string(),
                   [&](std::ostream& os) { io::write_histogram_csv(os, hist); });
  }
  io::write_table_csv(std::cout, cfg.batch, res.cells);
  return 0;
}

int run_sweep_cmd(const Common& c) {
  const auto cfg = load_config(c);
  const auto pts = batch::run_sweep(cfg.scenario, cfg.sweep_ratios);
  if (c.format == "json") {
    emit(c.out, [&](std::ostream& os) { os << io::sweep_json(pts).dump(2) << '\n'; });
  } else {
    emit(c.out, [&](std::ostream& os) { io::write_sweep_csv(os, pts); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iLQ games for head-to-head racing"};
  app.require_subcommand(1);

  Common plan_opts, sim_opts, batch_opts, sweep_opts;
  auto* plan = app.add_subcommand("plan", "solve the game once and export the planned trajectory");
  add_common(plan, plan_opts);
  auto* simulate = app.add_subcommand("simulate", "run one closed-loop scenario");
  add_common(simulate, sim_opts);
  auto* batch_cmd = app.add_subcommand("batch", "Monte-Carlo planner-matrix batch");
  add_common(batch_cmd, batch_opts);
  std::optional<std::size_t> samples, threads;
  bool quiet = false;
  batch_cmd->add_option("--samples", samples, "sampled starts per cell");
  batch_cmd->add_option("--threads", threads, "worker threads");
  batch_cmd->add_flag("--quiet", quiet, "no progress output");
  auto* sweep = app.add_subcommand("sweep", "collision-weight ratio sweep of the ego's first plan");
  add_common(sweep, sweep_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (plan->parsed()) return run_plan(plan_opts);
    if (simulate->parsed()) return run_simulate(sim_opts);
    if (batch_cmd->parsed()) return run_batch_cmd(batch_opts, samples, threads, quiet);
    if (sweep->parsed()) return run_sweep_cmd(sweep_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
