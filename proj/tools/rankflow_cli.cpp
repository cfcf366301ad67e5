// rankflow: run one experiment scenario and write summary.csv, summary.json
// and per-run CSV files.
//
// exit codes: 0 success, 2 configuration error, 3 runtime failure

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "rankflow/experiment.hpp"

namespace {

struct Flags {
  long long n = 0, r = 0;
  double alpha = 0, epsilon = 0, dt = 0, t_end = 0, tol_dist = 0;
  std::string mode;
  int repeats = 0, threads = 0;
  long max_iters = 0;
  std::uint64_t seed = 0;
  std::vector<double> eigenvalues;
  std::string out_dir;
  std::string config;
  bool no_runs = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--n", f.n, "matrix side length");
  sub->add_option("--r", f.r, "rank");
  sub->add_option("--eigenvalues", f.eigenvalues, "eigenvalues of X (default r, r-1, ..., 1)");
  sub->add_option("--alpha", f.alpha, "stepsize coefficient");
  sub->add_option("--mode", f.mode, "fixed or varying");
  sub->add_option("--epsilon", f.epsilon, "neighbourhood radius relative to ||Z#||_F");
  sub->add_option("--repeats", f.repeats, "number of seeded runs");
  sub->add_option("--max-iters", f.max_iters, "iteration budget per run");
  sub->add_option("--tol-dist", f.tol_dist, "stop once ||Z - X||_F is below this");
  sub->add_option("--seed", f.seed, "master seed; run i uses seed + i");
  sub->add_option("--dt", f.dt, "RK4 step (flow scenarios)");
  sub->add_option("--t-end", f.t_end, "final time (flow scenarios)");
  sub->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  sub->add_option("--out-dir", f.out_dir, "output directory");
  sub->add_option("--config", f.config, "JSON config file with the same field names");
  sub->add_flag("--no-run-files", f.no_runs, "only write the summary files");
}

rankflow::ExperimentConfig build_config(CLI::App* sub, rankflow::Scenario scenario,
                                        const Flags& f) {
  using rankflow::ConfigError;
  rankflow::ExperimentConfig c = rankflow::ExperimentConfig::defaults(scenario);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot read config file " + f.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (j.contains("scenario") && j["scenario"] != rankflow::to_string(scenario)) {
      throw ConfigError("config file scenario does not match the subcommand");
    }
    j["scenario"] = rankflow::to_string(scenario);
    rankflow::from_json(j, c);
  }
  auto given = [&](const char* name) { return sub->count(name) > 0; };
  if (given("--n")) c.n = f.n;
  if (given("--r")) c.r = f.r;
  if (given("--eigenvalues")) c.eigenvalues = f.eigenvalues;
  if (given("--alpha")) c.alpha = f.alpha;
  if (given("--mode")) {
    try {
      c.mode = rankflow::step_mode_from_string(f.mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (given("--epsilon")) c.epsilon = f.epsilon;
  if (given("--repeats")) c.repeats = f.repeats;
  if (given("--max-iters")) c.max_iters = f.max_iters;
  if (given("--tol-dist")) c.tol_dist = f.tol_dist;
  if (given("--seed")) c.master_seed = f.seed;
  if (given("--dt")) c.dt = f.dt;
  if (given("--t-end")) c.t_end = f.t_end;
  if (given("--threads")) c.threads = f.threads;
  // eigenvalue defaults follow r unless given explicitly
  if (given("--r") && !given("--eigenvalues") && scenario != rankflow::Scenario::example_1_1) {
    c.eigenvalues.clear();
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riemannian GD and low-rank gradient flow experiments near spurious points"};
  app.require_subcommand(1);
  Flags flags;
  std::map<CLI::App*, rankflow::Scenario> subs;
  for (rankflow::Scenario s : rankflow::all_scenarios()) {
    CLI::App* sub = app.add_subcommand(rankflow::to_string(s), std::string("run ") +
                                                                   rankflow::to_string(s));
    add_flags(sub, flags);
    subs[sub] = s;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const rankflow::Scenario scenario = subs.at(sub);
  rankflow::ExperimentConfig cfg;
  try {
    cfg = build_config(sub, scenario, flags);
  } catch (const rankflow::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    rankflow::SummaryReport rep = rankflow::run_experiment(cfg);
    const std::string dir =
        flags.out_dir.empty() ? std::string("rankflow_out/") + rankflow::to_string(scenario)
                              : flags.out_dir;
    rankflow::emit_summary(rep, dir, !flags.no_runs);
    std::printf("scenario %s: %d runs\n", rankflow::to_string(scenario), cfg.repeats);
    for (const auto& [status, count] : rep.status_counts) {
      std::printf("  %-16s %d\n", status.c_str(), count);
    }
    if (!rep.steps.empty()) {
      const auto& d = rep.series.at("dist");
      std::printf("  final median dist %.3e (min %.3e, max %.3e)\n", d.median.back(),
                  d.min.back(), d.max.back());
    }
    std::printf("  wrote %s\n", dir.c_str());
  } catch (const rankflow::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
