#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rankflow/experiment.hpp"

using namespace rankflow;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

ExperimentConfig small(Scenario s) {
  ExperimentConfig c = ExperimentConfig::defaults(s);
  c.n = 30;
  c.repeats = 4;
  c.threads = 1;
  return c;
}

void check_summary_invariants(const SummaryReport& rep) {
  int total = 0;
  for (const auto& [status, count] : rep.status_counts) total += count;
  EXPECT_EQ(total, rep.config.repeats);
  for (const auto& [name, st] : rep.series) {
    ASSERT_EQ(st.median.size(), rep.steps.size()) << name;
    for (std::size_t k = 0; k < rep.steps.size(); ++k) {
      EXPECT_LE(st.min[k], st.median[k]);
      EXPECT_LE(st.median[k], st.max[k]);
      EXPECT_GE(st.min[k], 0.0);
    }
  }
}

}  // namespace

TEST(Scenario, StringRoundTrip) {
  EXPECT_EQ(all_scenarios().size(), 7u);
  for (Scenario s : all_scenarios()) EXPECT_EQ(scenario_from_string(to_string(s)), s);
  EXPECT_THROW(scenario_from_string("escape"), ConfigError);
}

TEST(ExperimentConfig, Defaults) {
  ExperimentConfig e = ExperimentConfig::defaults(Scenario::escape_s_r1);
  EXPECT_EQ(e.n, 100);
  EXPECT_EQ(e.r, 5);
  EXPECT_EQ(e.repeats, 100);
  EXPECT_DOUBLE_EQ(e.alpha, 0.2);
  EXPECT_EQ(e.resolved_eigenvalues(), (std::vector<double>{5, 4, 3, 2, 1}));
  ExperimentConfig v = ExperimentConfig::defaults(Scenario::global_varying);
  EXPECT_EQ(v.mode, StepMode::varying);
  EXPECT_DOUBLE_EQ(v.alpha, 2.0);
  ExperimentConfig x = ExperimentConfig::defaults(Scenario::example_1_1);
  EXPECT_EQ(x.n, 3);
  EXPECT_EQ(x.r, 2);
  EXPECT_EQ(x.resolved_eigenvalues(), (std::vector<double>{2, 1}));
  for (Scenario s : all_scenarios()) EXPECT_NO_THROW(ExperimentConfig::defaults(s).validate());
}

TEST(ExperimentConfig, ValidationErrors) {
  ExperimentConfig c = ExperimentConfig::defaults(Scenario::escape_s_r1);
  c.repeats = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::escape_s_r1);
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::escape_s_r1);
  c.eigenvalues = {3, 2, 2, 1, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c.eigenvalues = {3, 2, 1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::escape_s_r2);
  c.r = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::example_1_1);
  c.n = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::flow_dlra);
  c.dt = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Scenario::global_fixed);
  c.alpha = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ExperimentConfig, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c = ExperimentConfig::defaults(Scenario::global_varying);
  c.n = 40;
  c.eigenvalues = {3, 2.5, 2, 1.5, 1};
  c.master_seed = 98765432123ull;
  nlohmann::json j = c;
  EXPECT_EQ(config_from_json(j), c);
  j["bogus"] = 1;
  EXPECT_THROW(config_from_json(j), ConfigError);
  nlohmann::json partial = {{"scenario", "flow_dlra"}, {"repeats", 3}};
  ExperimentConfig p = config_from_json(partial);
  ExperimentConfig expect = ExperimentConfig::defaults(Scenario::flow_dlra);
  expect.repeats = 3;
  EXPECT_EQ(p, expect);
  EXPECT_THROW(config_from_json(nlohmann::json{{"scenario", "flow_dlra"}, {"n", "ten"}}), ConfigError);
}

TEST(RunSeed, Rule) {
  ExperimentConfig c;
  c.master_seed = 100;
  EXPECT_EQ(run_seed(c, 0), 100u);
  EXPECT_EQ(run_seed(c, 7), 107u);
}

TEST(RunExperiment, ExampleScenarioClosedForm) {
  ExperimentConfig c = ExperimentConfig::defaults(Scenario::example_1_1);
  c.alpha = 0.3;
  c.max_iters = 80;
  SummaryReport rep = run_experiment(c);
  ASSERT_EQ(rep.runs.size(), 1u);
  const RunResult& run = rep.runs[0];
  EXPECT_EQ(run.status, "near_spurious");
  ASSERT_EQ(run.dist_ref.size(), run.records.size());
  for (std::size_t k = 0; k < run.records.size(); ++k) {
    const double q = std::pow(0.7, static_cast<double>(k));
    EXPECT_NEAR(run.dist_ref[k], q, 1e-12) << k;
    EXPECT_NEAR(run.records[k].dist, std::sqrt(1 + q * q), 1e-12) << k;
  }
  // single run: min = median = max
  for (const auto& [name, st] : rep.series) {
    EXPECT_EQ(st.min, st.median) << name;
    EXPECT_EQ(st.max, st.median) << name;
  }
}

TEST(RunExperiment, EscapeScenariosConverge) {
  for (Scenario s : {Scenario::escape_s_r1, Scenario::escape_s_r2}) {
    SummaryReport rep = run_experiment(small(s));
    EXPECT_EQ(rep.status_counts["converged_to_X"], 4) << to_string(s);
    EXPECT_LE(std::log10(rep.series.at("dist").median.back()), -6);
    check_summary_invariants(rep);
  }
}

TEST(RunExperiment, GlobalScenarios) {
  SummaryReport fixed = run_experiment(small(Scenario::global_fixed));
  EXPECT_EQ(fixed.status_counts["converged_to_X"], 4);
  check_summary_invariants(fixed);
  ExperimentConfig v = small(Scenario::global_varying);
  v.alpha = 1.0;
  SummaryReport varying = run_experiment(v);
  EXPECT_EQ(varying.status_counts["converged_to_X"], 4);
  for (const auto& run : varying.runs) EXPECT_NEAR(run.records.back().sigma_r, 1.0, 1e-6);
}

TEST(RunExperiment, FlowScenarios) {
  for (Scenario s : {Scenario::flow_dlra, Scenario::flow_rescaled}) {
    ExperimentConfig c = ExperimentConfig::defaults(s);
    c.n = 12;
    c.r = 3;
    c.repeats = 3;
    SummaryReport rep = run_experiment(c);
    EXPECT_EQ(rep.status_counts["converged_to_X"], 3) << to_string(s);
    EXPECT_NEAR(rep.steps.back(), c.t_end, 1e-9);
    check_summary_invariants(rep);
  }
}

TEST(RunExperiment, ParallelismDoesNotChangeOutput) {
  ExperimentConfig c = small(Scenario::escape_s_r1);
  c.repeats = 6;
  c.threads = 1;
  SummaryReport a = run_experiment(c);
  c.threads = 3;
  SummaryReport b = run_experiment(c);
  EXPECT_EQ(summary_csv(a), summary_csv(b));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(run_csv(a.runs[i]), run_csv(b.runs[i]));
  b.config.threads = 1;
  EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
}

TEST(EmitSummary, HeaderOnlyForEmptyTrajectory) {
  SummaryReport rep;
  rep.config = ExperimentConfig::defaults(Scenario::global_fixed);
  summarize(rep);
  EXPECT_EQ(summary_csv(rep), "step,dist_median,dist_min,dist_max,sigma_r_median,sigma_r_min,"
                              "sigma_r_max,grad_norm_median,grad_norm_min,grad_norm_max\n");
}

TEST(EmitSummary, WritesFilesAndSidecarRoundTrips) {
  ExperimentConfig c = small(Scenario::escape_s_r1);
  c.repeats = 2;
  SummaryReport rep = run_experiment(c);
  const auto dir = std::filesystem::temp_directory_path() / "rankflow_emit_test";
  std::filesystem::remove_all(dir);
  emit_summary(rep, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "run_000.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run_001.csv"));
  EXPECT_EQ(slurp(dir / "summary.csv"), summary_csv(rep));
  nlohmann::json j = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(config_from_json(j["config"]), c);
  EXPECT_EQ(j["runs"].size(), 2u);
  EXPECT_EQ(j["runs"][1]["seed"].get<std::uint64_t>(), c.master_seed + 1);
  EXPECT_EQ(j["eigenvalues_used"].size(), 5u);
  const std::string csv = slurp(dir / "run_000.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,dist,sigma_r,grad_norm,dist_ref");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  std::filesystem::remove_all(dir);
}
