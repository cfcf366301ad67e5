#pragma once

// Seeded, repeated experiment runs with per-step median/min/max summaries,
// written as CSV plus a JSON sidecar.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankflow/rgd.hpp"
#include "rankflow/trajectory.hpp"

namespace rankflow {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Scenario {
  escape_s_r1,
  escape_s_r2,
  global_fixed,
  global_varying,
  example_1_1,
  flow_dlra,
  flow_rescaled
};

const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);  // throws ConfigError
const std::vector<Scenario>& all_scenarios();

struct ExperimentConfig {
  Scenario scenario = Scenario::escape_s_r1;
  Index n = 100;
  Index r = 5;
  std::vector<double> eigenvalues;  // empty: d_i = r - i + 1
  double alpha = 0.2;
  StepMode mode = StepMode::fixed;
  double epsilon = 1e-2;  // relative to ||Z#||_F
  int repeats = 100;
  long max_iters = 5000;
  std::uint64_t master_seed = 20240101;
  double tol_dist = 1e-6;
  double dt = 1e-2;
  double t_end = 20.0;
  int threads = 0;  // 0: hardware concurrency

  bool operator==(const ExperimentConfig&) const = default;

  /// Scenario defaults (sizes, alpha, mode, repeats, iteration budget).
  static ExperimentConfig defaults(Scenario s);

  /// The eigenvalues actually used.
  std::vector<double> resolved_eigenvalues() const;
  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep the scenario defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

struct RunResult {
  int index = 0;
  std::uint64_t seed = 0;
  std::string status;
  long iterations = 0;
  bool rank_dropped = false;
  Trajectory records;
  std::vector<double> dist_ref;  // ||Z - Z#||_F when the scenario has a reference point
};

struct SeriesStats {
  std::vector<double> median, min, max;
};

struct SummaryReport {
  ExperimentConfig config;
  std::vector<RunResult> runs;  // sorted by index
  std::vector<double> steps;    // step index or time per summary row
  std::map<std::string, SeriesStats> series;  // dist, sigma_r, grad_norm[, dist_ref]
  std::map<std::string, int> status_counts;
};

/// Seed of run i is master_seed + i. The ground truth uses master_seed.
std::uint64_t run_seed(const ExperimentConfig& cfg, int i);

RunResult run_single(const ExperimentConfig& cfg, int i);
SummaryReport run_experiment(const ExperimentConfig& cfg);

/// Per-step statistics; a run that stopped early contributes its last value.
void summarize(SummaryReport& report);

/// Writes summary.csv, summary.json and run_NNN.csv into `dir` (created if
/// needed). Throws std::runtime_error on I/O failure.
void emit_summary(const SummaryReport& report, const std::filesystem::path& dir,
                  bool per_run_files = true);

std::string summary_csv(const SummaryReport& report);
std::string run_csv(const RunResult& run);
nlohmann::json summary_json(const SummaryReport& report);

}  // namespace rankflow
