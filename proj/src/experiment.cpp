#include "rankflow/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "rankflow/flows.hpp"
#include "rankflow/random.hpp"
#include "rankflow/spurious_points.hpp"

namespace rankflow {

namespace {

const std::vector<std::pair<Scenario, const char*>>& scenario_names() {
  static const std::vector<std::pair<Scenario, const char*>> names = {
      {Scenario::escape_s_r1, "escape_s_r1"},     {Scenario::escape_s_r2, "escape_s_r2"},
      {Scenario::global_fixed, "global_fixed"},   {Scenario::global_varying, "global_varying"},
      {Scenario::example_1_1, "example_1_1"},     {Scenario::flow_dlra, "flow_dlra"},
      {Scenario::flow_rescaled, "flow_rescaled"}};
  return names;
}

bool is_escape(Scenario s) { return s == Scenario::escape_s_r1 || s == Scenario::escape_s_r2; }
bool is_flow(Scenario s) { return s == Scenario::flow_dlra || s == Scenario::flow_rescaled; }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Scenario s) {
  for (const auto& [k, v] : scenario_names()) {
    if (k == s) return v;
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& s) {
  for (const auto& [k, v] : scenario_names()) {
    if (s == v) return k;
  }
  throw ConfigError("unknown scenario '" + s + "'");
}

const std::vector<Scenario>& all_scenarios() {
  static const std::vector<Scenario> all = [] {
    std::vector<Scenario> v;
    for (const auto& [k, name] : scenario_names()) v.push_back(k);
    return v;
  }();
  return all;
}

ExperimentConfig ExperimentConfig::defaults(Scenario s) {
  ExperimentConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::example_1_1:
      c.n = 3;
      c.r = 2;
      c.eigenvalues = {2.0, 1.0};
      c.alpha = 0.3;
      c.repeats = 1;
      c.max_iters = 200;
      c.tol_dist = 1e-8;
      break;
    case Scenario::global_varying:
      c.alpha = 2.0;
      c.mode = StepMode::varying;
      break;
    case Scenario::flow_dlra:
      c.repeats = 20;
      break;
    case Scenario::flow_rescaled:
      c.repeats = 20;
      c.t_end = 40.0;
      break;
    default:
      break;
  }
  return c;
}

std::vector<double> ExperimentConfig::resolved_eigenvalues() const {
  if (!eigenvalues.empty()) return eigenvalues;
  std::vector<double> d(static_cast<std::size_t>(std::max<Index>(r, 0)));
  for (Index i = 0; i < r; ++i) d[i] = static_cast<double>(r - i);
  return d;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be at least 1 (got " + std::to_string(repeats) + ")");
  if (r < 1) throw ConfigError("r must be at least 1");
  if (n < r) throw ConfigError("n must be at least r");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
  if (!(tol_dist >= 0.0)) throw ConfigError("tol_dist must be nonnegative");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  const auto d = resolved_eigenvalues();
  if (static_cast<Index>(d.size()) != r) {
    throw ConfigError("expected " + std::to_string(r) + " eigenvalues, got " +
                      std::to_string(d.size()));
  }
  std::set<double> seen;
  for (double v : d) {
    if (!(v > 0.0)) throw ConfigError("eigenvalues must be positive");
    if (!seen.insert(v).second) throw ConfigError("eigenvalues must be pairwise distinct");
  }
  if (is_escape(scenario)) {
    if (!(epsilon > 0.0)) throw ConfigError("escape scenarios require epsilon > 0");
    const Index drop = scenario == Scenario::escape_s_r1 ? 1 : 2;
    if (r < drop) throw ConfigError("escape_s_r2 requires r >= 2");
    if (n - r < drop) throw ConfigError("n - r is too small for the spurious tuple");
  }
  if (scenario == Scenario::example_1_1 && (n != 3 || r != 2)) {
    throw ConfigError("example_1_1 is defined for n = 3, r = 2");
  }
  if (is_flow(scenario)) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"scenario", to_string(c.scenario)},
                     {"n", c.n},
                     {"r", c.r},
                     {"eigenvalues", c.eigenvalues},
                     {"alpha", c.alpha},
                     {"mode", to_string(c.mode)},
                     {"epsilon", c.epsilon},
                     {"repeats", c.repeats},
                     {"max_iters", c.max_iters},
                     {"seed", c.master_seed},
                     {"tol_dist", c.tol_dist},
                     {"dt", c.dt},
                     {"t_end", c.t_end},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {"scenario", "n",       "r",         "eigenvalues",
                                              "alpha",    "mode",    "epsilon",   "repeats",
                                              "max_iters", "seed",   "tol_dist",  "dt",
                                              "t_end",    "threads"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }
  try {
    if (j.contains("scenario")) c = ExperimentConfig::defaults(scenario_from_string(j.at("scenario")));
    if (j.contains("n")) c.n = j.at("n").get<Index>();
    if (j.contains("r")) c.r = j.at("r").get<Index>();
    if (j.contains("eigenvalues")) c.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("mode")) c.mode = step_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
    if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<long>();
    if (j.contains("seed")) c.master_seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tol_dist")) c.tol_dist = j.at("tol_dist").get<double>();
    if (j.contains("dt")) c.dt = j.at("dt").get<double>();
    if (j.contains("t_end")) c.t_end = j.at("t_end").get<double>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  from_json(j, c);
  return c;
}

// ---------------------------------------------------------------------------

std::uint64_t run_seed(const ExperimentConfig& cfg, int i) {
  return cfg.master_seed + static_cast<std::uint64_t>(i);
}

namespace {

GroundTruth ground_truth_for(const ExperimentConfig& cfg) {
  if (cfg.scenario == Scenario::example_1_1) {
    Matrix ux = Matrix::Identity(3, 2);
    Vector d(2);
    d << cfg.resolved_eigenvalues()[0], cfg.resolved_eigenvalues()[1];
    return GroundTruth::from_factors(ux, d);
  }
  return make_ground_truth(cfg.n, cfg.resolved_eigenvalues(), cfg.master_seed);
}

// Random initial point: Haar U, S = P diag(lambda) P^T with Haar P and
// lambda_i uniform on [0.5, 2].
FactoredPoint random_init(Index n, Index r, std::uint64_t seed) {
  Rng rng(seed);
  Matrix u = rng.haar_orthonormal(n, r);
  Matrix p = rng.haar_orthonormal(r, r);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  Vector lam(r);
  for (Index i = 0; i < r; ++i) lam(i) = unif(rng.engine());
  return FactoredPoint(u, p * lam.asDiagonal() * p.transpose());
}

}  // namespace

RunResult run_single(const ExperimentConfig& cfg, int i) {
  RunResult out;
  out.index = i;
  out.seed = run_seed(cfg, i);
  const GroundTruth gt = ground_truth_for(cfg);

  // reference spurious point as factors (U_ref, S_ref)
  std::optional<std::pair<Matrix, Matrix>> zref;
  std::optional<FactoredPoint> init;
  if (cfg.scenario == Scenario::example_1_1) {
    Matrix u = Matrix::Zero(3, 2);
    u(0, 0) = 1.0;
    u(2, 1) = 1.0;
    Matrix s = Matrix::Zero(2, 2);
    s(0, 0) = gt.d()(0);
    s(1, 1) = 1.0;
    init.emplace(u, s);
    zref.emplace(gt.Ux().leftCols(1), gt.d().head(1).asDiagonal().toDenseMatrix());
  } else if (is_escape(cfg.scenario)) {
    const Index drop = cfg.scenario == Scenario::escape_s_r1 ? 1 : 2;
    std::vector<bool> mask(cfg.r, true);
    for (Index k = 0; k < drop; ++k) mask[cfg.r - 1 - k] = false;
    SpuriousPoint sp = spurious_point(gt, mask);
    SpuriousTuple tuple = sample_spurious_tuple(sp, gt, derive_seed(out.seed, 1));
    const double eps = cfg.epsilon * sp.dense().norm();
    init.emplace(perturb_near(tuple, eps, derive_seed(out.seed, 2)));
    zref.emplace(sp.U1, sp.D1.asDiagonal().toDenseMatrix());
  } else {
    init.emplace(random_init(cfg.n, cfg.r, derive_seed(out.seed, 3)));
  }

  auto ref_dist = [&](const FactoredPoint& z) {
    return factored_distance(z.U(), z.S(), zref->first, zref->second);
  };

  if (is_flow(cfg.scenario)) {
    StepControls ctl;
    ctl.dt = cfg.dt;
    ctl.keep_states = false;
    ctl.grad_tol = 0.0;
    FlowSystem sys = cfg.scenario == Scenario::flow_dlra ? FlowSystem::dlra : FlowSystem::rescaled;
    IntegrationResult res = integrate(sys, *init, gt, cfg.t_end, ctl);
    out.records = res.records;
    out.iterations = static_cast<long>(res.records.size()) - 1;
    const TrajectoryRecord& last = res.records.back();
    if (last.dist < cfg.tol_dist) {
      out.status = to_string(GDStatus::converged_to_X);
    } else if (last.grad_norm < kGradTol) {
      out.status = to_string(GDStatus::near_spurious);
    } else if (res.status == FlowStatus::reached_t_end) {
      out.status = "t_end";
    } else {
      out.status = to_string(res.status);
    }
    return out;
  }

  GDConfig gd{cfg.alpha, cfg.mode, cfg.max_iters, cfg.tol_dist, kGradTol};
  IterateObserver obs;
  if (zref) obs = [&](long, const FactoredPoint& z) { out.dist_ref.push_back(ref_dist(z)); };
  GDResult res = run_rgd(*init, gt, gd, obs);
  out.records = std::move(res.records);
  out.iterations = res.iterations;
  out.rank_dropped = res.rank_dropped;
  out.status = to_string(res.status);
  return out;
}

void summarize(SummaryReport& report) {
  report.steps.clear();
  report.series.clear();
  report.status_counts.clear();
  for (const auto& run : report.runs) ++report.status_counts[run.status];
  std::size_t len = 0;
  const RunResult* longest = nullptr;
  for (const auto& run : report.runs) {
    if (run.records.size() > len) {
      len = run.records.size();
      longest = &run;
    }
  }
  if (len == 0) return;
  for (std::size_t k = 0; k < len; ++k) report.steps.push_back(longest->records[k].step_or_time);

  auto add = [&](const std::string& name, auto getter, bool needs_ref) {
    SeriesStats st;
    std::vector<double> vals;
    for (std::size_t k = 0; k < len; ++k) {
      vals.clear();
      for (const auto& run : report.runs) {
        if (run.records.empty()) continue;
        if (needs_ref && run.dist_ref.empty()) continue;
        vals.push_back(getter(run, std::min(k, run.records.size() - 1)));
      }
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size();
      st.min.push_back(vals.front());
      st.max.push_back(vals.back());
      st.median.push_back(m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]));
    }
    report.series[name] = std::move(st);
  };
  add("dist", [](const RunResult& r, std::size_t k) { return r.records[k].dist; }, false);
  add("sigma_r", [](const RunResult& r, std::size_t k) { return r.records[k].sigma_r; }, false);
  add("grad_norm", [](const RunResult& r, std::size_t k) { return r.records[k].grad_norm; }, false);
  bool any_ref = false;
  for (const auto& run : report.runs) any_ref = any_ref || !run.dist_ref.empty();
  if (any_ref) {
    add("dist_ref", [](const RunResult& r, std::size_t k) { return r.dist_ref[k]; }, true);
  }
}

SummaryReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  SummaryReport report;
  report.config = cfg;
  report.runs.resize(cfg.repeats);
  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.repeats));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](unsigned w) {
    try {
      for (int i = next++; i < cfg.repeats; i = next++) report.runs[i] = run_single(cfg, i);
    } catch (...) {
      errors[w] = std::current_exception();
      next = cfg.repeats;
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  summarize(report);
  return report;
}

// ---------------------------------------------------------------------------

std::string summary_csv(const SummaryReport& report) {
  std::vector<std::string> names = {"dist", "sigma_r", "grad_norm"};
  if (report.series.count("dist_ref")) names.push_back("dist_ref");
  std::ostringstream os;
  os << "step";
  for (const auto& s : names) os << ',' << s << "_median," << s << "_min," << s << "_max";
  os << '\n';
  for (std::size_t k = 0; k < report.steps.size(); ++k) {
    os << fmt_double(report.steps[k]);
    for (const auto& s : names) {
      const SeriesStats& st = report.series.at(s);
      os << ',' << fmt_double(st.median[k]) << ',' << fmt_double(st.min[k]) << ','
         << fmt_double(st.max[k]);
    }
    os << '\n';
  }
  return os.str();
}

std::string run_csv(const RunResult& run) {
  const bool ref = !run.dist_ref.empty();
  std::ostringstream os;
  os << "step,dist,sigma_r,grad_norm" << (ref ? ",dist_ref" : "") << '\n';
  for (std::size_t k = 0; k < run.records.size(); ++k) {
    const auto& rec = run.records[k];
    os << fmt_double(rec.step_or_time) << ',' << fmt_double(rec.dist) << ','
       << fmt_double(rec.sigma_r) << ',' << fmt_double(rec.grad_norm);
    if (ref) os << ',' << fmt_double(run.dist_ref[k]);
    os << '\n';
  }
  return os.str();
}

nlohmann::json summary_json(const SummaryReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : report.runs) {
    nlohmann::json item = {{"index", run.index},
                           {"seed", run.seed},
                           {"status", run.status},
                           {"iterations", run.iterations},
                           {"rank_dropped", run.rank_dropped}};
    if (!run.records.empty()) {
      item["final_dist"] = run.records.back().dist;
      item["final_sigma_r"] = run.records.back().sigma_r;
    }
    runs.push_back(item);
  }
  return nlohmann::json{{"config", report.config},
                        {"eigenvalues_used", report.config.resolved_eigenvalues()},
                        {"status_counts", report.status_counts},
                        {"runs", runs},
                        {"seed_rule", "run i uses seed + i; ground truth uses seed"},
                        {"versions", {{"rankflow", kVersion}}},
                        {"csv_columns",
                         {"step", "<series>_median", "<series>_min", "<series>_max"}}};
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

void emit_summary(const SummaryReport& report, const std::filesystem::path& dir,
                  bool per_run_files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "summary.csv", summary_csv(report));
  write_file(dir / "summary.json", summary_json(report).dump(2) + "\n");
  if (!per_run_files) return;
  for (const auto& run : report.runs) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03d.csv", run.index);
    write_file(dir / name, run_csv(run));
  }
}

}  // namespace rankflow
