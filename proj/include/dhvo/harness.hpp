#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dhvo/baselines.hpp"
#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/taskgraph.hpp"
#include "dhvo/trainer.hpp"

namespace dhvo::harness {

// Full resolved configuration of one run.
struct RunConfig {
  env::EnvConfig env;
  graph::DagGenConfig dag;
  train::TrainConfig train;
};

// ---------------------------------------------------------------------------
// Config schema: named numeric accessors over RunConfig. Env fields use bare
// Table-II style names, generator fields the `dag.` prefix and trainer fields
// the `train.` prefix. `derived` keys are sweep conveniences that are not
// written to config files.
// ---------------------------------------------------------------------------

struct SchemaEntry {
  std::string key;
  std::function<double(const RunConfig&)> get;
  std::function<void(RunConfig&, double)> set;
  bool derived = false;
  const char* group = "env";  // env | dag | train
};

inline const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> schema = [] {
    std::vector<SchemaEntry> s;
    auto add = [&s](const char* key, auto getter, auto setter, const char* group,
                    bool derived = false) {
      s.push_back({key, getter, setter, derived, group});
    };
#define DHVO_ENV_FIELD(name)                                            \
  add(#name, [](const RunConfig& c) { return c.env.name; },             \
      [](RunConfig& c, double v) { c.env.name = v; }, "env")
    DHVO_ENV_FIELD(rsu_coverage_m);
    DHVO_ENV_FIELD(slot_s);
    DHVO_ENV_FIELD(bandwidth_hz);
    DHVO_ENV_FIELD(f_local_max_hz);
    DHVO_ENV_FIELD(f_edge_hz);
    DHVO_ENV_FIELD(p_max_w);
    DHVO_ENV_FIELD(p_down_w);
    DHVO_ENV_FIELD(kappa);
    DHVO_ENV_FIELD(antenna_gain);
    DHVO_ENV_FIELD(channel_dist_m);
    DHVO_ENV_FIELD(t_prop_s);
    DHVO_ENV_FIELD(carrier_hz);
    DHVO_ENV_FIELD(path_loss_exp);
    DHVO_ENV_FIELD(noise_w);
    DHVO_ENV_FIELD(price_compute);
    DHVO_ENV_FIELD(price_migration);
    DHVO_ENV_FIELD(beta1);
    DHVO_ENV_FIELD(beta2);
    DHVO_ENV_FIELD(beta3);
    DHVO_ENV_FIELD(f_min_frac);
    DHVO_ENV_FIELD(p_min_frac);
    DHVO_ENV_FIELD(norm_input_bits);
    DHVO_ENV_FIELD(norm_output_bits);
    DHVO_ENV_FIELD(norm_cycles);
    DHVO_ENV_FIELD(norm_speed_mps);
#undef DHVO_ENV_FIELD
    add("fading_enabled", [](const RunConfig& c) { return c.env.fading_enabled ? 1.0 : 0.0; },
        [](RunConfig& c, double v) { c.env.fading_enabled = v != 0.0; }, "env");

    add("dag.n_min", [](const RunConfig& c) { return double(c.dag.n_min); },
        [](RunConfig& c, double v) { c.dag.n_min = int(v); }, "dag");
    add("dag.n_max", [](const RunConfig& c) { return double(c.dag.n_max); },
        [](RunConfig& c, double v) { c.dag.n_max = int(v); }, "dag");
    add("dag.di_min_bits", [](const RunConfig& c) { return c.dag.di_range.lo; },
        [](RunConfig& c, double v) { c.dag.di_range.lo = v; }, "dag");
    add("dag.di_max_bits", [](const RunConfig& c) { return c.dag.di_range.hi; },
        [](RunConfig& c, double v) { c.dag.di_range.hi = v; }, "dag");
    add("dag.do_min_bits", [](const RunConfig& c) { return c.dag.do_range.lo; },
        [](RunConfig& c, double v) { c.dag.do_range.lo = v; }, "dag");
    add("dag.do_max_bits", [](const RunConfig& c) { return c.dag.do_range.hi; },
        [](RunConfig& c, double v) { c.dag.do_range.hi = v; }, "dag");
    add("dag.cycles_min", [](const RunConfig& c) { return c.dag.cycles_range.lo; },
        [](RunConfig& c, double v) { c.dag.cycles_range.lo = v; }, "dag");
    add("dag.cycles_max", [](const RunConfig& c) { return c.dag.cycles_range.hi; },
        [](RunConfig& c, double v) { c.dag.cycles_range.hi = v; }, "dag");
    add("dag.edge_prob", [](const RunConfig& c) { return c.dag.edge_prob; },
        [](RunConfig& c, double v) { c.dag.edge_prob = v; }, "dag");

    // derived sweep knobs: shift a range keeping its half-width
    add("dag.cycles_mid_mcycles",
        [](const RunConfig& c) {
          return 0.5 * (c.dag.cycles_range.lo + c.dag.cycles_range.hi) / 1e6;
        },
        [](RunConfig& c, double mid) {
          const double half = 0.5 * (c.dag.cycles_range.hi - c.dag.cycles_range.lo);
          c.dag.cycles_range.lo = mid * 1e6 - half;
          c.dag.cycles_range.hi = mid * 1e6 + half;
        },
        "dag", true);
    add("dag.data_mid_mbytes",
        [](const RunConfig& c) {
          return 0.5 * (c.dag.di_range.lo + c.dag.di_range.hi) / env::kBitsPerMByte;
        },
        [](RunConfig& c, double mid) {
          const double half_di = 0.5 * (c.dag.di_range.hi - c.dag.di_range.lo);
          const double half_do = 0.5 * (c.dag.do_range.hi - c.dag.do_range.lo);
          c.dag.di_range.lo = mid * env::kBitsPerMByte - half_di;
          c.dag.di_range.hi = mid * env::kBitsPerMByte + half_di;
          c.dag.do_range.lo = mid * env::kBitsPerMByte - half_do;
          c.dag.do_range.hi = mid * env::kBitsPerMByte + half_do;
        },
        "dag", true);

    add("train.gamma", [](const RunConfig& c) { return c.train.gamma; },
        [](RunConfig& c, double v) { c.train.gamma = v; }, "train");
    add("train.batch", [](const RunConfig& c) { return double(c.train.batch); },
        [](RunConfig& c, double v) { c.train.batch = int(v); }, "train");
    add("train.episodes", [](const RunConfig& c) { return double(c.train.episodes); },
        [](RunConfig& c, double v) { c.train.episodes = int(v); }, "train");
    add("train.apps_per_episode",
        [](const RunConfig& c) { return double(c.train.apps_per_episode); },
        [](RunConfig& c, double v) { c.train.apps_per_episode = int(v); }, "train");
    add("train.tau", [](const RunConfig& c) { return c.train.tau; },
        [](RunConfig& c, double v) { c.train.tau = v; }, "train");
    add("train.lr_gat", [](const RunConfig& c) { return c.train.lr_gat; },
        [](RunConfig& c, double v) { c.train.lr_gat = v; }, "train");
    add("train.lr_pnaf", [](const RunConfig& c) { return c.train.lr_pnaf; },
        [](RunConfig& c, double v) { c.train.lr_pnaf = v; }, "train");
    add("train.warmup", [](const RunConfig& c) { return double(c.train.warmup); },
        [](RunConfig& c, double v) { c.train.warmup = int(v); }, "train");
    add("train.replay_capacity",
        [](const RunConfig& c) { return double(c.train.replay_capacity); },
        [](RunConfig& c, double v) { c.train.replay_capacity = std::size_t(v); }, "train");
    add("train.eps_start", [](const RunConfig& c) { return c.train.eps_start; },
        [](RunConfig& c, double v) { c.train.eps_start = v; }, "train");
    add("train.eps_end", [](const RunConfig& c) { return c.train.eps_end; },
        [](RunConfig& c, double v) { c.train.eps_end = v; }, "train");
    add("train.eps_anneal_frac", [](const RunConfig& c) { return c.train.eps_anneal_frac; },
        [](RunConfig& c, double v) { c.train.eps_anneal_frac = v; }, "train");
    add("train.ou_theta", [](const RunConfig& c) { return c.train.ou_theta; },
        [](RunConfig& c, double v) { c.train.ou_theta = v; }, "train");
    add("train.ou_sigma", [](const RunConfig& c) { return c.train.ou_sigma; },
        [](RunConfig& c, double v) { c.train.ou_sigma = v; }, "train");
    add("train.ou_sigma_decay", [](const RunConfig& c) { return c.train.ou_sigma_decay; },
        [](RunConfig& c, double v) { c.train.ou_sigma_decay = v; }, "train");
    add("train.soft_gat_target",
        [](const RunConfig& c) { return c.train.soft_gat_target ? 1.0 : 0.0; },
        [](RunConfig& c, double v) { c.train.soft_gat_target = v != 0.0; }, "train");
    return s;
  }();
  return schema;
}

inline const SchemaEntry* find_schema_entry(const std::string& key) {
  for (const auto& e : config_schema())
    if (e.key == key) return &e;
  return nullptr;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, double value) {
  const SchemaEntry* e = find_schema_entry(key);
  if (!e) throw config_error("unknown config key '" + key + "'");
  e->set(cfg, value);
}

// ---------------------------------------------------------------------------
// Flat `key = value` config files. The env file covers env and dag groups,
// the train file the train group.
// ---------------------------------------------------------------------------

inline void write_config_group(std::ostream& os, const RunConfig& cfg,
                               const std::vector<std::string>& groups) {
  os.precision(17);
  for (const auto& e : config_schema()) {
    if (e.derived) continue;
    bool wanted = false;
    for (const auto& g : groups) wanted |= g == e.group;
    if (wanted) os << e.key << " = " << e.get(cfg) << '\n';
  }
}

inline void write_env_config(std::ostream& os, const RunConfig& cfg) {
  write_config_group(os, cfg, {"env", "dag"});
}
inline void write_train_config(std::ostream& os, const RunConfig& cfg) {
  write_config_group(os, cfg, {"train"});
}

inline void parse_config(std::istream& is, RunConfig& cfg) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq;
    double value = 0.0;
    if (!(ls >> key)) continue;  // blank line
    if (!(ls >> eq >> value) || eq != "=")
      throw config_error("config: bad line " + std::to_string(lineno) + ": '" + line + "'");
    set_config_value(cfg, key, value);
  }
}

inline void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw config_error("config: cannot open " + path);
  parse_config(is, cfg);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentSpec {
  std::string name;
  RunConfig base;
  std::string swept_param;      // empty: single point
  std::vector<double> values;   // empty: single point
  std::vector<std::string> policies;
  int repetitions = 1;
  std::uint64_t seed_base = 0;
  int eval_tests = 50;
  int train_episodes = 40;  // training budget for trainable policies in sweeps

  void validate() const {
    if (policies.empty()) throw config_error("experiment: no policies");
    if (repetitions < 1) throw config_error("experiment: repetitions must be >= 1");
    if (!swept_param.empty()) {
      const SchemaEntry* e = find_schema_entry(swept_param);
      if (!e) throw config_error("experiment: unknown swept parameter '" + swept_param + "'");
      if (values.empty()) throw config_error("experiment: no sweep values");
    }
  }
};

struct ResultRow {
  std::string policy;
  double swept_value = 0.0;
  int repetition = 0;
  double mean_tesc = 0.0;
  double mean_time = 0.0;
  double mean_energy = 0.0;
  double mean_charge = 0.0;
  long local_actions = 0;
  long offload_actions = 0;
  long migrations = 0;
};

inline void write_result_header(std::ostream& os, const ExperimentSpec& spec) {
  os << "# experiment = " << spec.name << '\n';
  os << "# swept_param = " << (spec.swept_param.empty() ? "none" : spec.swept_param) << '\n';
  os << "# repetitions = " << spec.repetitions << ", eval_tests = " << spec.eval_tests
     << ", train_episodes = " << spec.train_episodes << ", seed_base = " << spec.seed_base
     << '\n';
  std::ostringstream cfg;
  write_config_group(cfg, spec.base, {"env", "dag", "train"});
  std::istringstream lines(cfg.str());
  std::string line;
  while (std::getline(lines, line)) os << "# " << line << '\n';
  os << "policy,swept_value,repetition,mean_tesc,time,energy,charge,local_actions,"
        "offload_actions,migrations\n";
}

inline void write_result_row(std::ostream& os, const ResultRow& r) {
  os.precision(12);
  os << r.policy << ',' << r.swept_value << ',' << r.repetition << ',' << r.mean_tesc << ','
     << r.mean_time << ',' << r.mean_energy << ',' << r.mean_charge << ',' << r.local_actions
     << ',' << r.offload_actions << ',' << r.migrations << '\n';
  os.flush();
}

// Trains (when needed) and evaluates one policy on the fixture set derived
// from `seed`. Optionally writes the per-episode training log.
inline train::EvalResult run_policy(const std::string& policy_name, const RunConfig& cfg,
                                    int eval_tests, int train_episodes, std::uint64_t seed,
                                    std::ostream* train_log = nullptr) {
  int grid = 0;
  const baselines::PolicyKind kind = baselines::parse_policy_kind(policy_name, &grid);
  const int n_max = cfg.dag.n_max;

  train::EnvSetup setup;
  setup.env = cfg.env;
  setup.dag = cfg.dag;

  switch (kind) {
    case baselines::PolicyKind::ALE:
    case baselines::PolicyKind::AO:
    case baselines::PolicyKind::GOE:
      return train::evaluate_policy(baselines::make_analytic_policy(kind), setup, eval_tests,
                                    seed, n_max);
    case baselines::PolicyKind::DHVO: {
      train::TrainConfig tcfg = cfg.train;
      tcfg.episodes = train_episodes;
      tcfg.seed = seed;
      train::DhvoTrainer trainer(train::make_dhvo_agent(n_max, tcfg), setup, tcfg);
      const auto log = trainer.train();
      if (train_log) train::write_metrics_csv(*train_log, log);
      return train::evaluate_policy(train::greedy_policy(trainer.agent()), setup, eval_tests,
                                    seed, n_max);
    }
    case baselines::PolicyKind::PNAF_FLAT: {
      train::TrainConfig tcfg = cfg.train;
      tcfg.episodes = train_episodes;
      tcfg.seed = seed;
      train::Trainer trainer(baselines::make_pnaf_flat_agent(n_max, tcfg), setup, tcfg);
      const auto log = trainer.train();
      if (train_log) train::write_metrics_csv(*train_log, log);
      return train::evaluate_policy(train::greedy_policy(trainer.agent()), setup, eval_tests,
                                    seed, n_max);
    }
    case baselines::PolicyKind::GDQN: {
      train::TrainConfig tcfg = cfg.train;
      tcfg.episodes = train_episodes;
      tcfg.seed = seed;
      train::Trainer trainer(baselines::make_gdqn_agent(n_max, grid), setup, tcfg);
      const auto log = trainer.train();
      if (train_log) train::write_metrics_csv(*train_log, log);
      return train::evaluate_policy(train::greedy_policy(trainer.agent()), setup, eval_tests,
                                    seed, n_max);
    }
  }
  throw config_error("unreachable policy kind");
}

// Expanded sweep grid: policy x value x repetition. Rows run on a small
// worker pool (each worker owns its trainer/env); completed rows are written
// immediately under a mutex so a crash loses at most the in-flight rows.
inline std::vector<ResultRow> run_sweep(const ExperimentSpec& spec, std::ostream& os,
                                        int n_workers = 2,
                                        const std::string& train_log_dir = "") {
  spec.validate();
  write_result_header(os, spec);

  struct Job {
    std::string policy;
    double value = 0.0;
    int value_index = 0;
    int rep = 0;
    bool swept = false;
  };
  std::vector<Job> jobs;
  const std::vector<double> values = spec.swept_param.empty() ? std::vector<double>{0.0}
                                                              : spec.values;
  for (const auto& policy : spec.policies)
    for (std::size_t vi = 0; vi < values.size(); ++vi)
      for (int rep = 0; rep < spec.repetitions; ++rep)
        jobs.push_back({policy, values[vi], static_cast<int>(vi), rep,
                        !spec.swept_param.empty()});

  std::vector<ResultRow> rows;
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      RunConfig cfg = spec.base;
      if (job.swept) set_config_value(cfg, spec.swept_param, job.value);
      // fixtures depend only on (seed_base, rep); policies and swept values
      // share them so comparisons and invariance checks are exact
      const std::uint64_t seed = derive_seed(spec.seed_base, "rep", job.rep);
      std::ostringstream log;
      const bool trainable = job.policy != "ALE" && job.policy != "AO" && job.policy != "GOE";
      const train::EvalResult res =
          run_policy(job.policy, cfg, spec.eval_tests, spec.train_episodes, seed,
                     trainable && !train_log_dir.empty() ? &log : nullptr);
      ResultRow row;
      row.policy = job.policy;
      row.swept_value = job.swept ? job.value : 0.0;
      row.repetition = job.rep;
      row.mean_tesc = res.mean_tesc;
      row.mean_time = res.mean_time;
      row.mean_energy = res.mean_energy;
      row.mean_charge = res.mean_charge;
      row.local_actions = res.local_actions;
      row.offload_actions = res.offload_actions;
      row.migrations = res.migrations;
      std::lock_guard<std::mutex> lock(io_mutex);
      write_result_row(os, row);
      rows.push_back(row);
      if (trainable && !train_log_dir.empty()) {
        std::ostringstream name;
        name << train_log_dir << "/metrics_" << spec.name << '_' << job.policy << "_v"
             << job.value_index << "_r" << job.rep << ".csv";
        std::ofstream lf(name.str());
        lf << log.str();
      }
    }
  };
  std::vector<std::thread> pool;
  const int nw = std::max(1, n_workers);
  for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

// One named experiment per headline figure; values bracket the Table-II
// defaults symmetrically where the originals are unreadable.
inline std::vector<ExperimentSpec> builtin_sweeps() {
  std::vector<ExperimentSpec> specs;
  const std::vector<std::string> five = {"ALE", "AO", "GOE", "GDQN10", "DHVO"};

  ExperimentSpec coverage;
  coverage.name = "fig8_coverage";
  coverage.swept_param = "rsu_coverage_m";
  coverage.values = {150, 200, 250, 300};
  coverage.policies = five;
  specs.push_back(coverage);

  ExperimentSpec bandwidth;
  bandwidth.name = "fig9_bandwidth";
  bandwidth.swept_param = "bandwidth_hz";
  bandwidth.values = {1.5e6, 2.0e6, 2.25e6, 2.5e6, 3.0e6};
  bandwidth.policies = five;
  specs.push_back(bandwidth);

  ExperimentSpec cycles;
  cycles.name = "fig10a_cycles";
  cycles.swept_param = "dag.cycles_mid_mcycles";
  cycles.values = {600, 800, 1000, 1200, 1400};
  cycles.policies = five;
  specs.push_back(cycles);

  ExperimentSpec datasize;
  datasize.name = "fig10b_datasize";
  datasize.swept_param = "dag.data_mid_mbytes";
  datasize.values = {2.0, 2.5, 3.0, 3.5, 4.0};
  datasize.policies = five;
  specs.push_back(datasize);

  ExperimentSpec price_r;
  price_r.name = "fig11a_compute_price";
  price_r.swept_param = "price_compute";
  price_r.values = {0.05, 0.1, 0.15, 0.2};
  price_r.policies = five;
  specs.push_back(price_r);

  ExperimentSpec price_m;
  price_m.name = "fig11b_migration_price";
  price_m.swept_param = "price_migration";
  price_m.values = {1.0, 2.0, 3.0, 4.0};
  price_m.policies = five;
  specs.push_back(price_m);

  ExperimentSpec actions;
  actions.name = "fig12_actions";
  actions.policies = five;
  actions.eval_tests = 200;
  specs.push_back(actions);

  ExperimentSpec breakdown;
  breakdown.name = "fig13_breakdown";
  breakdown.policies = five;
  specs.push_back(breakdown);

  ExperimentSpec fading;
  fading.name = "fig14_fading";
  fading.policies = {"DHVO"};
  fading.base.env.fading_enabled = true;
  specs.push_back(fading);

  ExperimentSpec ablation;
  ablation.name = "fig15_ablation";
  ablation.policies = {"DHVO", "PNAF", "GDQN2", "GDQN5", "GDQN10"};
  specs.push_back(ablation);

  return specs;
}

inline const ExperimentSpec& find_builtin_sweep(const std::vector<ExperimentSpec>& specs,
                                                const std::string& name) {
  for (const auto& s : specs)
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : specs) known += (known.empty() ? "" : ", ") + s.name;
  throw config_error("unknown sweep '" + name + "' (known: " + known + ")");
}

}  // namespace dhvo::harness
