// Command-line front end: train agents, evaluate policies, reproduce the
// experiment sweeps, cross-check the simulator against the brute-force
// oracle, synthesize speed traces and audit gradients.
//
// Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dhvo/baselines.hpp"
#include "dhvo/gradcheck.hpp"
#include "dhvo/harness.hpp"
#include "dhvo/oracle.hpp"
#include "dhvo/trainer.hpp"

namespace fs = std::filesystem;
using namespace dhvo;

namespace {

struct CommonOpts {
  std::string env_config;
  std::string train_config;
  std::uint64_t seed = 0;
};

harness::RunConfig load_run_config(const CommonOpts& opts) {
  harness::RunConfig cfg;
  if (!opts.env_config.empty()) harness::load_config_file(opts.env_config, cfg);
  if (!opts.train_config.empty()) harness::load_config_file(opts.train_config, cfg);
  cfg.env.validate();
  cfg.dag.validate();
  cfg.train.validate();
  return cfg;
}

train::EnvSetup make_setup(const harness::RunConfig& cfg, const std::string& trace_path) {
  train::EnvSetup setup;
  setup.env = cfg.env;
  setup.dag = cfg.dag;
  if (!trace_path.empty()) setup.traces.push_back(env::load_trace(trace_path));
  return setup;
}

int cmd_train(const CommonOpts& common, const std::string& policy, const std::string& out_dir,
              const std::string& trace_path, int episodes_override,
              const std::string& resume_path, bool save_state) {
  harness::RunConfig cfg = load_run_config(common);
  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = common.seed;
  if (episodes_override > 0) tcfg.episodes = episodes_override;
  const int n_max = cfg.dag.n_max;
  train::EnvSetup setup = make_setup(cfg, trace_path);

  fs::create_directories(out_dir);

  auto run = [&](auto& trainer) {
    if (!resume_path.empty()) {
      std::ifstream is(resume_path);
      if (!is) throw config_error("cannot open resume state " + resume_path);
      trainer.load_state(is);
      std::cout << "resumed at episode " << trainer.episodes_done() << "\n";
    }
    const auto log = trainer.train();
    {
      std::ofstream ms(out_dir + "/metrics.csv");
      // keep the full log when resuming by appending only the new episodes
      train::write_metrics_csv(ms, log);
    }
    {
      std::ofstream ps(out_dir + "/checkpoint.txt");
      trainer.save_params(ps);
    }
    if (save_state) {
      std::ofstream ss(out_dir + "/trainer_state.txt");
      trainer.save_state(ss);
    }
    for (const auto& e : log)
      std::cout << "episode " << e.episode << " mean_tesc " << e.mean_tesc << " mean_loss "
                << e.mean_loss << " epsilon " << e.epsilon << "\n";
  };

  int grid = 0;
  switch (baselines::parse_policy_kind(policy, &grid)) {
    case baselines::PolicyKind::DHVO: {
      train::DhvoTrainer trainer(train::make_dhvo_agent(n_max, tcfg), setup, tcfg);
      run(trainer);
      break;
    }
    case baselines::PolicyKind::PNAF_FLAT: {
      train::Trainer trainer(baselines::make_pnaf_flat_agent(n_max, tcfg), setup, tcfg);
      run(trainer);
      break;
    }
    case baselines::PolicyKind::GDQN: {
      train::Trainer trainer(baselines::make_gdqn_agent(n_max, grid), setup, tcfg);
      run(trainer);
      break;
    }
    default:
      throw config_error("policy '" + policy + "' is not trainable");
  }
  std::cout << "wrote " << out_dir << "/checkpoint.txt and metrics.csv\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& policy,
                 const std::string& checkpoint, const std::string& trace_path, int tests,
                 const std::string& out_csv) {
  harness::RunConfig cfg = load_run_config(common);
  const int n_max = cfg.dag.n_max;
  train::EnvSetup setup = make_setup(cfg, trace_path);

  train::EvalResult res;
  int grid = 0;
  const auto kind = baselines::parse_policy_kind(policy, &grid);
  const bool analytic = kind == baselines::PolicyKind::ALE || kind == baselines::PolicyKind::AO ||
                        kind == baselines::PolicyKind::GOE;
  if (analytic) {
    res = train::evaluate_policy(baselines::make_analytic_policy(kind), setup, tests,
                                 common.seed, n_max);
  } else {
    if (checkpoint.empty())
      throw config_error("trainable policy evaluation needs --checkpoint");
    std::ifstream is(checkpoint);
    if (!is) throw config_error("cannot open checkpoint " + checkpoint);
    const auto loaded = nn::read_params(is);
    train::TrainConfig tcfg = cfg.train;
    if (kind == baselines::PolicyKind::DHVO) {
      auto agent = train::make_dhvo_agent(n_max, tcfg);
      nn::load_params(loaded, agent.all_online_blocks());
      res = train::evaluate_policy(train::greedy_policy(agent), setup, tests, common.seed, n_max);
    } else if (kind == baselines::PolicyKind::PNAF_FLAT) {
      auto agent = baselines::make_pnaf_flat_agent(n_max, tcfg);
      nn::load_params(loaded, agent.all_online_blocks());
      res = train::evaluate_policy(train::greedy_policy(agent), setup, tests, common.seed, n_max);
    } else {
      auto agent = baselines::make_gdqn_agent(n_max, grid);
      nn::load_params(loaded, agent.all_online_blocks());
      res = train::evaluate_policy(train::greedy_policy(agent), setup, tests, common.seed, n_max);
    }
  }

  std::cout << "policy " << policy << "\n"
            << "tests " << res.n_tests << "\n"
            << "mean_tesc " << res.mean_tesc << "\n"
            << "mean_time " << res.mean_time << " mean_energy " << res.mean_energy
            << " mean_charge " << res.mean_charge << "\n"
            << "local_actions " << res.local_actions << " offload_actions "
            << res.offload_actions << " migrations " << res.migrations << "\n";
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    os << "policy,tests,mean_tesc,mean_time,mean_energy,mean_charge,local_actions,"
          "offload_actions,migrations\n";
    os.precision(12);
    os << policy << ',' << res.n_tests << ',' << res.mean_tesc << ',' << res.mean_time << ','
       << res.mean_energy << ',' << res.mean_charge << ',' << res.local_actions << ','
       << res.offload_actions << ',' << res.migrations << '\n';
  }
  return 0;
}

int cmd_sweep(const CommonOpts& common, const std::string& name, const std::string& param,
              const std::vector<double>& values, const std::vector<std::string>& policies,
              int reps, int eval_tests, int train_episodes, const std::string& out_dir,
              int workers) {
  harness::ExperimentSpec spec;
  if (!name.empty()) {
    spec = harness::find_builtin_sweep(harness::builtin_sweeps(), name);
  } else {
    spec.name = "custom";
    spec.swept_param = param;
    spec.values = values;
    spec.policies = policies;
  }
  // command-line base config and overrides win over builtin defaults
  harness::RunConfig base = load_run_config(common);
  if (spec.name == "fig14_fading") base.env.fading_enabled = true;
  spec.base = base;
  spec.seed_base = common.seed;
  if (reps > 0) spec.repetitions = reps;
  if (eval_tests > 0) spec.eval_tests = eval_tests;
  if (train_episodes > 0) spec.train_episodes = train_episodes;
  if (!policies.empty() && !name.empty()) spec.policies = policies;
  spec.validate();

  fs::create_directories(out_dir);
  const std::string csv_path = out_dir + "/" + spec.name + ".csv";
  std::ofstream os(csv_path);
  if (!os) throw config_error("cannot write " + csv_path);
  const auto rows = harness::run_sweep(spec, os, workers, out_dir);
  std::cout << "wrote " << rows.size() << " rows to " << csv_path << "\n";
  return 0;
}

int cmd_oracle_check(const CommonOpts& common, int fixtures, int max_tasks, int grid,
                     bool refine, const std::string& plan_dir) {
  harness::RunConfig cfg = load_run_config(common);
  oracle::OracleConfig ocfg;
  ocfg.max_tasks = max_tasks;
  ocfg.f_grid = grid;
  ocfg.p_grid = grid;

  graph::DagGenConfig dcfg = cfg.dag;
  dcfg.n_min = std::min(dcfg.n_min, max_tasks);
  dcfg.n_max = std::min(dcfg.n_max, max_tasks);
  if (dcfg.n_min > dcfg.n_max) dcfg.n_min = dcfg.n_max;

  if (!plan_dir.empty()) fs::create_directories(plan_dir);

  double worst = 0.0;
  for (int i = 0; i < fixtures; ++i) {
    Rng rng(derive_seed(common.seed, "oracle-dag", i));
    const graph::TaskDag dag = graph::generate_dag(dcfg, rng);
    const env::VehicleTrace trace =
        env::synth_trace(derive_seed(common.seed, "oracle-trace", i), 100, 0.0, 20.0);

    const oracle::Plan plan = oracle::enumerate_optimal(dag, cfg.env, trace, ocfg);
    const auto report = oracle::validate_env(dag, cfg.env, trace, plan.steps);
    worst = std::max(worst, report.max_rel_err);
    std::cout << "fixture " << i << ": N=" << dag.size() << " optimum=" << plan.total_cost
              << " validate_rel_err=" << report.max_rel_err;
    if (refine) {
      oracle::OracleConfig fine = ocfg;
      fine.f_grid = fine.p_grid = 2 * grid;
      const oracle::Plan plan10 = oracle::enumerate_optimal(dag, cfg.env, trace, fine);
      std::cout << " refined_optimum=" << plan10.total_cost
                << " delta=" << plan.total_cost - plan10.total_cost;
    }
    std::cout << (report.ok ? " ok" : " MISMATCH") << "\n";
    if (!report.ok) {
      std::cerr << "validation failed: " << report.detail << "\n";
      return 3;
    }
    if (!plan_dir.empty()) {
      std::ofstream ps(plan_dir + "/plan_" + std::to_string(i) + ".csv");
      env::write_plan_csv(ps, plan.records);
    }
  }
  std::cout << "all " << fixtures << " fixtures validated, max rel err " << worst << "\n";
  return 0;
}

int cmd_trace_gen(std::uint64_t seed, int len, double vmin, double vmax,
                  const std::string& out) {
  const env::VehicleTrace t = env::synth_trace(seed, len, vmin, vmax);
  if (out.empty() || out == "-") {
    env::write_trace(std::cout, t);
  } else {
    std::ofstream os(out);
    if (!os) throw config_error("cannot write " + out);
    env::write_trace(os, t);
    std::cout << "wrote " << t.speeds_mps.size() << " samples to " << out << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int fixtures, double tol) {
  const auto report = gradcheck::composite_gradcheck(seed, fixtures, tol);
  for (const auto& line : report.lines) std::cout << line << "\n";
  std::cout << (report.pass ? "gradcheck PASS" : "gradcheck FAIL") << " (worst "
            << report.worst << " over " << fixtures << " fixtures, tol " << tol << ")\n";
  return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale V2I DAG offloading lab: simulator, DHVO learner, baselines, oracle"};
  app.require_subcommand(1);

  CommonOpts common;

  auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--env-config", common.env_config, "env/dag config file (key = value)");
    cmd->add_option("--train-config", common.train_config, "trainer config file");
    cmd->add_option("--seed", common.seed, "master seed");
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a policy and write checkpoint + metrics");
  std::string policy = "DHVO", out_dir = "run", trace_path, resume_path;
  int episodes_override = 0;
  bool save_state = false;
  add_common(train_cmd);
  train_cmd->add_option("--policy", policy, "DHVO | PNAF | GDQN<X>");
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--trace", trace_path, "speed trace CSV (synthetic when omitted)");
  train_cmd->add_option("--episodes", episodes_override, "override training episodes");
  train_cmd->add_option("--resume", resume_path, "resume from trainer_state.txt");
  train_cmd->add_flag("--save-state", save_state, "also write full trainer state");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "greedy evaluation of a policy");
  std::string eval_policy = "ALE", checkpoint, eval_out;
  int tests = 50;
  add_common(eval_cmd);
  eval_cmd->add_option("--policy", eval_policy, "ALE | AO | GOE | DHVO | PNAF | GDQN<X>");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint for trainable policies");
  eval_cmd->add_option("--trace", trace_path, "speed trace CSV (synthetic when omitted)");
  eval_cmd->add_option("--tests", tests, "number of single-application tests");
  eval_cmd->add_option("--out", eval_out, "also write a CSV row");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run a builtin or custom experiment sweep");
  std::string sweep_name, sweep_param, sweep_out = "results";
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_policies;
  int reps = 0, sweep_tests = 0, sweep_train_episodes = 0, workers = 2;
  add_common(sweep_cmd);
  sweep_cmd->add_option("--name", sweep_name, "builtin sweep name (fig8_coverage, ...)");
  sweep_cmd->add_option("--param", sweep_param, "custom: schema key to sweep");
  sweep_cmd->add_option("--values", sweep_values, "custom: sweep values");
  sweep_cmd->add_option("--policies", sweep_policies, "policies to run");
  sweep_cmd->add_option("--reps", reps, "repetitions per cell");
  sweep_cmd->add_option("--tests", sweep_tests, "evaluation tests per cell");
  sweep_cmd->add_option("--train-episodes", sweep_train_episodes, "training budget");
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  sweep_cmd->add_option("--workers", workers, "worker threads");

  // oracle-check
  auto* oracle_cmd = app.add_subcommand("oracle-check", "validate the simulator against "
                                                        "brute-force enumeration");
  int fixtures = 10, max_tasks = 4, grid = 5;
  bool refine = false;
  std::string plan_dir;
  add_common(oracle_cmd);
  oracle_cmd->add_option("--fixtures", fixtures, "number of random fixtures");
  oracle_cmd->add_option("--max-tasks", max_tasks, "task cap for enumeration");
  oracle_cmd->add_option("--grid", grid, "grid points per continuous variable");
  oracle_cmd->add_flag("--refine", refine, "also report the doubled-grid optimum gap");
  oracle_cmd->add_option("--plans", plan_dir, "export optimal plans as CSV");

  // trace-gen
  auto* trace_cmd = app.add_subcommand("trace-gen", "emit a synthetic speed trace CSV");
  std::uint64_t trace_seed = 0;
  int trace_len = 100;
  double vmin = 0.0, vmax = 20.0;
  std::string trace_out;
  trace_cmd->add_option("--seed", trace_seed, "trace seed");
  trace_cmd->add_option("--len", trace_len, "length in seconds");
  trace_cmd->add_option("--vmin", vmin, "minimum speed m/s");
  trace_cmd->add_option("--vmax", vmax, "maximum speed m/s");
  trace_cmd->add_option("--out", trace_out, "output path (stdout when omitted)");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit of the full "
                                                   "encoder+head composite");
  std::uint64_t grad_seed = 0;
  int grad_fixtures = 20;
  double grad_tol = 1e-4;
  grad_cmd->add_option("--seed", grad_seed, "seed");
  grad_cmd->add_option("--fixtures", grad_fixtures, "random 3-node fixtures");
  grad_cmd->add_option("--tol", grad_tol, "relative tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd)
      return cmd_train(common, policy, out_dir, trace_path, episodes_override, resume_path,
                       save_state);
    if (*eval_cmd)
      return cmd_evaluate(common, eval_policy, checkpoint, trace_path, tests, eval_out);
    if (*sweep_cmd)
      return cmd_sweep(common, sweep_name, sweep_param, sweep_values, sweep_policies, reps,
                       sweep_tests, sweep_train_episodes, sweep_out, workers);
    if (*oracle_cmd)
      return cmd_oracle_check(common, fixtures, max_tasks, grid, refine, plan_dir);
    if (*trace_cmd) return cmd_trace_gen(trace_seed, trace_len, vmin, vmax, trace_out);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, grad_fixtures, grad_tol);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
