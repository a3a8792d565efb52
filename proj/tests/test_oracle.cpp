#include <catch2/catch_amalgamated.hpp>

#include "dhvo/baselines.hpp"
#include "dhvo/oracle.hpp"

using namespace dhvo;
using oracle::OracleConfig;
using oracle::Plan;
using oracle::PlanStep;

namespace {

env::VehicleTrace synth(int seed) { return env::synth_trace(seed, 100, 0.0, 20.0); }

graph::TaskDag one_task() {
  return graph::TaskDag::make({{0, 2.4e7, 2.4e7, 1e9}}, {});
}

}  // namespace

TEST_CASE("N=1 at Table-II defaults: compute charge forces local at f_max") {
  const env::EnvConfig cfg;
  const OracleConfig ocfg;
  const Plan plan = oracle::enumerate_optimal(one_task(), cfg, synth(1), ocfg);
  REQUIRE(plan.steps.size() == 1);
  CHECK(plan.steps[0].k == 0);
  CHECK(plan.steps[0].grid_index == ocfg.f_grid - 1);  // f_max
  // hand enumeration: local at f_max costs (10 + 1)/3
  CHECK(plan.total_cost == Catch::Approx(11.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("N=1 with free compute and wide bandwidth: offload wins") {
  env::EnvConfig cfg;
  cfg.price_compute = 0.0;
  cfg.bandwidth_hz = 2e7;
  const OracleConfig ocfg;
  const graph::TaskDag dag = one_task();
  const env::VehicleTrace still = [] {
    env::VehicleTrace t;
    t.speeds_mps.assign(100, 0.0);
    return t;
  }();
  const Plan plan = oracle::enumerate_optimal(dag, cfg, still, ocfg);
  REQUIRE(plan.steps.size() == 1);

  // two-case arithmetic: best local vs best offload on the same grid
  double best_local = 1e300, best_offload = 1e300;
  const env::EnvConfig c = cfg.normalized();
  for (int g = 0; g < ocfg.f_grid; ++g) {
    const double f = env::decode_frequency(c, oracle::grid_point(g, ocfg.f_grid));
    const auto lc = env::local_cost(c, dag.task(0), f);
    best_local = std::min(best_local, c.beta1 * lc.time_s + c.beta2 * lc.energy_j);
  }
  for (int g = 0; g < ocfg.p_grid; ++g) {
    const double p = env::decode_power(c, oracle::grid_point(g, ocfg.p_grid));
    const auto oc = env::offload_cost(c, dag.task(0), p, 0.0, 0.0, still);
    best_offload =
        std::min(best_offload, c.beta1 * oc.time_s + c.beta2 * oc.energy_j + c.beta3 * oc.charge_usd);
  }
  CHECK(best_offload < best_local);
  CHECK(plan.steps[0].k == 1);
  CHECK(plan.total_cost == Catch::Approx(std::min(best_local, best_offload)).epsilon(1e-12));
}

TEST_CASE("chain has a single topological order") {
  const auto chain = graph::TaskDag::make(
      {{0, 2.4e7, 2.4e7, 9e8}, {1, 2.4e7, 2.4e7, 9e8}}, {{0, 1}});
  const env::EnvConfig cfg;
  OracleConfig ocfg;
  ocfg.f_grid = ocfg.p_grid = 2;
  const Plan plan = oracle::enumerate_optimal(chain, cfg, synth(2), ocfg);
  REQUIRE(plan.steps.size() == 2);
  CHECK(plan.steps[0].task_id == 0);
  CHECK(plan.steps[1].task_id == 1);
}

TEST_CASE("refusal above the task cap reports the search size") {
  graph::DagGenConfig dcfg;
  dcfg.n_min = dcfg.n_max = 6;
  Rng rng(3);
  const auto dag = graph::generate_dag(dcfg, rng);
  OracleConfig ocfg;
  ocfg.max_tasks = 4;
  try {
    oracle::enumerate_optimal(dag, env::EnvConfig{}, synth(3), ocfg);
    FAIL("expected refusal");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("search size") != std::string::npos);
  }
}

TEST_CASE("plan cost equals an envsim replay of the plan") {
  graph::DagGenConfig dcfg;
  dcfg.n_min = 2;
  dcfg.n_max = 3;
  Rng rng(17);
  OracleConfig ocfg;
  ocfg.f_grid = ocfg.p_grid = 3;
  for (int trial = 0; trial < 5; ++trial) {
    const auto dag = graph::generate_dag(dcfg, rng);
    const env::EnvConfig cfg;
    const auto trace = synth(trial + 100);
    const Plan plan = oracle::enumerate_optimal(dag, cfg, trace, ocfg);
    const double u = env::total_cost(plan.records, cfg.normalized());
    CHECK(plan.total_cost == Catch::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("oracle lower-bounds grid-respecting policies") {
  graph::DagGenConfig dcfg;
  dcfg.n_min = 2;
  dcfg.n_max = 4;
  Rng rng(23);
  OracleConfig ocfg;
  const env::EnvConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const auto dag = graph::generate_dag(dcfg, rng);
    const auto trace = synth(trial + 50);
    const Plan best = oracle::enumerate_optimal(dag, cfg, trace, ocfg);

    // ALE and AO use param = 1, a grid endpoint
    for (int k = 0; k < 2; ++k) {
      std::vector<PlanStep> steps;
      std::vector<std::uint8_t> done(dag.size(), 0);
      while (true) {
        const auto ready = dag.ready_set(done);
        if (ready.empty()) break;
        const int grid = k == 0 ? ocfg.f_grid : ocfg.p_grid;
        steps.push_back({ready.front(), k, grid - 1, 1.0});
        done[static_cast<std::size_t>(ready.front())] = 1;
      }
      const auto records = oracle::replay_plan(dag, cfg, trace, steps);
      CHECK(env::total_cost(records, cfg.normalized()) >= best.total_cost);
    }
  }
}

TEST_CASE("validate_env: agreement, all-local charge, negative control") {
  graph::DagGenConfig dcfg;
  dcfg.n_min = 2;
  dcfg.n_max = 5;
  Rng rng(29);
  const env::EnvConfig cfg;

  SECTION("random plans agree to 1e-9") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto dag = graph::generate_dag(dcfg, rng);
      const auto trace = synth(trial);
      std::vector<PlanStep> steps;
      std::vector<std::uint8_t> done(dag.size(), 0);
      Rng pick(trial);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      while (true) {
        const auto ready = dag.ready_set(done);
        if (ready.empty()) break;
        const int y = ready[pick() % ready.size()];
        steps.push_back({y, static_cast<int>(pick() % 2), 0, unit(pick)});
        done[static_cast<std::size_t>(y)] = 1;
      }
      const auto report = oracle::validate_env(dag, cfg, trace, steps);
      INFO(report.detail);
      CHECK(report.ok);
      CHECK(report.max_rel_err <= 1e-9);
    }
  }

  SECTION("all-local plan: charge 0 in both evaluations") {
    const auto dag = graph::generate_dag(dcfg, rng);
    std::vector<PlanStep> steps;
    for (int y : dag.topo_order()) steps.push_back({y, 0, 0, 1.0});
    const auto sim = oracle::replay_plan(dag, cfg, synth(9), steps);
    const auto ref = oracle::independent_eval(dag, cfg.normalized(), synth(9), steps);
    for (const auto& r : sim) CHECK(r.charge_usd == 0.0);
    for (const auto& r : ref) CHECK(r.charge_usd == 0.0);
  }

  SECTION("injected migration off-by-one is reported") {
    const auto dag = one_task();
    const std::vector<PlanStep> steps{{0, 1, 2, 0.5}};
    auto sim = oracle::replay_plan(dag, cfg, synth(4), steps);
    auto ref = oracle::independent_eval(dag, cfg.normalized(), synth(4), steps);
    REQUIRE(oracle::compare_records(sim, ref, cfg).ok);
    // flip the migration outcome on one side
    sim[0].migrated = !sim[0].migrated;
    sim[0].time_s += sim[0].migrated ? cfg.t_prop_s : -cfg.t_prop_s;
    const auto report = oracle::compare_records(sim, ref, cfg);
    CHECK_FALSE(report.ok);
  }
}

TEST_CASE("grid snapping") {
  CHECK(oracle::snap_to_grid(0.0, 5) == 0);
  CHECK(oracle::snap_to_grid(1.0, 5) == 4);
  CHECK(oracle::snap_to_grid(0.49, 5) == 2);
  CHECK(oracle::snap_to_grid(0.13, 5) == 1);
  CHECK(oracle::grid_point(oracle::snap_to_grid(0.77, 5), 5) == Catch::Approx(0.75));
}
