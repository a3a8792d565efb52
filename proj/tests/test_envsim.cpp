#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dhvo/envsim.hpp"
#include "dhvo/taskgraph.hpp"

using namespace dhvo;
using env::EnvConfig;
using env::Environment;
using env::HybridAction;
using env::VehicleTrace;
using graph::TaskDag;

namespace {

TaskDag single_task(double di, double dout, double cycles) {
  return TaskDag::make({{0, di, dout, cycles}}, {});
}

VehicleTrace constant_trace(double v, int len = 100) {
  VehicleTrace t;
  t.speeds_mps.assign(static_cast<std::size_t>(len), v);
  return t;
}

Environment single_task_env(const EnvConfig& cfg, const VehicleTrace& trace, double di,
                            double dout, double cycles) {
  const TaskDag dag = single_task(di, dout, cycles);
  return Environment(cfg, trace, [dag]() { return dag; }, 1);
}

}  // namespace

TEST_CASE("channel gain at defaults") {
  EnvConfig cfg;
  // direct evaluation of the path-loss expression
  const double lam = 3.0e8 / (4.0 * std::numbers::pi * 915e6 * 100.0);
  const double expected = std::pow(lam, 3.0);
  CHECK(env::channel_gain(cfg) == Catch::Approx(expected).epsilon(1e-12));
  CHECK(env::channel_gain(cfg) == Catch::Approx(1.776e-11).epsilon(5e-3));

  EnvConfig flat = cfg;
  flat.path_loss_exp = 0.0;
  CHECK(env::channel_gain(flat) == 1.0);
  CHECK(env::channel_gain(cfg, 0.0) == 0.0);
  CHECK(env::channel_gain(cfg, 2.0) == Catch::Approx(2.0 * expected));
}

TEST_CASE("uplink and downlink rates") {
  EnvConfig cfg;
  const double gain = env::channel_gain(cfg);
  CHECK(env::uplink_rate(cfg, 0.0, gain) == 0.0);

  const double snr = 0.2 * cfg.antenna_gain * gain / cfg.noise_w;
  const double expected = cfg.bandwidth_hz * std::log2(1.0 + snr);
  CHECK(snr == Catch::Approx(14.60).epsilon(5e-3));
  CHECK(env::uplink_rate(cfg, 0.2, gain) == Catch::Approx(expected).epsilon(1e-12));
  CHECK(env::uplink_rate(cfg, 0.2, gain) == Catch::Approx(7.93e6).epsilon(5e-3));

  // downlink with the symmetric default power matches
  CHECK(env::downlink_rate(cfg, gain) == Catch::Approx(env::uplink_rate(cfg, cfg.p_max_w, gain)));
  CHECK(env::downlink_rate(cfg, 0.0) == 0.0);

  EnvConfig wide = cfg;
  wide.bandwidth_hz = 2.0 * cfg.bandwidth_hz;
  CHECK(env::uplink_rate(wide, 0.2, gain) ==
        Catch::Approx(2.0 * env::uplink_rate(cfg, 0.2, gain)));

  // strict monotonicity in power and gain
  double prev = 0.0;
  for (double p = 0.01; p <= 0.2; p += 0.01) {
    const double r = env::uplink_rate(cfg, p, gain);
    CHECK(r > prev);
    prev = r;
  }
  CHECK(env::uplink_rate(cfg, 0.2, gain * 2.0) > env::uplink_rate(cfg, 0.2, gain));
}

TEST_CASE("local cost worked values and trade-off") {
  EnvConfig cfg;
  const graph::TaskSpec t1{0, 1e6, 1e6, 1e9};
  const auto c1 = env::local_cost(cfg, t1, 1e8);
  CHECK(c1.time_s == Catch::Approx(10.0));
  CHECK(c1.energy_j == Catch::Approx(1.0));

  const graph::TaskSpec t2{0, 1e6, 1e6, 8e8};
  const auto c2 = env::local_cost(cfg, t2, 1e8);
  CHECK(c2.time_s == Catch::Approx(8.0));
  CHECK(c2.energy_j == Catch::Approx(0.8));

  // f numerically equal to cycles => exactly 1 s
  const graph::TaskSpec t3{0, 1e6, 1e6, 9.5e7};
  CHECK(env::local_cost(cfg, t3, 9.5e7).time_s == Catch::Approx(1.0));

  // time decreasing, energy increasing in f
  double prev_t = 1e99, prev_e = 0.0;
  for (double f = cfg.f_min_hz(); f <= cfg.f_local_max_hz; f += 5e6) {
    const auto c = env::local_cost(cfg, t1, f);
    CHECK(c.time_s < prev_t);
    CHECK(c.energy_j > prev_e);
    prev_t = c.time_s;
    prev_e = c.energy_j;
  }
}

TEST_CASE("offload cost worked example, stationary vehicle") {
  EnvConfig cfg;
  const graph::TaskSpec task{0, 2.4e7, 2.4e7, 1e9};
  const VehicleTrace still = constant_trace(0.0);
  const auto oc = env::offload_cost(cfg, task, 0.2, 0.0, 0.0, still);
  CHECK(oc.uplink_s == Catch::Approx(3.026).epsilon(5e-3));
  CHECK(oc.edge_s == Catch::Approx(1.0));
  CHECK(oc.downlink_s == Catch::Approx(3.026).epsilon(5e-3));
  CHECK_FALSE(oc.migrated);
  CHECK(oc.time_s == Catch::Approx(7.05).epsilon(5e-3));
  CHECK(oc.energy_j == Catch::Approx(0.605).epsilon(5e-3));
  CHECK(oc.charge_usd == Catch::Approx(100.0));
}

TEST_CASE("migration detection by hand integration") {
  EnvConfig cfg;
  // tau = 5 s needs DI = DO = 2 s of payload at the p_max rate plus 1 s edge
  const double g = env::channel_gain(cfg);
  const double rate = env::uplink_rate(cfg, cfg.p_max_w, g);
  const graph::TaskSpec task{0, 2.0 * rate, 2.0 * rate, 1e9};
  const VehicleTrace v12 = constant_trace(12.0);

  // d = 150 m, displacement 60 m -> 210 >= 200 migrates
  const auto mig = env::offload_cost(cfg, task, cfg.p_max_w, 150.0, 0.0, v12);
  CHECK(mig.migrated);
  CHECK(mig.time_s == Catch::Approx(5.0 + cfg.t_prop_s).epsilon(1e-9));
  CHECK(mig.charge_usd == Catch::Approx(100.0 + 2000.0));

  // same launch at d = 0 stays inside
  const auto stay = env::offload_cost(cfg, task, cfg.p_max_w, 0.0, 0.0, v12);
  CHECK_FALSE(stay.migrated);
  CHECK(stay.charge_usd == Catch::Approx(100.0));

  // zero-speed trace never migrates from inside the cell
  const auto still = env::offload_cost(cfg, task, cfg.p_max_w, 199.0, 0.0, constant_trace(0.0));
  CHECK_FALSE(still.migrated);

  // longer duration at the same start migrates whenever the shorter one does
  const graph::TaskSpec longer{0, 3.0 * rate, 3.0 * rate, 1e9};
  const auto mig2 = env::offload_cost(cfg, longer, cfg.p_max_w, 150.0, 0.0, v12);
  CHECK(mig2.migrated);
}

TEST_CASE("trace distance is piecewise constant with fractional ends") {
  VehicleTrace tr;
  tr.speeds_mps = {10.0, 20.0, 30.0};
  CHECK(env::trace_distance(tr, 0.0, 1.0) == Catch::Approx(10.0));
  CHECK(env::trace_distance(tr, 0.5, 1.5) == Catch::Approx(5.0 + 10.0));
  CHECK(env::trace_distance(tr, 0.0, 3.0) == Catch::Approx(60.0));
  // cyclic wrap: second 3 re-uses sample 0
  CHECK(env::trace_distance(tr, 3.0, 4.0) == Catch::Approx(10.0));
  CHECK(env::trace_distance(tr, 2.5, 3.25) == Catch::Approx(15.0 + 2.5));
  CHECK(env::trace_distance(tr, 2.0, 2.0) == 0.0);
}

TEST_CASE("trace parsing and synthesis") {
  std::stringstream good("0,10.0\n1,12.0\n");
  const VehicleTrace t = env::parse_trace(good);
  REQUIRE(t.speeds_mps.size() == 2);
  CHECK(t.speeds_mps[0] == 10.0);
  CHECK(t.speeds_mps[1] == 12.0);

  std::stringstream bad("0,10.0\nnot-a-line\n");
  try {
    env::parse_trace(bad);
    FAIL("expected parse error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const VehicleTrace c = env::synth_trace(5, 50, 7.5, 7.5);
  for (double v : c.speeds_mps) CHECK(v == 7.5);

  const VehicleTrace a = env::synth_trace(42, 100, 0.0, 20.0);
  const VehicleTrace b = env::synth_trace(42, 100, 0.0, 20.0);
  CHECK(a.speeds_mps == b.speeds_mps);
  for (double v : a.speeds_mps) {
    CHECK(v >= 0.0);
    CHECK(v <= 20.0);
  }

  std::stringstream round;
  env::write_trace(round, t);
  const VehicleTrace back = env::parse_trace(round);
  CHECK(back.speeds_mps == t.speeds_mps);
}

TEST_CASE("step: single local task reward") {
  EnvConfig cfg;
  Environment e = single_task_env(cfg, constant_trace(10.0), 2.4e7, 2.4e7, 1e9);
  const auto out = e.step({0, 0, 1.0});  // param 1 -> f_max
  CHECK(out.time_s == Catch::Approx(10.0));
  CHECK(out.energy_j == Catch::Approx(1.0));
  CHECK(out.charge_usd == 0.0);
  CHECK(out.reward == Catch::Approx(-(10.0 + 1.0) / 3.0).epsilon(1e-9));
  CHECK(out.reward == Catch::Approx(-3.6667).epsilon(1e-4));
  CHECK(out.app_done);
  CHECK(out.episode_done);
  CHECK(e.state().clock_s == Catch::Approx(10.0));
  CHECK(e.state().position_m == Catch::Approx(100.0));
}

TEST_CASE("step rejects non-ready and repeated tasks") {
  EnvConfig cfg;
  const TaskDag chain =
      TaskDag::make({{0, 1e7, 1e7, 1e9}, {1, 1e7, 1e7, 1e9}}, {{0, 1}});
  Environment e(cfg, constant_trace(0.0), [chain]() { return chain; }, 1);
  CHECK_THROWS_AS(e.step({1, 0, 1.0}), invalid_action_error);
  CHECK_THROWS_AS(e.step({5, 0, 1.0}), invalid_action_error);
  CHECK_THROWS_AS(e.step({0, 2, 1.0}), invalid_action_error);
  e.step({0, 0, 1.0});
  CHECK_THROWS_AS(e.step({0, 0, 1.0}), invalid_action_error);
  e.step({1, 0, 1.0});
  CHECK(e.episode_done());
  CHECK_THROWS_AS(e.step({1, 0, 1.0}), invalid_action_error);
}

TEST_CASE("reward accumulation equals closed-form total cost") {
  EnvConfig cfg;
  graph::DagGenConfig dcfg;
  dcfg.n_min = 3;
  dcfg.n_max = 6;
  Rng rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    const TaskDag dag = graph::generate_dag(dcfg, rng);
    Environment e(cfg, env::synth_trace(trial, 100, 0.0, 20.0), [dag]() { return dag; }, 1);
    std::vector<env::PlanStepRecord> records;
    double reward_sum = 0.0;
    Rng pick(trial);
    while (!e.episode_done()) {
      const auto ready = e.ready_tasks();
      const int y = ready[pick() % ready.size()];
      const int k = static_cast<int>(pick() % 2);
      const double param = std::uniform_real_distribution<double>(0.0, 1.0)(pick);
      const auto out = e.step({y, k, param});
      reward_sum += out.reward;
      env::PlanStepRecord r;
      r.time_s = out.time_s;
      r.energy_j = out.energy_j;
      r.charge_usd = out.charge_usd;
      records.push_back(r);
    }
    const double u = env::total_cost(records, e.config());
    CHECK(-reward_sum == Catch::Approx(u).epsilon(1e-9));
  }
  CHECK(env::total_cost({}, cfg.normalized()) == 0.0);
}

TEST_CASE("total cost of the two worked steps") {
  EnvConfig cfg = EnvConfig{}.normalized();
  env::PlanStepRecord local{0, 0, 1e8, 10.0, 1.0, 0.0, false, 0.0};
  env::PlanStepRecord off{1, 1, 0.2, 7.05, 0.605, 100.0, false, 0.0};
  const double u = env::total_cost({local, off}, cfg);
  CHECK(u == Catch::Approx((17.05 + 1.605 + 100.0) / 3.0).epsilon(1e-12));
  CHECK(u == Catch::Approx(39.57).epsilon(1e-3));
}

TEST_CASE("observe: features, padding, speed window") {
  EnvConfig cfg;
  const TaskDag dag = TaskDag::make({{0, 2.8e7, 1.4e7, 1.2e9}, {1, 2.0e7, 2.8e7, 8e8}}, {{0, 1}});
  Environment e(cfg, constant_trace(8.0), [dag]() { return dag; }, 1);

  const auto fm = e.observe(4);
  CHECK(fm.n == 2);
  CHECK(fm.n_max == 4);
  CHECK(fm.valid == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(fm.at(0, 0) == Catch::Approx(1.0));          // DI / norm
  CHECK(fm.at(0, 1) == Catch::Approx(0.5));          // DO / norm
  CHECK(fm.at(0, 2) == Catch::Approx(1.0));          // C / norm
  CHECK(fm.at(0, 3) == 0.0);                         // E_i fresh
  CHECK(fm.at(0, 5) == Catch::Approx(1.0));          // all remaining
  // clock 0: window is [0,0,0,0,v(0)]
  for (int s = 0; s < 4; ++s) CHECK(fm.at(0, 6 + s) == 0.0);
  CHECK(fm.at(0, 10) == Catch::Approx(8.0 / 40.0));
  // padding rows all zero
  for (int c = 0; c < env::FeatureMatrix::kWidth; ++c) {
    CHECK(fm.at(2, c) == 0.0);
    CHECK(fm.at(3, c) == 0.0);
  }

  e.step({0, 0, 1.0});  // 12 s local
  const auto fm2 = e.observe(4);
  CHECK(fm2.at(0, 3) == 1.0);
  CHECK(fm2.at(1, 3) == 0.0);
  CHECK(fm2.at(0, 5) == Catch::Approx(0.5));
  // clock 12: full window of the constant trace
  for (int s = 0; s < 5; ++s) CHECK(fm2.at(0, 6 + s) == Catch::Approx(0.2));

  e.step({1, 0, 1.0});
  const auto fm3 = e.observe(4);
  CHECK(fm3.at(0, 3) == 1.0);
  CHECK(fm3.at(1, 3) == 1.0);
  CHECK(fm3.at(1, 5) == 0.0);

  CHECK_THROWS_AS(e.observe(1), config_error);
}

TEST_CASE("deterministic steps and monotone clock/position") {
  EnvConfig cfg;
  graph::DagGenConfig dcfg;
  Rng rng(9);
  const TaskDag dag = graph::generate_dag(dcfg, rng);
  const VehicleTrace trace = env::synth_trace(77, 100, 0.0, 15.0);

  auto run = [&]() {
    Environment e(cfg, trace, [dag]() { return dag; }, 1);
    std::vector<double> rewards;
    double clock = 0.0, pos = 0.0;
    Rng pick(3);
    while (!e.episode_done()) {
      const auto ready = e.ready_tasks();
      const auto out =
          e.step({ready[pick() % ready.size()], static_cast<int>(pick() % 2), 0.7});
      CHECK(e.state().clock_s > clock);
      CHECK(e.state().position_m >= pos);
      clock = e.state().clock_s;
      pos = e.state().position_m;
      rewards.push_back(out.reward);
    }
    return rewards;
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1 == r2);
}

TEST_CASE("position equals the trace integral from zero") {
  EnvConfig cfg;
  graph::DagGenConfig dcfg;
  dcfg.n_min = dcfg.n_max = 6;
  Rng rng(31);
  const TaskDag dag = graph::generate_dag(dcfg, rng);
  const VehicleTrace trace = env::synth_trace(5, 100, 0.0, 18.0);
  Environment e(cfg, trace, [dag]() { return dag; }, 1);
  Rng pick(8);
  while (!e.episode_done()) {
    const auto ready = e.ready_tasks();
    e.step({ready[pick() % ready.size()], static_cast<int>(pick() % 2), 0.5});
    const double direct = env::trace_distance(trace, 0.0, e.state().clock_s);
    CHECK(e.state().position_m == Catch::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("fading draws scale the rates and are reproducible") {
  EnvConfig cfg;
  cfg.fading_enabled = true;
  const TaskDag dag = single_task(2.4e7, 2.4e7, 1e9);
  auto make = [&](std::uint64_t seed) {
    return Environment(cfg, constant_trace(0.0), [dag]() { return dag; }, 1, seed);
  };
  Environment e1 = make(7), e2 = make(7), e3 = make(8);
  const auto o1 = e1.step({0, 1, 1.0});
  const auto o2 = e2.step({0, 1, 1.0});
  const auto o3 = e3.step({0, 1, 1.0});
  CHECK(o1.time_s == o2.time_s);
  CHECK(o1.time_s != o3.time_s);

  // fading off must match the nominal offload cost
  EnvConfig nofade = cfg;
  nofade.fading_enabled = false;
  Environment e4(nofade, constant_trace(0.0), [dag]() { return dag; }, 1, 7);
  const auto o4 = e4.step({0, 1, 1.0});
  const auto oc = env::offload_cost(nofade, dag.task(0), 0.2, 0.0, 0.0, constant_trace(0.0));
  CHECK(o4.time_s == Catch::Approx(oc.time_s));
}

TEST_CASE("multi-application episodes continue the clock") {
  EnvConfig cfg;
  graph::DagGenConfig dcfg;
  dcfg.n_min = dcfg.n_max = 2;
  auto dag_rng = std::make_shared<Rng>(55);
  Environment e(cfg, constant_trace(5.0),
                [dag_rng, dcfg]() { return graph::generate_dag(dcfg, *dag_rng); }, 3);
  int apps = 0;
  double clock_at_app = 0.0;
  while (!e.episode_done()) {
    const auto ready = e.ready_tasks();
    const auto out = e.step({ready.front(), 0, 1.0});
    if (out.app_done) {
      ++apps;
      CHECK(e.state().clock_s > clock_at_app);
      clock_at_app = e.state().clock_s;
      if (!out.episode_done) CHECK_FALSE(e.ready_tasks().empty());
    }
  }
  CHECK(apps == 3);
  CHECK(e.state().apps_completed == 3);
}

TEST_CASE("plan csv export") {
  std::stringstream ss;
  env::write_plan_csv(ss, {{0, 1, 0.2, 7.0, 0.6, 100.0, true, -35.0}});
  const std::string s = ss.str();
  CHECK(s.find("task_id,k,param,t,e,c,migrated,reward") == 0);
  CHECK(s.find("0,1,0.2") != std::string::npos);
}
