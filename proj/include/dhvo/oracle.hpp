#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/taskgraph.hpp"

namespace dhvo::oracle {

struct OracleConfig {
  int max_tasks = 5;
  int f_grid = 5;
  int p_grid = 5;

  void validate() const {
    if (max_tasks < 1 || max_tasks > 6) throw config_error("oracle: max_tasks must lie in [1,6]");
    if (f_grid < 2 || p_grid < 2) throw config_error("oracle: grids must be >= 2");
  }
};

struct PlanStep {
  int task_id = 0;
  int k = 0;
  int grid_index = 0;
  double param = 0.0;  // unit interval grid point
};

struct Plan {
  std::vector<PlanStep> steps;
  double total_cost = std::numeric_limits<double>::infinity();
  std::vector<env::PlanStepRecord> records;
  double search_size = 0.0;  // enumeration upper bound N! 2^N grid^N
};

inline double search_size_bound(int n, int grid) {
  double s = 1.0;
  for (int i = 2; i <= n; ++i) s *= i;
  return s * std::pow(2.0, n) * std::pow(static_cast<double>(grid), n);
}

inline double grid_point(int g, int grid) {
  return static_cast<double>(g) / static_cast<double>(grid - 1);
}

inline int snap_to_grid(double param, int grid) {
  const int g = static_cast<int>(std::lround(std::clamp(param, 0.0, 1.0) * (grid - 1)));
  return std::clamp(g, 0, grid - 1);
}

// Deterministic replay of a fixed plan on a fresh single-application
// environment (clock and position start at zero, fading off).
inline std::vector<env::PlanStepRecord> replay_plan(const graph::TaskDag& dag,
                                                    const env::EnvConfig& cfg,
                                                    const env::VehicleTrace& trace,
                                                    const std::vector<PlanStep>& steps) {
  env::EnvConfig c = cfg.normalized();
  c.fading_enabled = false;
  env::Environment e(c, trace, [&dag]() { return dag; }, 1);
  std::vector<env::PlanStepRecord> records;
  for (const auto& st : steps) {
    env::HybridAction a{st.task_id, st.k, st.param};
    const env::StepOutcome out = e.step(a);
    env::PlanStepRecord r;
    r.task_id = st.task_id;
    r.k = st.k;
    r.param = st.k == 0 ? env::decode_frequency(c, st.param) : env::decode_power(c, st.param);
    r.time_s = out.time_s;
    r.energy_j = out.energy_j;
    r.charge_usd = out.charge_usd;
    r.migrated = out.migrated;
    r.reward = out.reward;
    records.push_back(r);
  }
  return records;
}

// Exhaustive minimum over execution orders x offload bits x grid points.
// Branches are explored with tasks ascending, k = 0 before 1 and grid points
// ascending, so the first plan reaching the minimum is the lexicographically
// smallest encoding. Partial costs only grow, which makes pruning safe and
// keeps that tie-break intact.
inline Plan enumerate_optimal(const graph::TaskDag& dag, const env::EnvConfig& cfg,
                              const env::VehicleTrace& trace, const OracleConfig& ocfg) {
  ocfg.validate();
  const int n = dag.size();
  const double bound = search_size_bound(n, std::max(ocfg.f_grid, ocfg.p_grid));
  if (n > ocfg.max_tasks)
    throw config_error("oracle: " + std::to_string(n) + " tasks exceed max_tasks=" +
                       std::to_string(ocfg.max_tasks) + " (search size would be ~" +
                       std::to_string(bound) + ")");

  env::EnvConfig c = cfg.normalized();
  c.fading_enabled = false;
  Plan best;
  best.search_size = bound;
  std::vector<PlanStep> prefix;
  env::Environment root(c, trace, [&dag]() { return dag; }, 1);

  std::function<void(const env::Environment&, double)> dfs =
      [&](const env::Environment& e, double cost) {
        if (e.episode_done()) {
          if (cost < best.total_cost) {
            best.total_cost = cost;
            best.steps = prefix;
          }
          return;
        }
        const auto ready = e.ready_tasks();
        for (int y : ready) {
          for (int k = 0; k < 2; ++k) {
            const int grid = k == 0 ? ocfg.f_grid : ocfg.p_grid;
            for (int g = 0; g < grid; ++g) {
              const double param = grid_point(g, grid);
              env::Environment child = e;
              const env::StepOutcome out = child.step({y, k, param});
              const double cost2 = cost - out.reward;
              if (cost2 >= best.total_cost) continue;
              prefix.push_back({y, k, g, param});
              dfs(child, cost2);
              prefix.pop_back();
            }
          }
        }
      };
  dfs(root, 0.0);
  best.records = replay_plan(dag, c, trace, best.steps);
  return best;
}

// ---------------------------------------------------------------------------
// Independent evaluation: the whole cost chain rewritten straight-line, no
// envsim helpers, used to cross-check the simulator.
// ---------------------------------------------------------------------------

inline std::vector<env::PlanStepRecord> independent_eval(const graph::TaskDag& dag,
                                                         const env::EnvConfig& cfg_in,
                                                         const env::VehicleTrace& trace,
                                                         const std::vector<PlanStep>& steps) {
  const double bsum = cfg_in.beta1 + cfg_in.beta2 + cfg_in.beta3;
  const double b1 = cfg_in.beta1 / bsum, b2 = cfg_in.beta2 / bsum, b3 = cfg_in.beta3 / bsum;

  // speed integral over [a, b): first partial slot, whole slots, last partial
  const auto& v = trace.speeds_mps;
  const auto speed = [&](long s) {
    long m = s % static_cast<long>(v.size());
    if (m < 0) m += static_cast<long>(v.size());
    return v[static_cast<std::size_t>(m)];
  };
  const auto integrate = [&](double a, double b) {
    if (b <= a) return 0.0;
    const long sa = static_cast<long>(std::floor(a));
    const long sb = static_cast<long>(std::floor(b));
    if (sa == sb) return speed(sa) * (b - a);
    double d = speed(sa) * (static_cast<double>(sa + 1) - a);
    for (long s = sa + 1; s < sb; ++s) d += speed(s);
    d += speed(sb) * (b - static_cast<double>(sb));
    return d;
  };

  const double lam = 3.0e8 / (4.0 * std::numbers::pi * cfg_in.carrier_hz * cfg_in.channel_dist_m);
  const double h = std::pow(lam, cfg_in.path_loss_exp);

  std::vector<env::PlanStepRecord> records;
  std::vector<std::uint8_t> done(static_cast<std::size_t>(dag.size()), 0);
  double clock = 0.0;
  for (const auto& st : steps) {
    for (int p : dag.predecessors(st.task_id))
      if (!done[static_cast<std::size_t>(p)])
        throw invalid_action_error("independent_eval: precedence violated");
    if (done[static_cast<std::size_t>(st.task_id)])
      throw invalid_action_error("independent_eval: task repeated");
    const auto& task = dag.task(st.task_id);

    env::PlanStepRecord r;
    r.task_id = st.task_id;
    r.k = st.k;
    if (st.k == 0) {
      const double f_lo = cfg_in.f_min_frac * cfg_in.f_local_max_hz;
      const double f = f_lo + st.param * (cfg_in.f_local_max_hz - f_lo);
      r.param = f;
      r.time_s = task.cycles / f;
      r.energy_j = cfg_in.kappa * task.cycles * f * f;
      r.charge_usd = 0.0;
      r.migrated = false;
    } else {
      const double p_lo = cfg_in.p_min_frac * cfg_in.p_max_w;
      const double p = p_lo + st.param * (cfg_in.p_max_w - p_lo);
      r.param = p;
      const double r_up =
          cfg_in.bandwidth_hz * std::log2(1.0 + p * cfg_in.antenna_gain * h / cfg_in.noise_w);
      const double r_down = cfg_in.bandwidth_hz *
                            std::log2(1.0 + cfg_in.p_down_w * cfg_in.antenna_gain * h / cfg_in.noise_w);
      const double t_up = task.input_bits / r_up;
      const double t_edge = task.cycles / cfg_in.f_edge_hz;
      const double t_down = task.output_bits / r_down;
      const double tau = t_up + t_edge + t_down;
      const double pos = integrate(0.0, clock);
      const double offset = pos - cfg_in.rsu_coverage_m * std::floor(pos / cfg_in.rsu_coverage_m);
      const bool migrated = offset + integrate(clock, clock + tau) >= cfg_in.rsu_coverage_m;
      r.migrated = migrated;
      r.time_s = tau + (migrated ? cfg_in.t_prop_s : 0.0);
      r.energy_j = p * t_up;
      const double mcycles = task.cycles / 1.0e6;
      r.charge_usd = mcycles * cfg_in.price_compute + (migrated ? mcycles * cfg_in.price_migration : 0.0);
    }
    r.reward = -(b1 * r.time_s + b2 * r.energy_j + b3 * r.charge_usd);
    clock += r.time_s;
    done[static_cast<std::size_t>(st.task_id)] = 1;
    records.push_back(r);
  }
  return records;
}

struct ValidationReport {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string detail;
};

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-30});
  return std::fabs(a - b) / scale;
}

inline ValidationReport compare_records(const std::vector<env::PlanStepRecord>& sim,
                                        const std::vector<env::PlanStepRecord>& ref,
                                        const env::EnvConfig& cfg, double tol = 1e-9) {
  ValidationReport rep;
  if (sim.size() != ref.size()) {
    rep.ok = false;
    rep.detail = "record count mismatch";
    rep.max_rel_err = std::numeric_limits<double>::infinity();
    return rep;
  }
  const env::EnvConfig c = cfg.normalized();
  auto check = [&](double a, double b, const std::string& what) {
    const double e = rel_err(a, b);
    if (e > rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.detail = what;
    }
  };
  for (std::size_t i = 0; i < sim.size(); ++i) {
    const std::string tag = "step " + std::to_string(i) + " ";
    if (sim[i].migrated != ref[i].migrated) {
      rep.ok = false;
      rep.detail = tag + "migration flag mismatch";
      rep.max_rel_err = std::numeric_limits<double>::infinity();
      return rep;
    }
    check(sim[i].time_s, ref[i].time_s, tag + "time");
    check(sim[i].energy_j, ref[i].energy_j, tag + "energy");
    check(sim[i].charge_usd, ref[i].charge_usd, tag + "charge");
  }
  check(env::total_cost(sim, c), env::total_cost(ref, c), "total cost");
  rep.ok = rep.max_rel_err <= tol;
  return rep;
}

// Replays the plan through the simulator and through the straight-line
// evaluation above; the two must agree to 1e-9 relative.
inline ValidationReport validate_env(const graph::TaskDag& dag, const env::EnvConfig& cfg,
                                     const env::VehicleTrace& trace,
                                     const std::vector<PlanStep>& steps, double tol = 1e-9) {
  return compare_records(replay_plan(dag, cfg, trace, steps),
                         independent_eval(dag, cfg.normalized(), trace, steps), cfg, tol);
}

}  // namespace dhvo::oracle
