#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/taskgraph.hpp"

namespace dhvo::env {

inline constexpr double kBitsPerMByte = 8.0e6;
inline constexpr double kCyclesPerMcycle = 1.0e6;

// Physical, pricing and featurization parameters of the V2I setting.
struct EnvConfig {
  double rsu_coverage_m = 200.0;  // inter-site distance L
  double slot_s = 1.0;            // speed-sampling slot
  double bandwidth_hz = 2.0e6;
  double f_local_max_hz = 1.0e8;
  double f_edge_hz = 1.0e9;
  double p_max_w = 200e-3;
  double p_down_w = 200e-3;       // RSU transmit power (symmetric default)
  double kappa = 1e-25;
  double antenna_gain = 4.11;
  double channel_dist_m = 100.0;  // fixed UE<->RSU distance used by the channel
  double t_prop_s = 5.0;          // migration propagation delay
  double carrier_hz = 915e6;
  double path_loss_exp = 3.0;
  double noise_w = 1e-12;
  double price_compute = 0.1;     // $/Mcycle for edge execution
  double price_migration = 2.0;   // $/Mcycle on migration
  double beta1 = 0.33;
  double beta2 = 0.33;
  double beta3 = 0.33;
  bool fading_enabled = false;
  double f_min_frac = 0.05;       // lower clamp, fraction of f_local_max_hz
  double p_min_frac = 0.05;       // lower clamp, fraction of p_max_w

  // Feature normalization constants (kept explicit so observations are
  // reproducible from config alone).
  double norm_input_bits = 2.8e7;
  double norm_output_bits = 2.8e7;
  double norm_cycles = 1.2e9;
  double norm_speed_mps = 40.0;

  void validate() const {
    auto pos = [](double v, const char* name) {
      if (!(v > 0.0)) throw config_error(std::string("env: ") + name + " must be > 0");
    };
    pos(rsu_coverage_m, "rsu_coverage_m");
    pos(slot_s, "slot_s");
    pos(bandwidth_hz, "bandwidth_hz");
    pos(f_local_max_hz, "f_local_max_hz");
    pos(f_edge_hz, "f_edge_hz");
    pos(p_max_w, "p_max_w");
    pos(p_down_w, "p_down_w");
    pos(kappa, "kappa");
    pos(antenna_gain, "antenna_gain");
    pos(channel_dist_m, "channel_dist_m");
    pos(t_prop_s, "t_prop_s");
    pos(carrier_hz, "carrier_hz");
    pos(noise_w, "noise_w");
    if (path_loss_exp < 0.0) throw config_error("env: path_loss_exp must be >= 0");
    if (price_compute < 0.0 || price_migration < 0.0)
      throw config_error("env: prices must be >= 0");
    if (!(beta1 >= 0.0 && beta2 >= 0.0 && beta3 >= 0.0) || !(beta1 + beta2 + beta3 > 0.0))
      throw config_error("env: betas must be nonnegative with positive sum");
    if (!(f_min_frac > 0.0 && f_min_frac < 1.0) || !(p_min_frac > 0.0 && p_min_frac < 1.0))
      throw config_error("env: clamp fractions must lie in (0,1)");
    pos(norm_input_bits, "norm_input_bits");
    pos(norm_output_bits, "norm_output_bits");
    pos(norm_cycles, "norm_cycles");
    pos(norm_speed_mps, "norm_speed_mps");
  }

  // Validated copy with the beta weights normalized to sum 1.
  EnvConfig normalized() const {
    validate();
    EnvConfig c = *this;
    const double s = beta1 + beta2 + beta3;
    c.beta1 = beta1 / s;
    c.beta2 = beta2 / s;
    c.beta3 = beta3 / s;
    return c;
  }

  double f_min_hz() const { return f_min_frac * f_local_max_hz; }
  double p_min_w() const { return p_min_frac * p_max_w; }
};

// The decision produced each epoch: which ready task, local (k=0) or edge
// (k=1), and one continuous knob in [0,1] that decodes to a CPU frequency
// (k=0) or a transmit power (k=1).
struct HybridAction {
  int y = 0;
  int k = 0;
  double param = 0.0;
};

// Affine decode of the unit parameter onto the clamped physical ranges.
inline double decode_frequency(const EnvConfig& cfg, double param) {
  const double p = std::clamp(param, 0.0, 1.0);
  return cfg.f_min_hz() + p * (cfg.f_local_max_hz - cfg.f_min_hz());
}
inline double decode_power(const EnvConfig& cfg, double param) {
  const double p = std::clamp(param, 0.0, 1.0);
  return cfg.p_min_w() + p * (cfg.p_max_w - cfg.p_min_w());
}

// -------------------------------------------------------------------------
// Vehicle trace
// -------------------------------------------------------------------------

// Per-second speed samples; loops cyclically when an episode outlives it.
struct VehicleTrace {
  std::vector<double> speeds_mps;

  void validate() const {
    if (speeds_mps.empty()) throw config_error("trace: empty");
    for (double v : speeds_mps)
      if (!(v >= 0.0)) throw config_error("trace: negative speed sample");
  }

  double speed_at_slot(long slot) const {
    const long n = static_cast<long>(speeds_mps.size());
    long m = slot % n;
    if (m < 0) m += n;
    return speeds_mps[static_cast<std::size_t>(m)];
  }
};

// Integral of the piecewise-constant (1 s slots) speed over [t0, t1].
inline double trace_distance(const VehicleTrace& trace, double t0, double t1) {
  if (t1 <= t0) return 0.0;
  double dist = 0.0;
  long slot = static_cast<long>(std::floor(t0));
  double t = t0;
  while (t < t1) {
    const double slot_end = static_cast<double>(slot + 1);
    const double seg_end = std::min(slot_end, t1);
    dist += trace.speed_at_slot(slot) * (seg_end - t);
    t = seg_end;
    ++slot;
  }
  return dist;
}

// CSV lines `t_s,speed_mps`, integer seconds from 0, no header.
inline VehicleTrace parse_trace(std::istream& is) {
  VehicleTrace trace;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long t = 0;
    double v = 0.0;
    char comma = 0;
    if (!(ls >> t >> comma >> v) || comma != ',')
      throw config_error("trace: parse error at line " + std::to_string(lineno));
    if (t != static_cast<long>(trace.speeds_mps.size()))
      throw config_error("trace: non-contiguous second index at line " + std::to_string(lineno));
    trace.speeds_mps.push_back(v);
  }
  trace.validate();
  return trace;
}

inline VehicleTrace load_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("trace: cannot open " + path);
  return parse_trace(is);
}

inline void write_trace(std::ostream& os, const VehicleTrace& trace) {
  os.precision(17);
  for (std::size_t t = 0; t < trace.speeds_mps.size(); ++t)
    os << t << ',' << trace.speeds_mps[t] << '\n';
}

// Bounded mean-reverting random walk, a stand-in for recorded city traffic.
inline VehicleTrace synth_trace(std::uint64_t seed, int len_s, double v_min, double v_max) {
  if (len_s < 1) throw config_error("trace: len_s must be >= 1");
  if (v_min < 0.0 || v_min > v_max) throw config_error("trace: need 0 <= v_min <= v_max");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double mid = 0.5 * (v_min + v_max);
  const double span = v_max - v_min;
  VehicleTrace trace;
  trace.speeds_mps.resize(static_cast<std::size_t>(len_s));
  double v = v_min + unit(rng) * span;
  for (int t = 0; t < len_s; ++t) {
    trace.speeds_mps[static_cast<std::size_t>(t)] = v;
    v += 0.25 * (mid - v) + 0.15 * span * gauss(rng);
    v = std::clamp(v, v_min, v_max);
  }
  return trace;
}

// -------------------------------------------------------------------------
// Wireless channel and per-task costs
// -------------------------------------------------------------------------

// Path-loss gain (c / (4 pi F_c d))^PL at the fixed link distance, optionally
// multiplied by a small-scale fading power draw.
inline double channel_gain(const EnvConfig& cfg, std::optional<double> fading_draw = {}) {
  const double wavelength_term =
      3.0e8 / (4.0 * std::numbers::pi * cfg.carrier_hz * cfg.channel_dist_m);
  double gain = std::pow(wavelength_term, cfg.path_loss_exp);
  if (fading_draw) gain *= *fading_draw;
  return gain;
}

// Shannon uplink rate in bits/s at transmit power p_w.
inline double uplink_rate(const EnvConfig& cfg, double p_w, double gain) {
  return cfg.bandwidth_hz * std::log2(1.0 + p_w * cfg.antenna_gain * gain / cfg.noise_w);
}

inline double downlink_rate(const EnvConfig& cfg, double gain) {
  return uplink_rate(cfg, cfg.p_down_w, gain);
}

struct LocalCost {
  double time_s = 0.0;
  double energy_j = 0.0;
};

inline LocalCost local_cost(const EnvConfig& cfg, const graph::TaskSpec& task, double f_hz) {
  const double f = std::clamp(f_hz, cfg.f_min_hz(), cfg.f_local_max_hz);
  return {task.cycles / f, cfg.kappa * task.cycles * f * f};
}

struct OffloadCost {
  double time_s = 0.0;
  double energy_j = 0.0;
  double charge_usd = 0.0;
  bool migrated = false;
  double uplink_s = 0.0;
  double edge_s = 0.0;
  double downlink_s = 0.0;
};

// Offload phases: uplink, edge execution, downlink. Migration triggers when
// the vehicle's within-coverage offset plus the displacement over the
// pre-penalty duration reaches the coverage length; the propagation penalty
// is added only after that test to break the circular definition.
inline OffloadCost offload_cost(const EnvConfig& cfg, const graph::TaskSpec& task, double p_w,
                                double position_m, double clock_s, const VehicleTrace& trace,
                                double uplink_gain, double downlink_gain) {
  OffloadCost out;
  const double p = std::clamp(p_w, cfg.p_min_w(), cfg.p_max_w);
  const double r_u = uplink_rate(cfg, p, uplink_gain);
  const double r_d = downlink_rate(cfg, downlink_gain);
  out.uplink_s = task.input_bits / r_u;
  out.edge_s = task.cycles / cfg.f_edge_hz;
  out.downlink_s = task.output_bits / r_d;
  const double tau = out.uplink_s + out.edge_s + out.downlink_s;
  const double offset = std::fmod(position_m, cfg.rsu_coverage_m);
  const double displacement = trace_distance(trace, clock_s, clock_s + tau);
  out.migrated = offset + displacement >= cfg.rsu_coverage_m;
  out.time_s = tau + (out.migrated ? cfg.t_prop_s : 0.0);
  out.energy_j = p * out.uplink_s;
  const double mcycles = task.cycles / kCyclesPerMcycle;
  out.charge_usd = mcycles * cfg.price_compute +
                   (out.migrated ? mcycles * cfg.price_migration : 0.0);
  return out;
}

inline OffloadCost offload_cost(const EnvConfig& cfg, const graph::TaskSpec& task, double p_w,
                                double position_m, double clock_s, const VehicleTrace& trace) {
  const double g = channel_gain(cfg);
  return offload_cost(cfg, task, p_w, position_m, clock_s, trace, g, g);
}

// -------------------------------------------------------------------------
// Simulation state, observation, stepping
// -------------------------------------------------------------------------

inline constexpr int kSpeedWindow = 5;

struct EnvState {
  double clock_s = 0.0;
  double position_m = 0.0;
  graph::TaskDag dag;
  std::vector<std::uint8_t> done;
  std::array<double, kSpeedWindow> speed_window{};
  int apps_completed = 0;
};

struct StepOutcome {
  double time_s = 0.0;
  double energy_j = 0.0;
  double charge_usd = 0.0;
  bool migrated = false;
  double reward = 0.0;
  bool app_done = false;
  bool episode_done = false;
};

// Row layout: DI, DO, C, E_i, CO, n, v[0..4]; padding rows stay all-zero and
// are flagged invalid.
struct FeatureMatrix {
  static constexpr int kWidth = 3 + 1 + 1 + 1 + kSpeedWindow;  // 11
  int n = 0;      // real rows
  int n_max = 0;  // padded rows
  std::vector<double> values;     // n_max x kWidth, row-major
  std::vector<std::uint8_t> valid;

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * kWidth + col];
  }
};

inline FeatureMatrix observe(const EnvState& state, const EnvConfig& cfg, int n_max) {
  const int n = state.dag.size();
  if (n > n_max)
    throw config_error("observe: dag size " + std::to_string(n) + " exceeds padding width " +
                       std::to_string(n_max));
  FeatureMatrix fm;
  fm.n = n;
  fm.n_max = n_max;
  fm.values.assign(static_cast<std::size_t>(n_max) * FeatureMatrix::kWidth, 0.0);
  fm.valid.assign(static_cast<std::size_t>(n_max), 0);
  int remaining = 0;
  for (int i = 0; i < n; ++i)
    if (!state.done[i]) ++remaining;
  const double co = std::fmod(state.position_m, cfg.rsu_coverage_m) / cfg.rsu_coverage_m;
  for (int i = 0; i < n; ++i) {
    double* row = &fm.values[static_cast<std::size_t>(i) * FeatureMatrix::kWidth];
    const auto& t = state.dag.task(i);
    row[0] = t.input_bits / cfg.norm_input_bits;
    row[1] = t.output_bits / cfg.norm_output_bits;
    row[2] = t.cycles / cfg.norm_cycles;
    row[3] = state.done[i] ? 1.0 : 0.0;
    row[4] = co;
    row[5] = static_cast<double>(remaining) / static_cast<double>(n);
    for (int s = 0; s < kSpeedWindow; ++s)
      row[6 + s] = state.speed_window[static_cast<std::size_t>(s)] / cfg.norm_speed_mps;
    fm.valid[static_cast<std::size_t>(i)] = 1;
  }
  return fm;
}

// One executed decision epoch, exportable as a CSV row.
struct PlanStepRecord {
  int task_id = 0;
  int k = 0;
  double param = 0.0;  // decoded physical value (f in Hz or p in W)
  double time_s = 0.0;
  double energy_j = 0.0;
  double charge_usd = 0.0;
  bool migrated = false;
  double reward = 0.0;
};

// U = sum(beta1 t + beta2 e + beta3 c), the objective the learner minimizes.
inline double total_cost(const std::vector<PlanStepRecord>& records, const EnvConfig& cfg) {
  double u = 0.0;
  for (const auto& r : records)
    u += cfg.beta1 * r.time_s + cfg.beta2 * r.energy_j + cfg.beta3 * r.charge_usd;
  return u;
}

inline void write_plan_csv(std::ostream& os, const std::vector<PlanStepRecord>& records) {
  os << "task_id,k,param,t,e,c,migrated,reward\n";
  os.precision(17);
  for (const auto& r : records)
    os << r.task_id << ',' << r.k << ',' << r.param << ',' << r.time_s << ',' << r.energy_j
       << ',' << r.charge_usd << ',' << (r.migrated ? 1 : 0) << ',' << r.reward << '\n';
}

// Mutable single-vehicle environment: one episode executes a fixed number of
// applications back-to-back on a continuing clock, position and speed trace.
// A fresh DAG is pulled from `dag_source` each time an application finishes.
class Environment {
 public:
  using DagSource = std::function<graph::TaskDag()>;

  Environment(EnvConfig cfg, VehicleTrace trace, DagSource dag_source, int apps_per_episode,
              std::uint64_t fading_seed = 0)
      : cfg_(cfg.normalized()), trace_(std::move(trace)), dag_source_(std::move(dag_source)),
        apps_per_episode_(apps_per_episode), fading_rng_(fading_seed) {
    trace_.validate();
    if (apps_per_episode_ < 1) throw config_error("env: apps_per_episode must be >= 1");
    if (!dag_source_) throw config_error("env: dag_source required");
    state_.dag = dag_source_();
    state_.done.assign(static_cast<std::size_t>(state_.dag.size()), 0);
    update_speed_window();
  }

  const EnvConfig& config() const { return cfg_; }
  const VehicleTrace& trace() const { return trace_; }
  const EnvState& state() const { return state_; }
  bool episode_done() const { return state_.apps_completed >= apps_per_episode_; }

  std::vector<int> ready_tasks() const { return state_.dag.ready_set(state_.done); }

  FeatureMatrix observe(int n_max) const { return env::observe(state_, cfg_, n_max); }

  // Executes one hybrid action. The caller must pick a ready task; the
  // environment never repairs an invalid choice.
  StepOutcome step(const HybridAction& action) {
    if (episode_done()) throw invalid_action_error("step: episode already finished");
    const int n = state_.dag.size();
    if (action.y < 0 || action.y >= n)
      throw invalid_action_error("step: task id out of range");
    if (state_.done[static_cast<std::size_t>(action.y)])
      throw invalid_action_error("step: task already executed");
    for (int p : state_.dag.predecessors(action.y))
      if (!state_.done[static_cast<std::size_t>(p)])
        throw invalid_action_error("step: predecessors incomplete");
    if (action.k != 0 && action.k != 1) throw invalid_action_error("step: k must be 0 or 1");

    const auto& task = state_.dag.task(action.y);
    StepOutcome out;
    if (action.k == 0) {
      const double f = decode_frequency(cfg_, action.param);
      const LocalCost lc = local_cost(cfg_, task, f);
      out.time_s = lc.time_s;
      out.energy_j = lc.energy_j;
      out.charge_usd = 0.0;
      out.migrated = false;
    } else {
      const double p = decode_power(cfg_, action.param);
      double g_up = channel_gain(cfg_);
      double g_down = g_up;
      if (cfg_.fading_enabled) {
        std::exponential_distribution<double> fade(1.0);
        g_up = channel_gain(cfg_, fade(fading_rng_));
        g_down = channel_gain(cfg_, fade(fading_rng_));
      }
      const OffloadCost oc = offload_cost(cfg_, task, p, state_.position_m, state_.clock_s,
                                          trace_, g_up, g_down);
      out.time_s = oc.time_s;
      out.energy_j = oc.energy_j;
      out.charge_usd = oc.charge_usd;
      out.migrated = oc.migrated;
    }
    out.reward = -(cfg_.beta1 * out.time_s + cfg_.beta2 * out.energy_j +
                   cfg_.beta3 * out.charge_usd);

    state_.position_m += trace_distance(trace_, state_.clock_s, state_.clock_s + out.time_s);
    state_.clock_s += out.time_s;
    state_.done[static_cast<std::size_t>(action.y)] = 1;
    update_speed_window();

    bool all_done = true;
    for (std::uint8_t d : state_.done)
      if (!d) { all_done = false; break; }
    if (all_done) {
      out.app_done = true;
      state_.apps_completed += 1;
      if (state_.apps_completed < apps_per_episode_) {
        state_.dag = dag_source_();
        state_.done.assign(static_cast<std::size_t>(state_.dag.size()), 0);
      }
    }
    out.episode_done = episode_done();
    return out;
  }

 private:
  // Window of the trace speeds for seconds floor(clock)-4 .. floor(clock),
  // left-padded with zeros before the trace started.
  void update_speed_window() {
    const long now = static_cast<long>(std::floor(state_.clock_s));
    for (int s = 0; s < kSpeedWindow; ++s) {
      const long slot = now - (kSpeedWindow - 1) + s;
      state_.speed_window[static_cast<std::size_t>(s)] =
          slot < 0 ? 0.0 : trace_.speed_at_slot(slot);
    }
  }

  EnvConfig cfg_;
  VehicleTrace trace_;
  DagSource dag_source_;
  int apps_per_episode_;
  Rng fading_rng_;
  EnvState state_;
};

}  // namespace dhvo::env
