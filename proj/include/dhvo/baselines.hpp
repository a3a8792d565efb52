#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/nncore.hpp"
#include "dhvo/trainer.hpp"

namespace dhvo::baselines {

using env::HybridAction;
using pnaf::ActionMask;
using train::StateSnapshot;

enum class PolicyKind { ALE, AO, GOE, GDQN, PNAF_FLAT, DHVO };

inline PolicyKind parse_policy_kind(const std::string& name, int* gdqn_grid = nullptr) {
  if (name == "ALE") return PolicyKind::ALE;
  if (name == "AO") return PolicyKind::AO;
  if (name == "GOE") return PolicyKind::GOE;
  if (name == "DHVO") return PolicyKind::DHVO;
  if (name == "PNAF" || name == "PNAF_FLAT") return PolicyKind::PNAF_FLAT;
  if (name.rfind("GDQN", 0) == 0 && name.size() > 4) {
    const int x = std::stoi(name.substr(4));
    if (x < 2) throw config_error("GDQN grid size must be >= 2");
    if (gdqn_grid) *gdqn_grid = x;
    return PolicyKind::GDQN;
  }
  throw config_error("unknown policy '" + name + "'");
}

inline int lowest_ready(const StateSnapshot& s) {
  for (int y = 0; y < s.mask.n_max; ++y)
    if (s.mask.valid[static_cast<std::size_t>(ActionMask::index(y, 0))]) return y;
  throw invalid_action_error("baseline policy: no ready task");
}

// All tasks local at peak CPU frequency.
inline HybridAction ale_policy(const StateSnapshot& s) {
  return HybridAction{lowest_ready(s), 0, 1.0};
}

// All tasks offloaded at peak transmit power.
inline HybridAction ao_policy(const StateSnapshot& s) {
  return HybridAction{lowest_ready(s), 1, 1.0};
}

// Offload at peak power when a constant-30km/h forecast predicts the result
// returns within the current RSU's coverage; otherwise local at peak
// frequency. The forecast uses the nominal (no-fading) channel and ignores
// the migration penalty in its own duration estimate.
inline HybridAction goe_policy(const env::EnvConfig& cfg, double position_m,
                               const graph::TaskSpec& task, int y) {
  const double g = env::channel_gain(cfg);
  const double tau_hat = task.input_bits / env::uplink_rate(cfg, cfg.p_max_w, g) +
                         task.cycles / cfg.f_edge_hz +
                         task.output_bits / env::downlink_rate(cfg, g);
  const double offset = std::fmod(position_m, cfg.rsu_coverage_m);
  const double forecast_speed = 30.0 / 3.6;  // 30 km/h
  if (offset + forecast_speed * tau_hat < cfg.rsu_coverage_m)
    return HybridAction{y, 1, 1.0};
  return HybridAction{y, 0, 1.0};
}

inline train::RolloutPolicy make_analytic_policy(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::ALE:
      return [](const env::Environment&, const StateSnapshot& s) { return ale_policy(s); };
    case PolicyKind::AO:
      return [](const env::Environment&, const StateSnapshot& s) { return ao_policy(s); };
    case PolicyKind::GOE:
      return [](const env::Environment& e, const StateSnapshot& s) {
        const int y = lowest_ready(s);
        return goe_policy(e.config(), e.state().position_m, e.state().dag.task(y), y);
      };
    default:
      throw config_error("not an analytic policy");
  }
}

// ---------------------------------------------------------------------------
// GDQN-X: GAT encoder + plain DQN over the grid-discretized action space.
// Discrete index layout: (2*y + k) * grid + g, param(g) = g/(grid-1).
// ---------------------------------------------------------------------------

class DqnHead {
 public:
  struct Forward {
    nn::Matrix enc, hidden_pre, hidden, q;
  };

  DqnHead(int n_max, int enc_width, int grid, int hidden = 128)
      : n_max_(n_max), grid_(grid),
        hidden_w_("dqn.hidden.W", enc_width, hidden), hidden_b_("dqn.hidden.b", 1, hidden),
        q_w_("dqn.Q.W", hidden, 2 * n_max * grid), q_b_("dqn.Q.b", 1, 2 * n_max * grid) {
    if (grid < 2) throw config_error("dqn: grid must be >= 2");
  }

  int grid() const { return grid_; }
  double grid_param(int g) const {
    return static_cast<double>(g) / static_cast<double>(grid_ - 1);
  }
  int grid_index_of(double param) const {
    const int g = static_cast<int>(std::lround(param * (grid_ - 1)));
    return std::clamp(g, 0, grid_ - 1);
  }
  int flat_index(int y, int k, int g) const { return ActionMask::index(y, k) * grid_ + g; }

  Forward forward(const std::vector<double>& enc) const {
    Forward f;
    f.enc = nn::Matrix(1, static_cast<int>(enc.size()));
    f.enc.data = enc;
    f.hidden_pre = nn::affine_forward(f.enc, hidden_w_, hidden_b_);
    f.hidden = nn::relu(f.hidden_pre);
    f.q = nn::affine_forward(f.hidden, q_w_, q_b_);
    return f;
  }

  double q_taken(const Forward& f, const HybridAction& a) const {
    return f.q.data[static_cast<std::size_t>(flat_index(a.y, a.k, grid_index_of(a.param)))];
  }

  // Max Q over valid (y,k) pairs and all their grid points; 0 when terminal.
  double max_target(const Forward& f, const ActionMask& mask) const {
    bool any = false;
    double best = 0.0;
    for (int idx = 0; idx < mask.size(); ++idx) {
      if (!mask.valid[static_cast<std::size_t>(idx)]) continue;
      for (int g = 0; g < grid_; ++g) {
        const double q = f.q.data[static_cast<std::size_t>(idx * grid_ + g)];
        if (!any || q > best) {
          best = q;
          any = true;
        }
      }
    }
    return any ? best : 0.0;
  }

  std::vector<double> backward_taken(const Forward& f, const HybridAction& a, double grad_q) {
    nn::Matrix g_q(1, q_w_.value.cols);
    g_q.data[static_cast<std::size_t>(flat_index(a.y, a.k, grid_index_of(a.param)))] = grad_q;
    nn::Matrix g_hidden = nn::affine_backward(f.hidden, q_w_, q_b_, g_q);
    nn::Matrix g_hidden_pre = nn::relu_backward(f.hidden_pre, g_hidden);
    nn::Matrix g_enc = nn::affine_backward(f.enc, hidden_w_, hidden_b_, g_hidden_pre);
    return g_enc.data;
  }

  HybridAction select(const Forward& f, const ActionMask& mask, double epsilon, Rng& rng,
                      bool explore) {
    if (mask.valid_count() == 0) throw invalid_action_error("dqn select: empty mask");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double eps = explore ? epsilon : 0.0;
    int chosen = -1;
    if (unit(rng) < eps) {
      std::vector<int> valid;
      for (int idx = 0; idx < mask.size(); ++idx)
        if (mask.valid[static_cast<std::size_t>(idx)])
          for (int g = 0; g < grid_; ++g) valid.push_back(idx * grid_ + g);
      chosen = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    } else {
      double best = 0.0;
      for (int idx = 0; idx < mask.size(); ++idx) {
        if (!mask.valid[static_cast<std::size_t>(idx)]) continue;
        for (int g = 0; g < grid_; ++g) {
          const double q = f.q.data[static_cast<std::size_t>(idx * grid_ + g)];
          if (chosen < 0 || q > best) {
            best = q;
            chosen = idx * grid_ + g;
          }
        }
      }
    }
    const int pair = chosen / grid_;
    HybridAction a;
    a.y = ActionMask::task_of(pair);
    a.k = ActionMask::bit_of(pair);
    a.param = grid_param(chosen % grid_);
    return a;
  }

  void on_episode_start() {}
  void on_episode_end() {}

  void init(Rng& rng) {
    hidden_w_.init_glorot(rng, hidden_w_.value.rows, hidden_w_.value.cols);
    q_w_.init_glorot(rng, q_w_.value.rows, q_w_.value.cols);
  }
  std::vector<nn::ParamBlock*> blocks() { return {&hidden_w_, &hidden_b_, &q_w_, &q_b_}; }
  std::vector<const nn::ParamBlock*> blocks() const {
    return {&hidden_w_, &hidden_b_, &q_w_, &q_b_};
  }
  void copy_values_from(const DqnHead& other) {
    hidden_w_.value = other.hidden_w_.value;
    hidden_b_.value = other.hidden_b_.value;
    q_w_.value = other.q_w_.value;
    q_b_.value = other.q_b_.value;
  }

 private:
  int n_max_;
  int grid_;
  nn::ParamBlock hidden_w_, hidden_b_, q_w_, q_b_;
};

using GdqnAgent = train::Agent<train::GatEncoder, DqnHead>;
using PnafFlatAgent = train::Agent<train::FlatEncoder, train::PnafHead>;

inline GdqnAgent make_gdqn_agent(int n_max, int grid, gatenc::GatConfig gcfg = {},
                                 int hidden = 128) {
  train::GatEncoder enc(gcfg, n_max);
  const int width = enc.width();
  return GdqnAgent(std::move(enc), DqnHead(n_max, width, grid, hidden));
}

inline PnafFlatAgent make_pnaf_flat_agent(int n_max, const train::TrainConfig& tcfg,
                                          int hidden = 128) {
  train::FlatEncoder enc(n_max);
  pnaf::PnafConfig pcfg;
  pcfg.n_max = n_max;
  pcfg.enc_width = enc.width();
  pcfg.hidden = hidden;
  return PnafFlatAgent(std::move(enc), train::PnafHead(pcfg, tcfg));
}

}  // namespace dhvo::baselines
