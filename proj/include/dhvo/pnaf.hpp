#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/nncore.hpp"
#include "dhvo/taskgraph.hpp"

namespace dhvo::pnaf {

using env::HybridAction;

// Validity of each (task, offload-bit) pair. Index layout: 2*y + k.
struct ActionMask {
  int n_max = 0;
  std::vector<std::uint8_t> valid;

  static int index(int y, int k) { return 2 * y + k; }
  static int task_of(int idx) { return idx / 2; }
  static int bit_of(int idx) { return idx % 2; }

  int size() const { return 2 * n_max; }
  int valid_count() const {
    int c = 0;
    for (auto v : valid) c += v ? 1 : 0;
    return c;
  }
};

inline ActionMask make_action_mask(const graph::TaskDag& dag,
                                   const std::vector<std::uint8_t>& done, int n_max) {
  ActionMask mask;
  mask.n_max = n_max;
  mask.valid.assign(static_cast<std::size_t>(2 * n_max), 0);
  for (int y : dag.ready_set(done)) {
    mask.valid[static_cast<std::size_t>(ActionMask::index(y, 0))] = 1;
    mask.valid[static_cast<std::size_t>(ActionMask::index(y, 1))] = 1;
  }
  return mask;
}

// Ornstein-Uhlenbeck exploration noise, one mean-reverting state per
// discrete action index.
struct OuNoise {
  double theta = 0.15;
  double sigma = 0.2;
  double dt = 1.0;
  std::vector<double> x;

  explicit OuNoise(int n_actions = 0, double theta_ = 0.15, double sigma_ = 0.2, double dt_ = 1.0)
      : theta(theta_), sigma(sigma_), dt(dt_), x(static_cast<std::size_t>(n_actions), 0.0) {}

  void reset() { std::fill(x.begin(), x.end(), 0.0); }

  double sample(int idx, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double& v = x[static_cast<std::size_t>(idx)];
    v += theta * (0.0 - v) * dt + sigma * std::sqrt(dt) * gauss(rng);
    return v;
  }
};

struct PnafConfig {
  int n_max = 12;
  int enc_width = 144;  // encoder output length
  int hidden = 128;
  double l_floor = 1e-6;

  int n_actions() const { return 2 * n_max; }
  void validate() const {
    if (n_max < 1 || enc_width < 1 || hidden < 1) throw config_error("pnaf: bad dimensions");
    if (!(l_floor > 0.0)) throw config_error("pnaf: l_floor must be > 0");
  }
};

// Shared hidden layer plus three heads per discrete action: a state value V,
// a continuous-action mean mu in (0,1) and a positive curvature factor L.
struct PnafParams {
  PnafConfig cfg;
  nn::ParamBlock hidden_w, hidden_b;
  nn::ParamBlock v_w, v_b;
  nn::ParamBlock mu_w, mu_b;
  nn::ParamBlock l_w, l_b;

  explicit PnafParams(PnafConfig c = {})
      : cfg(c),
        hidden_w("pnaf.hidden.W", c.enc_width, c.hidden),
        hidden_b("pnaf.hidden.b", 1, c.hidden),
        v_w("pnaf.V.W", c.hidden, c.n_actions()),
        v_b("pnaf.V.b", 1, c.n_actions()),
        mu_w("pnaf.mu.W", c.hidden, c.n_actions()),
        mu_b("pnaf.mu.b", 1, c.n_actions()),
        l_w("pnaf.L.W", c.hidden, c.n_actions()),
        l_b("pnaf.L.b", 1, c.n_actions()) {
    cfg.validate();
  }

  // V biases start pessimistic: every reward in this setting is negative, so
  // a column that has seen little data should lose the exploitation argmax
  // rather than win it on leftover initialization noise. Exploration is
  // epsilon-uniform and unaffected.
  void init(Rng& rng, double v_bias_init = -60.0, double squash_head_scale = 0.25) {
    hidden_w.init_glorot(rng, cfg.enc_width, cfg.hidden);
    v_w.init_glorot(rng, cfg.hidden, cfg.n_actions());
    mu_w.init_glorot(rng, cfg.hidden, cfg.n_actions());
    l_w.init_glorot(rng, cfg.hidden, cfg.n_actions());
    for (double& w : mu_w.value.data) w *= squash_head_scale;
    for (double& w : l_w.value.data) w *= squash_head_scale;
    v_b.value.fill(v_bias_init);
  }

  std::vector<nn::ParamBlock*> blocks() {
    return {&hidden_w, &hidden_b, &v_w, &v_b, &mu_w, &mu_b, &l_w, &l_b};
  }
  std::vector<const nn::ParamBlock*> blocks() const {
    return {&hidden_w, &hidden_b, &v_w, &v_b, &mu_w, &mu_b, &l_w, &l_b};
  }

  void copy_values_from(const PnafParams& other) {
    hidden_w.value = other.hidden_w.value;
    hidden_b.value = other.hidden_b.value;
    v_w.value = other.v_w.value;
    v_b.value = other.v_b.value;
    mu_w.value = other.mu_w.value;
    mu_b.value = other.mu_b.value;
    l_w.value = other.l_w.value;
    l_b.value = other.l_b.value;
  }
};

struct PnafForward {
  nn::Matrix enc;         // 1 x enc_width
  nn::Matrix hidden_pre;  // 1 x hidden
  nn::Matrix hidden;      // 1 x hidden
  nn::Matrix v;           // 1 x n_actions
  nn::Matrix mu_pre, mu;
  nn::Matrix l_pre, lf;
};

inline PnafForward forward(const std::vector<double>& enc, const PnafParams& params) {
  const PnafConfig& cfg = params.cfg;
  if (static_cast<int>(enc.size()) != cfg.enc_width)
    throw std::invalid_argument("pnaf forward: encoded width mismatch");
  PnafForward f;
  f.enc = nn::Matrix(1, cfg.enc_width);
  f.enc.data = enc;
  f.hidden_pre = nn::affine_forward(f.enc, params.hidden_w, params.hidden_b);
  f.hidden = nn::relu(f.hidden_pre);
  f.v = nn::affine_forward(f.hidden, params.v_w, params.v_b);
  f.mu_pre = nn::affine_forward(f.hidden, params.mu_w, params.mu_b);
  f.l_pre = nn::affine_forward(f.hidden, params.l_w, params.l_b);
  f.mu = f.mu_pre;
  for (double& v : f.mu.data) v = nn::logistic(v);
  f.lf = f.l_pre;
  for (double& v : f.lf.data) v = nn::softplus(v) + cfg.l_floor;
  return f;
}

// A(s, a_d, a_c) = -1/2 L^2 (a_c - mu)^2; maximized (at 0) when a_c = mu.
inline double advantage(double a_param, double mu, double lf) {
  const double d = a_param - mu;
  return -0.5 * lf * lf * d * d;
}

// Q(s, a_d, a_c) = V(s, a_d) + A(s, a_d, a_c); touches only the heads of the
// taken discrete action.
inline double q_value(const PnafForward& f, const HybridAction& a, const ActionMask& mask) {
  const int idx = ActionMask::index(a.y, a.k);
  if (idx < 0 || idx >= mask.size() || !mask.valid[static_cast<std::size_t>(idx)])
    throw invalid_action_error("q_value: masked discrete action");
  return f.v.data[static_cast<std::size_t>(idx)] +
         advantage(a.param, f.mu.data[static_cast<std::size_t>(idx)],
                   f.lf.data[static_cast<std::size_t>(idx)]);
}

// Backpropagates d loss / d Q for the taken action through the three heads
// and the hidden layer; accumulates into params and returns d loss / d enc.
inline std::vector<double> backward_q(const PnafForward& f, const HybridAction& a, double grad_q,
                                      PnafParams& params) {
  const PnafConfig& cfg = params.cfg;
  const int idx = ActionMask::index(a.y, a.k);
  nn::Matrix g_v(1, cfg.n_actions());
  nn::Matrix g_mu_pre(1, cfg.n_actions());
  nn::Matrix g_l_pre(1, cfg.n_actions());

  const double mu = f.mu.data[static_cast<std::size_t>(idx)];
  const double lf = f.lf.data[static_cast<std::size_t>(idx)];
  const double dev = a.param - mu;

  g_v.data[static_cast<std::size_t>(idx)] = grad_q;
  // dA/dmu = L^2 (a_c - mu); dA/dL = -L (a_c - mu)^2
  const double g_mu = grad_q * lf * lf * dev;
  const double g_lf = grad_q * (-lf * dev * dev);
  g_mu_pre.data[static_cast<std::size_t>(idx)] = g_mu * nn::logistic_grad_from_value(mu);
  g_l_pre.data[static_cast<std::size_t>(idx)] =
      g_lf * nn::softplus_grad(f.l_pre.data[static_cast<std::size_t>(idx)]);

  nn::Matrix g_hidden = nn::affine_backward(f.hidden, params.v_w, params.v_b, g_v);
  {
    nn::Matrix g2 = nn::affine_backward(f.hidden, params.mu_w, params.mu_b, g_mu_pre);
    for (std::size_t i = 0; i < g_hidden.data.size(); ++i) g_hidden.data[i] += g2.data[i];
    nn::Matrix g3 = nn::affine_backward(f.hidden, params.l_w, params.l_b, g_l_pre);
    for (std::size_t i = 0; i < g_hidden.data.size(); ++i) g_hidden.data[i] += g3.data[i];
  }
  nn::Matrix g_hidden_pre = nn::relu_backward(f.hidden_pre, g_hidden);
  nn::Matrix g_enc = nn::affine_backward(f.enc, params.hidden_w, params.hidden_b, g_hidden_pre);
  return g_enc.data;
}

// Highest valid state value; 0 when nothing is valid (terminal convention).
inline double max_valid_v(const PnafForward& f, const ActionMask& mask) {
  bool any = false;
  double best = 0.0;
  for (int idx = 0; idx < mask.size(); ++idx) {
    if (!mask.valid[static_cast<std::size_t>(idx)]) continue;
    const double v = f.v.data[static_cast<std::size_t>(idx)];
    if (!any || v > best) {
      best = v;
      any = true;
    }
  }
  return any ? best : 0.0;
}

inline int argmax_valid_v(const PnafForward& f, const ActionMask& mask) {
  int best_idx = -1;
  double best = 0.0;
  for (int idx = 0; idx < mask.size(); ++idx) {
    if (!mask.valid[static_cast<std::size_t>(idx)]) continue;
    const double v = f.v.data[static_cast<std::size_t>(idx)];
    if (best_idx < 0 || v > best) {  // ties keep the lowest index
      best = v;
      best_idx = idx;
    }
  }
  if (best_idx < 0) throw invalid_action_error("argmax_valid_v: empty mask");
  return best_idx;
}

// Epsilon-greedy over valid discrete actions; greedy continuous parameter is
// the head mean plus OU noise, clamped to [0,1]. The OU state advances every
// call so the noise stays temporally correlated.
inline HybridAction select_action(const PnafForward& f, const ActionMask& mask, double epsilon,
                                  OuNoise* noise, Rng& rng) {
  if (mask.valid_count() == 0) throw invalid_action_error("select_action: empty mask");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double roll = unit(rng);

  HybridAction a;
  if (roll < epsilon) {
    std::vector<int> valid;
    for (int idx = 0; idx < mask.size(); ++idx)
      if (mask.valid[static_cast<std::size_t>(idx)]) valid.push_back(idx);
    const int pick =
        valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    a.y = ActionMask::task_of(pick);
    a.k = ActionMask::bit_of(pick);
    a.param = unit(rng);
    if (noise) noise->sample(pick, rng);  // keep the noise stream advancing
  } else {
    const int idx = argmax_valid_v(f, mask);
    a.y = ActionMask::task_of(idx);
    a.k = ActionMask::bit_of(idx);
    double p = f.mu.data[static_cast<std::size_t>(idx)];
    if (noise) p += noise->sample(idx, rng);
    a.param = std::clamp(p, 0.0, 1.0);
  }
  return a;
}

}  // namespace dhvo::pnaf
