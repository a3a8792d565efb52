#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/gatenc.hpp"
#include "dhvo/nncore.hpp"
#include "dhvo/pnaf.hpp"
#include "dhvo/taskgraph.hpp"

namespace dhvo::train {

using env::HybridAction;
using pnaf::ActionMask;

// Everything the learner sees of one decision epoch, frozen for replay.
struct StateSnapshot {
  env::FeatureMatrix features;
  std::vector<std::vector<int>> neighbors;
  ActionMask mask;
};

struct Transition {
  StateSnapshot s;
  HybridAction a;
  double reward = 0.0;
  StateSnapshot s_next;
  bool terminal = false;
};

// Bounded FIFO with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Transition t) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(std::move(t));
  }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    std::vector<const Transition*> out;
    out.reserve(batch);
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(&data_[pick(rng)]);
    return out;
  }

  void clear() { data_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Transition> data_;
};

struct TrainConfig {
  double gamma = 0.99;
  int batch = 256;
  int episodes = 20;
  int apps_per_episode = 20;
  double tau = 0.1;
  double lr_gat = 0.01;
  double lr_pnaf = 0.01;
  int warmup = 500;
  std::size_t replay_capacity = 10000;
  std::uint64_t seed = 0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_anneal_frac = 0.5;  // fraction of estimated total steps
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  double ou_dt = 1.0;
  double ou_sigma_decay = 0.995;
  bool soft_gat_target = false;  // default: hard copy of the encoder target

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw config_error("train: gamma must lie in (0,1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw config_error("train: tau must lie in (0,1]");
    if (batch < 1 || episodes < 0 || apps_per_episode < 1 || warmup < 1)
      throw config_error("train: bad counts");
    if (replay_capacity < static_cast<std::size_t>(batch))
      throw config_error("train: replay capacity below batch size");
    if (!(lr_gat > 0.0) || !(lr_pnaf > 0.0)) throw config_error("train: learning rates must be > 0");
    if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= eps_start))
      throw config_error("train: bad epsilon schedule");
    if (!(eps_anneal_frac > 0.0 && eps_anneal_frac <= 1.0))
      throw config_error("train: eps_anneal_frac must lie in (0,1]");
  }
};

// theta' <- tau theta + (1 - tau) theta'
inline void soft_update(const std::vector<nn::ParamBlock*>& online,
                        const std::vector<nn::ParamBlock*>& target, double tau) {
  for (std::size_t b = 0; b < online.size(); ++b) {
    auto& ov = online[b]->value.data;
    auto& tv = target[b]->value.data;
    for (std::size_t i = 0; i < ov.size(); ++i) tv[i] = tau * ov[i] + (1.0 - tau) * tv[i];
  }
}

inline void hard_update(const std::vector<nn::ParamBlock*>& online,
                        const std::vector<nn::ParamBlock*>& target) {
  for (std::size_t b = 0; b < online.size(); ++b) target[b]->value = online[b]->value;
}

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

// Graph-attention encoder over the padded feature matrix.
class GatEncoder {
 public:
  using Cache = gatenc::GatCache;

  GatEncoder(gatenc::GatConfig cfg, int n_max) : params_(cfg), n_max_(n_max) {}

  int width() const { return n_max_ * params_.cfg.out_width(); }
  int n_max() const { return n_max_; }

  std::vector<double> encode(const StateSnapshot& s, Cache* cache) const {
    return gatenc::encode(s.features, s.neighbors, params_, n_max_, cache);
  }
  void backward(const std::vector<double>& grad_enc, const Cache& cache,
                const StateSnapshot& s) {
    gatenc::encode_backward(grad_enc, cache, s.features, params_);
  }

  void init(Rng& rng) { params_.init(rng); }
  std::vector<nn::ParamBlock*> blocks() { return params_.blocks(); }
  std::vector<const nn::ParamBlock*> blocks() const {
    return static_cast<const gatenc::GatParams&>(params_).blocks();
  }
  void copy_values_from(const GatEncoder& other) { params_.copy_values_from(other.params_); }
  gatenc::GatParams& params() { return params_; }
  const gatenc::GatParams& params() const { return params_; }

 private:
  gatenc::GatParams params_;
  int n_max_;
};

// Identity encoder: the zero-padded feature matrix flattened row-major.
class FlatEncoder {
 public:
  struct Cache {};

  explicit FlatEncoder(int n_max) : n_max_(n_max) {}

  int width() const { return n_max_ * env::FeatureMatrix::kWidth; }
  int n_max() const { return n_max_; }

  std::vector<double> encode(const StateSnapshot& s, Cache*) const {
    if (s.features.n_max != n_max_) throw config_error("flat encoder: padding width mismatch");
    return s.features.values;
  }
  void backward(const std::vector<double>&, const Cache&, const StateSnapshot&) {}

  void init(Rng&) {}
  std::vector<nn::ParamBlock*> blocks() { return {}; }
  std::vector<const nn::ParamBlock*> blocks() const { return {}; }
  void copy_values_from(const FlatEncoder&) {}

 private:
  int n_max_;
};

// ---------------------------------------------------------------------------
// PNAF head adapter
// ---------------------------------------------------------------------------

class PnafHead {
 public:
  using Forward = pnaf::PnafForward;

  PnafHead(pnaf::PnafConfig cfg, const TrainConfig& tcfg)
      : params_(cfg), noise_(cfg.n_actions(), tcfg.ou_theta, tcfg.ou_sigma, tcfg.ou_dt),
        sigma_decay_(tcfg.ou_sigma_decay) {}

  Forward forward(const std::vector<double>& enc) const { return pnaf::forward(enc, params_); }

  double q_taken(const Forward& f, const HybridAction& a) const {
    const int idx = ActionMask::index(a.y, a.k);
    return f.v.data[static_cast<std::size_t>(idx)] +
           pnaf::advantage(a.param, f.mu.data[static_cast<std::size_t>(idx)],
                           f.lf.data[static_cast<std::size_t>(idx)]);
  }

  double max_target(const Forward& f, const ActionMask& mask) const {
    return pnaf::max_valid_v(f, mask);
  }

  std::vector<double> backward_taken(const Forward& f, const HybridAction& a, double grad_q) {
    return pnaf::backward_q(f, a, grad_q, params_);
  }

  HybridAction select(const Forward& f, const ActionMask& mask, double epsilon, Rng& rng,
                      bool explore) {
    return pnaf::select_action(f, mask, explore ? epsilon : 0.0, explore ? &noise_ : nullptr,
                               rng);
  }

  void on_episode_start() { noise_.reset(); }
  void on_episode_end() { noise_.sigma *= sigma_decay_; }

  void init(Rng& rng) { params_.init(rng); }
  std::vector<nn::ParamBlock*> blocks() { return params_.blocks(); }
  std::vector<const nn::ParamBlock*> blocks() const {
    return static_cast<const pnaf::PnafParams&>(params_).blocks();
  }
  void copy_values_from(const PnafHead& other) { params_.copy_values_from(other.params_); }
  pnaf::PnafParams& params() { return params_; }
  const pnaf::PnafParams& params() const { return params_; }
  pnaf::OuNoise& noise() { return noise_; }

 private:
  pnaf::PnafParams params_;
  pnaf::OuNoise noise_;
  double sigma_decay_;
};

// ---------------------------------------------------------------------------
// Agent = encoder + head, each with a target copy
// ---------------------------------------------------------------------------

template <class Encoder, class Head>
struct Agent {
  Encoder encoder;
  Encoder encoder_target;
  Head head;
  Head head_target;

  Agent(Encoder enc, Head hd)
      : encoder(enc), encoder_target(enc), head(hd), head_target(hd) {}

  void init(Rng& rng) {
    encoder.init(rng);
    head.init(rng);
    encoder_target.copy_values_from(encoder);
    head_target.copy_values_from(head);
  }

  HybridAction act(const StateSnapshot& s, double epsilon, Rng& rng, bool explore) {
    typename Encoder::Cache cache;
    const auto enc = encoder.encode(s, &cache);
    const auto fwd = head.forward(enc);
    return head.select(fwd, s.mask, epsilon, rng, explore);
  }

  HybridAction act_greedy(const StateSnapshot& s) {
    Rng dummy(0);
    return act(s, 0.0, dummy, false);
  }

  std::vector<nn::ParamBlock*> all_online_blocks() {
    auto out = encoder.blocks();
    for (auto* b : head.blocks()) out.push_back(b);
    return out;
  }
  std::vector<nn::ParamBlock*> all_target_blocks() {
    auto out = encoder_target.blocks();
    for (auto* b : head_target.blocks()) out.push_back(b);
    return out;
  }
};

using DhvoAgent = Agent<GatEncoder, PnafHead>;

inline DhvoAgent make_dhvo_agent(int n_max, const TrainConfig& tcfg,
                                 gatenc::GatConfig gcfg = {}, int hidden = 128) {
  GatEncoder enc(gcfg, n_max);
  pnaf::PnafConfig pcfg;
  pcfg.n_max = n_max;
  pcfg.enc_width = enc.width();
  pcfg.hidden = hidden;
  return DhvoAgent(std::move(enc), PnafHead(pcfg, tcfg));
}

// ---------------------------------------------------------------------------
// TD pieces (exposed for tests)
// ---------------------------------------------------------------------------

// z_i = r_i + gamma * max over valid discrete actions of the target V; the
// reward alone for terminal transitions. Gradients never flow through here.
template <class Encoder, class Head>
std::vector<double> compute_target(Agent<Encoder, Head>& agent,
                                   const std::vector<const Transition*>& batch, double gamma) {
  std::vector<double> z(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.terminal) {
      z[i] = t.reward;
      continue;
    }
    typename Encoder::Cache cache;
    const auto enc = agent.encoder_target.encode(t.s_next, &cache);
    const auto fwd = agent.head_target.forward(enc);
    z[i] = t.reward + gamma * agent.head_target.max_target(fwd, t.s_next.mask);
  }
  return z;
}

// Mean squared TD error over the batch; accumulates parameter gradients for
// the online encoder and head.
template <class Encoder, class Head>
double loss_and_grads(Agent<Encoder, Head>& agent, const std::vector<const Transition*>& batch,
                      const std::vector<double>& z) {
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    typename Encoder::Cache cache;
    const auto enc = agent.encoder.encode(t.s, &cache);
    const auto fwd = agent.head.forward(enc);
    const double q = agent.head.q_taken(fwd, t.a);
    loss += nn::mse_scalar(q, z[i]) * inv_b;
    const double grad_q = nn::mse_scalar_backward(q, z[i]) * inv_b;
    const auto grad_enc = agent.head.backward_taken(fwd, t.a, grad_q);
    agent.encoder.backward(grad_enc, cache, t.s);
  }
  return loss;
}

// Adam on both parameter groups, then the paper's asymmetric target refresh:
// hard copy for the encoder, tau-soft blend for the head.
template <class Encoder, class Head>
void update(Agent<Encoder, Head>& agent, const TrainConfig& cfg, nn::AdamConfig adam_gat,
            nn::AdamConfig adam_pnaf) {
  nn::adam_step(agent.encoder.blocks(), adam_gat);
  nn::adam_step(agent.head.blocks(), adam_pnaf);
  if (cfg.soft_gat_target)
    soft_update(agent.encoder.blocks(), agent.encoder_target.blocks(), cfg.tau);
  else
    hard_update(agent.encoder.blocks(), agent.encoder_target.blocks());
  soft_update(agent.head.blocks(), agent.head_target.blocks(), cfg.tau);
}

// ---------------------------------------------------------------------------
// Episode environment construction
// ---------------------------------------------------------------------------

// Deterministic recipe for building per-episode environments and per-test
// evaluation fixtures from a master seed.
struct EnvSetup {
  env::EnvConfig env;
  graph::DagGenConfig dag;
  std::vector<env::VehicleTrace> traces;  // cycled; synthesized when empty
  int synth_len_s = 100;
  double synth_v_min = 0.0;
  double synth_v_max = 20.0;

  env::VehicleTrace trace_for(std::uint64_t seed, const char* tag, int index) const {
    if (!traces.empty()) return traces[static_cast<std::size_t>(index) % traces.size()];
    return env::synth_trace(derive_seed(seed, tag, static_cast<std::uint64_t>(index)),
                            synth_len_s, synth_v_min, synth_v_max);
  }

  env::Environment make_episode_env(std::uint64_t seed, int episode, int apps) const {
    auto dag_rng = std::make_shared<Rng>(derive_seed(seed, "dag", static_cast<std::uint64_t>(episode)));
    graph::DagGenConfig dcfg = dag;
    return env::Environment(
        env, trace_for(seed, "trace", episode),
        [dag_rng, dcfg]() { return graph::generate_dag(dcfg, *dag_rng); }, apps,
        derive_seed(seed, "fading", static_cast<std::uint64_t>(episode)));
  }
};

inline StateSnapshot snapshot(const env::Environment& e, int n_max) {
  StateSnapshot s;
  s.features = e.observe(n_max);
  s.neighbors = gatenc::neighbor_lists(e.state().dag);
  s.mask = pnaf::make_action_mask(e.state().dag, e.state().done, n_max);
  return s;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct EpisodeLog {
  int episode = 0;
  double mean_tesc = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<EpisodeLog>& log) {
  os << "episode,mean_tesc,mean_loss,epsilon\n";
  os.precision(17);
  for (const auto& e : log)
    os << e.episode << ',' << e.mean_tesc << ',' << e.mean_loss << ',' << e.epsilon << '\n';
}

template <class Encoder, class Head>
class Trainer {
 public:
  Trainer(Agent<Encoder, Head> agent, EnvSetup setup, TrainConfig cfg)
      : agent_(std::move(agent)), setup_(std::move(setup)), cfg_(cfg),
        buffer_(cfg.replay_capacity),
        action_rng_(derive_seed(cfg.seed, "action")),
        replay_rng_(derive_seed(cfg.seed, "replay")) {
    cfg_.validate();
    setup_.env = setup_.env.normalized();
    Rng init_rng(derive_seed(cfg_.seed, "init"));
    agent_.init(init_rng);
    adam_gat_.learning_rate = cfg_.lr_gat;
    adam_pnaf_.learning_rate = cfg_.lr_pnaf;
    // estimated decision epochs, for the epsilon schedule
    const double mean_tasks = 0.5 * (setup_.dag.n_min + setup_.dag.n_max);
    est_total_steps_ =
        std::max(1.0, cfg_.episodes * cfg_.apps_per_episode * mean_tasks);
  }

  Agent<Encoder, Head>& agent() { return agent_; }
  const TrainConfig& config() const { return cfg_; }
  const EnvSetup& setup() const { return setup_; }
  ReplayBuffer& buffer() { return buffer_; }
  int episodes_done() const { return episode_; }
  long global_step() const { return global_step_; }

  double epsilon() const {
    const double half = est_total_steps_ * cfg_.eps_anneal_frac;
    const double frac = std::min(1.0, static_cast<double>(global_step_) / half);
    return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * frac;
  }

  EpisodeLog run_episode() {
    const int n_max = setup_.dag.n_max;
    env::Environment e = setup_.make_episode_env(cfg_.seed, episode_, cfg_.apps_per_episode);
    agent_.head.on_episode_start();
    double tesc_sum = 0.0;
    double loss_sum = 0.0;
    long loss_count = 0;
    StateSnapshot s = snapshot(e, n_max);
    while (!e.episode_done()) {
      const HybridAction a = agent_.act(s, epsilon(), action_rng_, /*explore=*/true);
      const env::StepOutcome out = e.step(a);
      tesc_sum += -out.reward;
      StateSnapshot s_next = snapshot(e, n_max);
      // Bootstrap within one application: the objective being minimized is
      // the per-application cost, so value propagation stops at app
      // boundaries even though the episode's clock and trace roll on.
      buffer_.push(Transition{s, a, out.reward, s_next, out.app_done});
      if (buffer_.size() >= static_cast<std::size_t>(cfg_.warmup)) {
        const auto batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch), replay_rng_);
        const auto z = compute_target(agent_, batch, cfg_.gamma);
        loss_sum += loss_and_grads(agent_, batch, z);
        ++loss_count;
        update(agent_, cfg_, adam_gat_, adam_pnaf_);
      }
      ++global_step_;
      s = std::move(s_next);
    }
    agent_.head.on_episode_end();
    EpisodeLog log;
    log.episode = episode_;
    log.mean_tesc = tesc_sum / cfg_.apps_per_episode;
    log.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    log.epsilon = epsilon();
    ++episode_;
    return log;
  }

  std::vector<EpisodeLog> train() {
    std::vector<EpisodeLog> log;
    while (episode_ < cfg_.episodes) log.push_back(run_episode());
    return log;
  }

  // --- persistence -------------------------------------------------------

  void save_params(std::ostream& os) const {
    std::vector<const nn::ParamBlock*> blocks;
    for (auto* b : const_cast<Trainer*>(this)->agent_.all_online_blocks()) blocks.push_back(b);
    nn::write_params(os, blocks);
  }

  // Full training state: online/target params with Adam moments, replay
  // buffer, RNG streams and counters. Valid at episode boundaries.
  void save_state(std::ostream& os) const {
    auto* self = const_cast<Trainer*>(this);
    os << "dhvo-trainer-state v1\n";
    os << episode_ << ' ' << global_step_ << ' ';
    double sigma = 0.0;
    if constexpr (requires { self->agent_.head.noise(); })
      sigma = self->agent_.head.noise().sigma;
    write_hex(os, sigma);
    os << '\n';
    os << action_rng_ << '\n' << replay_rng_ << '\n';

    auto online = self->agent_.all_online_blocks();
    os << online.size() << '\n';
    for (auto* b : online) {
      os << b->name << ' ' << b->value.rows << ' ' << b->value.cols << ' ' << b->step_count
         << '\n';
      nn::write_matrix_values(os, b->value);
      nn::write_matrix_values(os, b->adam_m);
      nn::write_matrix_values(os, b->adam_v);
    }
    auto target = self->agent_.all_target_blocks();
    os << target.size() << '\n';
    for (auto* b : target) {
      os << b->name << ' ' << b->value.rows << ' ' << b->value.cols << '\n';
      nn::write_matrix_values(os, b->value);
    }

    os << buffer_.size() << '\n';
    for (std::size_t i = 0; i < buffer_.size(); ++i) write_transition(os, buffer_.at(i));
  }

  void load_state(std::istream& is) {
    std::string header;
    std::getline(is, header);
    if (header != "dhvo-trainer-state v1")
      throw config_error("trainer state: bad header '" + header + "'");
    std::string sigma_tok;
    if (!(is >> episode_ >> global_step_ >> sigma_tok))
      throw config_error("trainer state: bad counters");
    if constexpr (requires { agent_.head.noise(); })
      agent_.head.noise().sigma = parse_hex(sigma_tok);
    is >> std::ws;
    is >> action_rng_;
    is >> replay_rng_;

    std::size_t n_online = 0;
    if (!(is >> n_online)) throw config_error("trainer state: missing online block count");
    auto online = agent_.all_online_blocks();
    if (n_online != online.size()) throw config_error("trainer state: online block count mismatch");
    for (auto* b : online) {
      std::string name;
      int rows = 0, cols = 0;
      long steps = 0;
      if (!(is >> name >> rows >> cols >> steps) || name != b->name || rows != b->value.rows ||
          cols != b->value.cols)
        throw config_error("trainer state: online block mismatch at '" + b->name + "'");
      b->step_count = steps;
      nn::read_matrix_values(is, b->value);
      nn::read_matrix_values(is, b->adam_m);
      nn::read_matrix_values(is, b->adam_v);
    }
    std::size_t n_target = 0;
    if (!(is >> n_target)) throw config_error("trainer state: missing target block count");
    auto target = agent_.all_target_blocks();
    if (n_target != target.size()) throw config_error("trainer state: target block count mismatch");
    for (auto* b : target) {
      std::string name;
      int rows = 0, cols = 0;
      if (!(is >> name >> rows >> cols) || name != b->name || rows != b->value.rows ||
          cols != b->value.cols)
        throw config_error("trainer state: target block mismatch at '" + b->name + "'");
      nn::read_matrix_values(is, b->value);
    }

    std::size_t n_transitions = 0;
    if (!(is >> n_transitions)) throw config_error("trainer state: missing buffer size");
    buffer_.clear();
    for (std::size_t i = 0; i < n_transitions; ++i) buffer_.push(read_transition(is));
  }

 private:
  static void write_hex(std::ostream& os, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    os << buf;
  }
  static double parse_hex(const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw config_error("trainer state: bad value '" + tok + "'");
    return v;
  }

  static void write_snapshot(std::ostream& os, const StateSnapshot& s) {
    os << s.features.n << ' ' << s.features.n_max << '\n';
    for (double v : s.features.values) {
      write_hex(os, v);
      os << ' ';
    }
    os << '\n';
    for (int i = 0; i < s.features.n; ++i) {
      const auto& nb = s.neighbors[static_cast<std::size_t>(i)];
      os << nb.size();
      for (int j : nb) os << ' ' << j;
      os << '\n';
    }
    for (auto v : s.mask.valid) os << int(v) << ' ';
    os << '\n';
  }

  static StateSnapshot read_snapshot(std::istream& is) {
    StateSnapshot s;
    if (!(is >> s.features.n >> s.features.n_max))
      throw config_error("trainer state: bad snapshot header");
    s.features.values.resize(static_cast<std::size_t>(s.features.n_max) *
                             env::FeatureMatrix::kWidth);
    std::string tok;
    for (auto& v : s.features.values) {
      if (!(is >> tok)) throw config_error("trainer state: truncated snapshot");
      v = parse_hex(tok);
    }
    s.features.valid.assign(static_cast<std::size_t>(s.features.n_max), 0);
    for (int i = 0; i < s.features.n; ++i) s.features.valid[static_cast<std::size_t>(i)] = 1;
    s.neighbors.resize(static_cast<std::size_t>(s.features.n));
    for (int i = 0; i < s.features.n; ++i) {
      std::size_t deg = 0;
      if (!(is >> deg)) throw config_error("trainer state: bad neighbor record");
      auto& nb = s.neighbors[static_cast<std::size_t>(i)];
      nb.resize(deg);
      for (auto& j : nb) is >> j;
    }
    s.mask.n_max = s.features.n_max;
    s.mask.valid.resize(static_cast<std::size_t>(2 * s.features.n_max));
    for (auto& v : s.mask.valid) {
      int b = 0;
      is >> b;
      v = static_cast<std::uint8_t>(b);
    }
    return s;
  }

  static void write_transition(std::ostream& os, const Transition& t) {
    os << t.a.y << ' ' << t.a.k << ' ';
    write_hex(os, t.a.param);
    os << ' ';
    write_hex(os, t.reward);
    os << ' ' << (t.terminal ? 1 : 0) << '\n';
    write_snapshot(os, t.s);
    write_snapshot(os, t.s_next);
  }

  static Transition read_transition(std::istream& is) {
    Transition t;
    std::string param_tok, reward_tok;
    int term = 0;
    if (!(is >> t.a.y >> t.a.k >> param_tok >> reward_tok >> term))
      throw config_error("trainer state: bad transition record");
    t.a.param = parse_hex(param_tok);
    t.reward = parse_hex(reward_tok);
    t.terminal = term != 0;
    t.s = read_snapshot(is);
    t.s_next = read_snapshot(is);
    return t;
  }

  Agent<Encoder, Head> agent_;
  EnvSetup setup_;
  TrainConfig cfg_;
  ReplayBuffer buffer_;
  Rng action_rng_;
  Rng replay_rng_;
  nn::AdamConfig adam_gat_;
  nn::AdamConfig adam_pnaf_;
  int episode_ = 0;
  long global_step_ = 0;
  double est_total_steps_ = 1.0;
};

using DhvoTrainer = Trainer<GatEncoder, PnafHead>;

// ---------------------------------------------------------------------------
// Greedy evaluation shared by agents and analytic policies
// ---------------------------------------------------------------------------

using RolloutPolicy = std::function<HybridAction(const env::Environment&, const StateSnapshot&)>;

struct EvalResult {
  int n_tests = 0;
  double mean_tesc = 0.0;
  double mean_time = 0.0;    // per test
  double mean_energy = 0.0;
  double mean_charge = 0.0;
  long local_actions = 0;
  long offload_actions = 0;
  long migrations = 0;
  std::vector<double> per_test_tesc;
};

// `n_tests` single-application rollouts on fixtures derived only from
// (setup, seed), so different policies see identical fixtures.
inline EvalResult evaluate_policy(const RolloutPolicy& policy, const EnvSetup& setup_in,
                                  int n_tests, std::uint64_t seed, int n_max) {
  EnvSetup setup = setup_in;
  setup.env = setup.env.normalized();
  EvalResult res;
  res.n_tests = n_tests;
  for (int t = 0; t < n_tests; ++t) {
    auto dag_rng = std::make_shared<Rng>(derive_seed(seed, "eval-dag", static_cast<std::uint64_t>(t)));
    const graph::DagGenConfig dcfg = setup.dag;
    env::Environment e(setup.env, setup.trace_for(seed, "eval-trace", t),
                       [dag_rng, dcfg]() { return graph::generate_dag(dcfg, *dag_rng); }, 1,
                       derive_seed(seed, "eval-fading", static_cast<std::uint64_t>(t)));
    double tesc = 0.0;
    while (!e.episode_done()) {
      StateSnapshot s = snapshot(e, n_max);
      const HybridAction a = policy(e, s);
      const env::StepOutcome out = e.step(a);
      tesc += -out.reward;
      res.mean_time += out.time_s;
      res.mean_energy += out.energy_j;
      res.mean_charge += out.charge_usd;
      if (a.k == 0)
        ++res.local_actions;
      else
        ++res.offload_actions;
      if (out.migrated) ++res.migrations;
    }
    res.per_test_tesc.push_back(tesc);
    res.mean_tesc += tesc;
  }
  res.mean_tesc /= n_tests;
  res.mean_time /= n_tests;
  res.mean_energy /= n_tests;
  res.mean_charge /= n_tests;
  return res;
}

template <class Encoder, class Head>
RolloutPolicy greedy_policy(Agent<Encoder, Head>& agent) {
  return [&agent](const env::Environment&, const StateSnapshot& s) {
    return agent.act_greedy(s);
  };
}

}  // namespace dhvo::train
