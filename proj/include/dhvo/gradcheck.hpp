#pragma once

#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/gatenc.hpp"
#include "dhvo/nncore.hpp"
#include "dhvo/trainer.hpp"

namespace dhvo::gradcheck {

// Random but realistic decision-epoch snapshot on a random small dag:
// partially completed work, random clock/position/speeds.
inline train::StateSnapshot random_snapshot(const graph::TaskDag& dag, int n_max, Rng& rng) {
  env::EnvConfig cfg;
  env::EnvState st;
  st.dag = dag;
  st.done.assign(static_cast<std::size_t>(dag.size()), 0);
  // mark a random prefix of a topological order done, never all of it
  std::uniform_int_distribution<int> prefix(0, dag.size() - 1);
  const int k = prefix(rng);
  for (int i = 0; i < k; ++i) st.done[static_cast<std::size_t>(dag.topo_order()[i])] = 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  st.clock_s = 100.0 * unit(rng);
  st.position_m = 500.0 * unit(rng);
  for (auto& v : st.speed_window) v = 25.0 * unit(rng);

  train::StateSnapshot s;
  s.features = env::observe(st, cfg, n_max);
  s.neighbors = gatenc::neighbor_lists(dag);
  s.mask = pnaf::make_action_mask(dag, st.done, n_max);
  return s;
}

inline graph::TaskDag random_small_dag(int n, Rng& rng) {
  graph::DagGenConfig dcfg;
  dcfg.n_min = dcfg.n_max = n;
  dcfg.edge_prob = 0.5;
  return graph::generate_dag(dcfg, rng);
}

inline std::vector<train::Transition> random_fixture_batch(const graph::TaskDag& dag, int n_max,
                                                           int n_transitions, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<train::Transition> batch;
  for (int b = 0; b < n_transitions; ++b) {
    train::Transition t;
    t.s = random_snapshot(dag, n_max, rng);
    t.s_next = random_snapshot(dag, n_max, rng);
    std::vector<int> valid;
    for (int idx = 0; idx < t.s.mask.size(); ++idx)
      if (t.s.mask.valid[static_cast<std::size_t>(idx)]) valid.push_back(idx);
    const int pick = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    t.a.y = pnaf::ActionMask::task_of(pick);
    t.a.k = pnaf::ActionMask::bit_of(pick);
    t.a.param = unit(rng);
    t.reward = -30.0 * unit(rng);
    t.terminal = true;  // z plays the role of a fixed TD target below
    batch.push_back(std::move(t));
  }
  return batch;
}

// Finite-difference audit of mean squared TD error through head and encoder
// for fixed targets z.
template <class Encoder, class Head>
nn::GradCheckReport agent_loss_gradcheck(train::Agent<Encoder, Head>& agent,
                                         const std::vector<train::Transition>& transitions,
                                         const std::vector<double>& z, double h, double tol) {
  std::vector<const train::Transition*> batch;
  for (const auto& t : transitions) batch.push_back(&t);

  for (auto* b : agent.all_online_blocks()) b->zero_grad();
  train::loss_and_grads(agent, batch, z);

  auto loss_only = [&]() {
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      typename Encoder::Cache cache;
      const auto enc = agent.encoder.encode(batch[i]->s, &cache);
      const auto fwd = agent.head.forward(enc);
      loss += nn::mse_scalar(agent.head.q_taken(fwd, batch[i]->a), z[i]) * inv_b;
    }
    return loss;
  };
  auto report = nn::grad_check(loss_only, agent.all_online_blocks(), h, tol);
  for (auto* b : agent.all_online_blocks()) b->zero_grad();
  return report;
}

struct Report {
  bool pass = true;
  double worst = 0.0;
  std::vector<std::string> lines;
};

// The full GAT + PNAF + loss composite on random 3-node fixtures.
inline Report composite_gradcheck(std::uint64_t seed, int fixtures, double tol,
                                  int nodes = 3) {
  Report report;
  for (int i = 0; i < fixtures; ++i) {
    Rng rng(derive_seed(seed, "gradcheck", static_cast<std::uint64_t>(i)));
    const graph::TaskDag dag = random_small_dag(nodes, rng);
    train::TrainConfig tcfg;
    auto agent = train::make_dhvo_agent(nodes, tcfg);
    agent.init(rng);
    const auto batch = random_fixture_batch(dag, nodes, 2, rng);
    std::uniform_real_distribution<double> ztarget(-30.0, 0.0);
    std::vector<double> z;
    for (std::size_t b = 0; b < batch.size(); ++b) z.push_back(ztarget(rng));

    const auto r = agent_loss_gradcheck(agent, batch, z, 1e-6, tol);
    report.worst = std::max(report.worst, r.max_rel_err);
    report.pass = report.pass && r.pass;
    report.lines.push_back("fixture " + std::to_string(i) + ": max_rel_err " +
                           std::to_string(r.max_rel_err) + (r.pass ? " ok" : " FAIL (" +
                           r.worst_entry + ")"));
  }
  return report;
}

}  // namespace dhvo::gradcheck
