#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dhvo/common.hpp"

namespace dhvo::graph {

// One application sub-task: input/output payload in bits, work in CPU cycles.
struct TaskSpec {
  int id = 0;
  double input_bits = 0.0;
  double output_bits = 0.0;
  double cycles = 0.0;
};

using Edge = std::pair<int, int>;  // (i, j): i must complete before j starts

// Immutable precedence DAG over dense task ids 0..N-1. Construct through
// make(), which validates acyclicity and edge sanity and caches adjacency.
class TaskDag {
 public:
  TaskDag() = default;

  static TaskDag make(std::vector<TaskSpec> tasks, std::vector<Edge> edges) {
    TaskDag dag;
    dag.tasks_ = std::move(tasks);
    dag.edges_ = std::move(edges);
    const int n = static_cast<int>(dag.tasks_.size());
    for (int i = 0; i < n; ++i) {
      if (dag.tasks_[i].id != i)
        throw config_error("task ids must be dense 0..N-1 in order");
      if (!(dag.tasks_[i].input_bits > 0.0) || !(dag.tasks_[i].output_bits > 0.0) ||
          !(dag.tasks_[i].cycles > 0.0))
        throw config_error("task fields must be strictly positive");
    }
    std::sort(dag.edges_.begin(), dag.edges_.end());
    for (std::size_t e = 0; e < dag.edges_.size(); ++e) {
      auto [i, j] = dag.edges_[e];
      if (i < 0 || i >= n || j < 0 || j >= n)
        throw config_error("edge endpoint out of range");
      if (i == j) throw config_error("self-edges are not allowed");
      if (e > 0 && dag.edges_[e] == dag.edges_[e - 1])
        throw config_error("duplicate edge");
    }
    dag.preds_.assign(n, {});
    dag.succs_.assign(n, {});
    for (auto [i, j] : dag.edges_) {
      dag.preds_[j].push_back(i);
      dag.succs_[i].push_back(j);
    }
    dag.topo_ = dag.compute_topo_order();  // throws on cycles
    return dag;
  }

  int size() const { return static_cast<int>(tasks_.size()); }
  const TaskSpec& task(int i) const { return tasks_.at(i); }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const std::vector<Edge>& edges() const { return edges_; }

  const std::vector<int>& predecessors(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("predecessors: invalid task id");
    return preds_[i];
  }
  const std::vector<int>& successors(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("successors: invalid task id");
    return succs_[i];
  }

  // A valid topological order (Kahn, smallest id first).
  const std::vector<int>& topo_order() const { return topo_; }

  // Tasks whose predecessors are all done and that are not done themselves,
  // ascending by id. `done` is an N-wide completion bitmap.
  std::vector<int> ready_set(const std::vector<std::uint8_t>& done) const {
    std::vector<int> ready;
    for (int i = 0; i < size(); ++i) {
      if (done[i]) continue;
      bool ok = true;
      for (int p : preds_[i])
        if (!done[p]) { ok = false; break; }
      if (ok) ready.push_back(i);
    }
    return ready;
  }

 private:
  std::vector<int> compute_topo_order() const {
    const int n = size();
    std::vector<int> indeg(n, 0);
    for (auto& [i, j] : edges_) ++indeg[j];
    std::set<int> frontier;
    for (int i = 0; i < n; ++i)
      if (indeg[i] == 0) frontier.insert(i);
    std::vector<int> order;
    order.reserve(n);
    while (!frontier.empty()) {
      int i = *frontier.begin();
      frontier.erase(frontier.begin());
      order.push_back(i);
      for (int j : succs_[i])
        if (--indeg[j] == 0) frontier.insert(j);
    }
    if (static_cast<int>(order.size()) != n) throw config_error("task graph has a cycle");
    return order;
  }

  std::vector<TaskSpec> tasks_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> preds_, succs_;
  std::vector<int> topo_;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct DagGenConfig {
  int n_min = 8;
  int n_max = 12;
  Range di_range{2.0e7, 2.8e7};     // bits  (2.5..3.5 MByte at 8e6 bits/MByte)
  Range do_range{2.0e7, 2.8e7};     // bits
  Range cycles_range{8.0e8, 1.2e9}; // cycles (800..1200 Mcycles)
  double edge_prob = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_min < 1 || n_min > n_max) throw config_error("dag: need 1 <= n_min <= n_max");
    if (!(di_range.lo > 0.0) || di_range.lo > di_range.hi) throw config_error("dag: bad di_range");
    if (!(do_range.lo > 0.0) || do_range.lo > do_range.hi) throw config_error("dag: bad do_range");
    if (!(cycles_range.lo > 0.0) || cycles_range.lo > cycles_range.hi)
      throw config_error("dag: bad cycles_range");
    if (edge_prob < 0.0 || edge_prob > 1.0) throw config_error("dag: edge_prob outside [0,1]");
  }
};

// Layered random DAG. Every node gets a layer in [0, ceil(N/3)]; edges only
// run from lower to higher layers, so the result is acyclic by construction.
// Nodes on a non-minimal layer that end up with no predecessor get one edge
// from a random earlier-layer node so the dependency structure is nontrivial.
inline TaskDag generate_dag(const DagGenConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = std::uniform_int_distribution<int>(cfg.n_min, cfg.n_max)(rng);
  std::vector<TaskSpec> tasks(n);
  for (int i = 0; i < n; ++i) {
    tasks[i].id = i;
    tasks[i].input_bits =
        std::uniform_real_distribution<double>(cfg.di_range.lo, cfg.di_range.hi)(rng);
    tasks[i].output_bits =
        std::uniform_real_distribution<double>(cfg.do_range.lo, cfg.do_range.hi)(rng);
    tasks[i].cycles =
        std::uniform_real_distribution<double>(cfg.cycles_range.lo, cfg.cycles_range.hi)(rng);
  }
  const int max_layer = static_cast<int>(std::ceil(n / 3.0));
  std::vector<int> layer(n);
  for (int i = 0; i < n; ++i)
    layer[i] = std::uniform_int_distribution<int>(0, max_layer)(rng);

  std::vector<Edge> edges;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (layer[i] < layer[j] && unit(rng) < cfg.edge_prob) edges.emplace_back(i, j);

  std::vector<int> has_pred(n, 0);
  for (auto& [i, j] : edges) has_pred[j] = 1;
  const int min_layer = *std::min_element(layer.begin(), layer.end());
  for (int j = 0; j < n && cfg.edge_prob > 0.0; ++j) {
    if (has_pred[j] || layer[j] == min_layer) continue;
    std::vector<int> earlier;
    for (int i = 0; i < n; ++i)
      if (layer[i] < layer[j]) earlier.push_back(i);
    if (earlier.empty()) continue;
    int pick = earlier[std::uniform_int_distribution<std::size_t>(0, earlier.size() - 1)(rng)];
    edges.emplace_back(pick, j);
  }
  return TaskDag::make(std::move(tasks), std::move(edges));
}

inline TaskDag generate_dag(const DagGenConfig& cfg) {
  Rng rng(cfg.seed);
  return generate_dag(cfg, rng);
}

// Plain-text DAG fixture format:
//   line 1:        N M
//   next N lines:  id input_bits output_bits cycles
//   next M lines:  src dst
inline void write_dag(std::ostream& os, const TaskDag& dag) {
  os.precision(17);
  os << dag.size() << ' ' << dag.edges().size() << '\n';
  for (const auto& t : dag.tasks())
    os << t.id << ' ' << t.input_bits << ' ' << t.output_bits << ' ' << t.cycles << '\n';
  for (auto [i, j] : dag.edges()) os << i << ' ' << j << '\n';
}

inline TaskDag read_dag(std::istream& is) {
  int n = 0, m = 0;
  if (!(is >> n >> m)) throw config_error("dag file: bad header line");
  std::vector<TaskSpec> tasks(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    TaskSpec t;
    if (!(is >> t.id >> t.input_bits >> t.output_bits >> t.cycles))
      throw config_error("dag file: bad task line " + std::to_string(i));
    if (t.id < 0 || t.id >= n) throw config_error("dag file: task id out of range");
    tasks[static_cast<std::size_t>(t.id)] = t;
  }
  std::vector<Edge> edges(static_cast<std::size_t>(m));
  for (int e = 0; e < m; ++e)
    if (!(is >> edges[e].first >> edges[e].second))
      throw config_error("dag file: bad edge line " + std::to_string(e));
  return TaskDag::make(std::move(tasks), std::move(edges));
}

}  // namespace dhvo::graph
