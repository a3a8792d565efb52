#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "dhvo/taskgraph.hpp"

using namespace dhvo;
using graph::DagGenConfig;
using graph::TaskDag;
using graph::TaskSpec;

namespace {

TaskDag chain3() {
  return TaskDag::make({{0, 1e6, 1e6, 1e8}, {1, 1e6, 1e6, 1e8}, {2, 1e6, 1e6, 1e8}},
                       {{0, 1}, {1, 2}});
}

TaskDag diamond() {
  return TaskDag::make(
      {{0, 1e6, 1e6, 1e8}, {1, 1e6, 1e6, 1e8}, {2, 1e6, 1e6, 1e8}, {3, 1e6, 1e6, 1e8}},
      {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
}

}  // namespace

TEST_CASE("construction validates structure") {
  CHECK_THROWS_AS(TaskDag::make({{0, 1e6, 1e6, 1e8}}, {{0, 0}}), config_error);
  CHECK_THROWS_AS(TaskDag::make({{0, 1e6, 1e6, 1e8}}, {{0, 1}}), config_error);
  CHECK_THROWS_AS(
      TaskDag::make({{0, 1e6, 1e6, 1e8}, {1, 1e6, 1e6, 1e8}}, {{0, 1}, {0, 1}}),
      config_error);
  CHECK_THROWS_AS(
      TaskDag::make({{0, 1e6, 1e6, 1e8}, {1, 1e6, 1e6, 1e8}}, {{0, 1}, {1, 0}}),
      config_error);
  CHECK_THROWS_AS(TaskDag::make({{0, 0.0, 1e6, 1e8}}, {}), config_error);
}

TEST_CASE("ready_set on a chain") {
  const TaskDag dag = chain3();
  CHECK(dag.ready_set({0, 0, 0}) == std::vector<int>{0});
  CHECK(dag.ready_set({1, 0, 0}) == std::vector<int>{1});
  CHECK(dag.ready_set({1, 1, 0}) == std::vector<int>{2});
  CHECK(dag.ready_set({1, 1, 1}).empty());
}

TEST_CASE("ready_set on a diamond blocks the join") {
  const TaskDag dag = diamond();
  CHECK(dag.ready_set({1, 1, 0, 0}) == std::vector<int>{2});
  CHECK(dag.ready_set({1, 1, 1, 0}) == std::vector<int>{3});
}

TEST_CASE("predecessors") {
  const TaskDag dag = diamond();
  CHECK(dag.predecessors(0).empty());
  CHECK(dag.predecessors(3) == std::vector<int>{1, 2});
  CHECK_THROWS_AS(dag.predecessors(7), std::out_of_range);
}

TEST_CASE("generated edges always appear in predecessor lists") {
  DagGenConfig cfg;
  cfg.seed = 17;
  Rng rng(cfg.seed);
  for (int trial = 0; trial < 50; ++trial) {
    const TaskDag dag = graph::generate_dag(cfg, rng);
    for (auto [i, j] : dag.edges()) {
      const auto& preds = dag.predecessors(j);
      CHECK(std::find(preds.begin(), preds.end(), i) != preds.end());
    }
  }
}

TEST_CASE("degenerate generator configs") {
  DagGenConfig cfg;
  cfg.n_min = cfg.n_max = 1;
  Rng rng(3);
  const TaskDag one = graph::generate_dag(cfg, rng);
  CHECK(one.size() == 1);
  CHECK(one.edges().empty());

  DagGenConfig flat;
  flat.edge_prob = 0.0;
  Rng rng2(5);
  for (int t = 0; t < 20; ++t) {
    const TaskDag d = graph::generate_dag(flat, rng2);
    CHECK(d.edges().empty());
  }
}

TEST_CASE("field ranges and seed determinism") {
  DagGenConfig cfg;  // Table-II defaults
  cfg.seed = 99;
  Rng rng(cfg.seed);
  int draws = 0;
  while (draws < 10000) {
    const TaskDag dag = graph::generate_dag(cfg, rng);
    for (const auto& t : dag.tasks()) {
      ++draws;
      CHECK(t.input_bits >= 2.0e7);
      CHECK(t.input_bits <= 2.8e7);
      CHECK(t.output_bits >= 2.0e7);
      CHECK(t.output_bits <= 2.8e7);
      CHECK(t.cycles >= 8.0e8);
      CHECK(t.cycles <= 1.2e9);
    }
    CHECK(dag.size() >= 8);
    CHECK(dag.size() <= 12);
  }

  const TaskDag a = graph::generate_dag(cfg);
  const TaskDag b = graph::generate_dag(cfg);
  REQUIRE(a.size() == b.size());
  CHECK(a.edges() == b.edges());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.task(i).input_bits == b.task(i).input_bits);
    CHECK(a.task(i).cycles == b.task(i).cycles);
  }
}

TEST_CASE("topological sort visits all nodes; ready-driven execution never deadlocks") {
  DagGenConfig cfg;
  cfg.seed = 4;
  Rng rng(cfg.seed);
  Rng order_rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const TaskDag dag = graph::generate_dag(cfg, rng);
    CHECK(static_cast<int>(dag.topo_order().size()) == dag.size());

    std::vector<std::uint8_t> done(dag.size(), 0);
    int executed = 0;
    while (true) {
      const auto ready = dag.ready_set(done);
      if (ready.empty()) break;
      const int pick =
          ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(order_rng)];
      done[pick] = 1;
      ++executed;
    }
    CHECK(executed == dag.size());
  }
}

TEST_CASE("ready task stays ready as more work completes") {
  DagGenConfig cfg;
  cfg.seed = 21;
  Rng rng(cfg.seed);
  for (int trial = 0; trial < 50; ++trial) {
    const TaskDag dag = graph::generate_dag(cfg, rng);
    std::vector<std::uint8_t> done1(dag.size(), 0);
    // done1: first half of a topo order; done2 adds one more
    const auto& order = dag.topo_order();
    for (int i = 0; i < dag.size() / 2; ++i) done1[order[i]] = 1;
    auto done2 = done1;
    done2[order[dag.size() / 2]] = 1;

    const auto r1 = dag.ready_set(done1);
    const auto r2 = dag.ready_set(done2);
    for (int t : r1) {
      if (done2[t]) continue;
      CHECK(std::find(r2.begin(), r2.end(), t) != r2.end());
    }
  }
}

TEST_CASE("text round-trip") {
  const TaskDag dag = diamond();
  std::stringstream ss;
  graph::write_dag(ss, dag);
  const TaskDag back = graph::read_dag(ss);
  REQUIRE(back.size() == dag.size());
  CHECK(back.edges() == dag.edges());
  for (int i = 0; i < dag.size(); ++i) {
    CHECK(back.task(i).input_bits == dag.task(i).input_bits);
    CHECK(back.task(i).output_bits == dag.task(i).output_bits);
    CHECK(back.task(i).cycles == dag.task(i).cycles);
  }
}
