#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <set>
#include <sstream>

#include "esched/dag.hpp"
#include "test_util.hpp"

using namespace esched;
using namespace esched::testutil;

namespace {

// Seven-task fixture: two sources, one five-node longest path.
// A -> C,E; B -> G; C -> G; G -> D; E -> D; D -> F.
enum : NodeId { A = 0, B, C, D, E, F, G };

TaskGraph seven_task_fixture() {
  TaskGraph g;
  for (int i = 0; i < 7; ++i) g.add_node(0);
  g.add_edge(A, C);
  g.add_edge(A, E);
  g.add_edge(B, G);
  g.add_edge(C, G);
  g.add_edge(G, D);
  g.add_edge(E, D);
  g.add_edge(D, F);
  g.assign_criticality();
  return g;
}

}  // namespace

TEST_CASE("criticality on the seven-task fixture") {
  TaskGraph g = seven_task_fixture();
  CHECK(g.node(A).criticality == 5);
  CHECK(g.node(C).criticality == 4);
  CHECK(g.node(G).criticality == 3);
  CHECK(g.node(D).criticality == 2);
  CHECK(g.node(F).criticality == 1);
  CHECK(g.max_criticality() == 5);
  CHECK(g.avg_parallelism() == Catch::Approx(1.4));
}

TEST_CASE("single node and chains") {
  TaskGraph single;
  single.add_node(0);
  single.assign_criticality();
  CHECK(single.node(0).criticality == 1);
  CHECK(single.avg_parallelism() == Catch::Approx(1.0));

  TaskGraph chain;
  for (int i = 0; i < 9; ++i) chain.add_node(0);
  for (int i = 0; i + 1 < 9; ++i) chain.add_edge(i, i + 1);
  chain.assign_criticality();
  CHECK(chain.max_criticality() == 9);
  CHECK(chain.avg_parallelism() == Catch::Approx(1.0));
}

TEST_CASE("two chains into one sink match the oracle") {
  TaskGraph g;
  const int k = 6;
  for (int i = 0; i < 2 * k + 1; ++i) g.add_node(0);
  for (int i = 0; i + 1 < k; ++i) {
    g.add_edge(i, i + 1);              // chain 1: 0..k-1
    g.add_edge(k + i, k + i + 1);      // chain 2: k..2k-1
  }
  g.add_edge(k - 1, 2 * k);
  g.add_edge(2 * k - 1, 2 * k);
  g.assign_criticality();
  auto oracle = longest_path_oracle(g);
  for (NodeId v = 0; v < g.size(); ++v) CHECK(g.node(v).criticality == oracle[v]);
  CHECK(g.avg_parallelism() == Catch::Approx((2.0 * k + 1) / (k + 1)));
}

TEST_CASE("criticality equals brute-force longest path on random DAGs") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed * 31 + 1);
    std::uint32_t n = 2 + rng.below(49);
    TaskGraph g = random_dag(n, 0.05 + rng.unit() * 0.25, seed);
    auto oracle = longest_path_oracle(g);
    for (NodeId v = 0; v < g.size(); ++v) REQUIRE(g.node(v).criticality == oracle[v]);
  }
}

TEST_CASE("cycles are rejected") {
  TaskGraph g;
  g.add_node(0);
  g.add_node(0);
  g.add_node(0);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 0);
  CHECK_THROWS_AS(g.assign_criticality(), DagError);
}

TEST_CASE("is_critical_child checks a difference of exactly one") {
  CHECK(is_critical_child(5, 4));
  CHECK_FALSE(is_critical_child(5, 3));
  CHECK_FALSE(is_critical_child(4, 4));
}

TEST_CASE("completion wakes children with parent-relative tags") {
  TaskGraph g = seven_task_fixture();
  ExecutionState state(g);

  auto ready = state.complete_and_wake(A);
  REQUIRE(ready.size() == 2);
  CHECK(ready[0].id == C);
  CHECK(ready[0].critical);  // 5 vs 4
  CHECK(ready[1].id == E);
  CHECK_FALSE(ready[1].critical);  // 5 vs 3

  auto from_b = state.complete_and_wake(B);
  CHECK(from_b.empty());  // G still waits for C
  auto from_c = state.complete_and_wake(C);
  REQUIRE(from_c.size() == 1);
  CHECK(from_c[0].id == G);
  CHECK(from_c[0].critical);  // 4 vs 3
}

TEST_CASE("sink completion wakes nothing") {
  TaskGraph g;
  g.add_node(0);
  g.assign_criticality();
  ExecutionState state(g);
  CHECK(state.complete_and_wake(0).empty());
  CHECK(state.all_completed());
}

TEST_CASE("diamond join wakes the child exactly once") {
  TaskGraph g;
  for (int i = 0; i < 4; ++i) g.add_node(0);
  g.add_edge(0, 1);
  g.add_edge(0, 2);
  g.add_edge(1, 3);
  g.add_edge(2, 3);
  g.assign_criticality();
  ExecutionState state(g);
  state.complete_and_wake(0);
  CHECK(state.complete_and_wake(1).empty());
  auto ready = state.complete_and_wake(2);
  REQUIRE(ready.size() == 1);
  CHECK(ready[0].id == 3);
}

TEST_CASE("double completion is detected") {
  TaskGraph g;
  g.add_node(0);
  g.assign_criticality();
  ExecutionState state(g);
  state.complete_and_wake(0);
  CHECK_THROWS_AS(state.complete_and_wake(0), DagError);
}

TEST_CASE("wake conservation and root tags on random DAGs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TaskGraph g = random_dag(40, 0.12, seed ^ 0xbeef);
    ExecutionState state(g);
    std::deque<NodeId> queue;
    for (NodeId r : g.roots()) queue.push_back(r);
    std::size_t executed = 0, wakes = 0;
    while (!queue.empty()) {
      NodeId v = queue.front();
      queue.pop_front();
      ++executed;
      for (const auto& r : state.complete_and_wake(v)) {
        ++wakes;
        queue.push_back(r.id);
      }
    }
    REQUIRE(executed == g.size());  // every node exactly once
    REQUIRE(wakes == g.size() - g.roots().size());
    for (NodeId r : g.roots()) CHECK_FALSE(state.woken_critical(r));
    for (NodeId v = 0; v < g.size(); ++v) {
      if (g.is_root(v)) continue;
      // a tag needs a parent exactly one step more critical
      bool has_tight_parent = false, all_tight = true;
      for (NodeId p : g.node(v).parents) {
        bool tight = is_critical_child(g.node(p).criticality, g.node(v).criticality);
        has_tight_parent |= tight;
        all_tight &= tight;
      }
      if (state.woken_critical(v)) CHECK(has_tight_parent);
      if (all_tight) CHECK(state.woken_critical(v));
    }
  }
}

TEST_CASE("placements are irrevocable") {
  TaskGraph g;
  g.add_node(0);
  g.assign_criticality();
  ExecutionState state(g);
  state.set_placement(0, Partition{0, 1});
  CHECK(state.placement(0) == Partition{0, 1});
  CHECK_THROWS_AS(state.set_placement(0, Partition{0, 2}), DagError);
}

TEST_CASE("dag text format round-trips") {
  TaskGraph g = seven_task_fixture();
  std::ostringstream out;
  write_dag(out, g);
  std::istringstream in(out.str());
  TaskGraph back = read_dag(in);
  REQUIRE(back.size() == g.size());
  for (NodeId v = 0; v < g.size(); ++v) {
    CHECK(back.node(v).type == g.node(v).type);
    CHECK(back.node(v).data_slot == g.node(v).data_slot);
    CHECK(back.node(v).children == g.node(v).children);
    CHECK(back.node(v).criticality == g.node(v).criticality);
  }
}

TEST_CASE("dag parser rejects malformed input") {
  std::istringstream bad1("node 1 0 0\n");  // ids must start at 0
  CHECK_THROWS_AS(read_dag(bad1), DagError);
  std::istringstream bad2("node 0 0 0\nvertex 1 0\n");
  CHECK_THROWS_AS(read_dag(bad2), DagError);
  std::istringstream bad3("node 0 0 0\nedge 0 5\n");
  CHECK_THROWS_AS(read_dag(bad3), DagError);
}
