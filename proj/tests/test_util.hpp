#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "esched/dag.hpp"
#include "esched/rng.hpp"
#include "esched/topology.hpp"
#include "esched/trace.hpp"

namespace esched::testutil {

/// Layered-free random DAG with edges i -> j (i < j) at probability p.
/// Node ids are a topological order by construction.
inline TaskGraph random_dag(std::uint32_t nodes, double edge_prob, std::uint64_t seed,
                            std::uint32_t num_types = 1) {
  TaskGraph g;
  Rng rng(seed);
  for (std::uint32_t i = 0; i < nodes; ++i) g.add_node(rng.below(num_types));
  for (std::uint32_t i = 0; i < nodes; ++i)
    for (std::uint32_t j = i + 1; j < nodes; ++j)
      if (rng.unit() < edge_prob) g.add_edge(i, j);
  g.assign_criticality();
  return g;
}

/// Independent longest-path-to-sink oracle: memoized depth-first walk over
/// children, nothing shared with the production topological pass.
inline std::vector<std::uint32_t> longest_path_oracle(const TaskGraph& g) {
  std::vector<std::uint32_t> memo(g.size(), 0);
  std::vector<std::uint8_t> known(g.size(), 0);
  struct Walker {
    const TaskGraph& g;
    std::vector<std::uint32_t>& memo;
    std::vector<std::uint8_t>& known;
    std::uint32_t walk(NodeId v) {
      if (known[v]) return memo[v];
      std::uint32_t best = 0;
      for (NodeId c : g.node(v).children) best = std::max(best, walk(c));
      known[v] = 1;
      memo[v] = best + 1;
      return memo[v];
    }
  } walker{g, memo, known};
  for (NodeId v = 0; v < g.size(); ++v) walker.walk(v);
  return memo;
}

/// Consistency audit over a finished run's trace and counters. Returns an
/// error description, or nullopt when everything holds.
inline std::optional<std::string> audit_run(const TaskGraph& g, const Topology& topo,
                                            const RunReport& report, bool check_reasons = true) {
  auto fail = [](const std::string& msg) { return std::optional<std::string>(msg); };
  std::vector<int> places(g.size(), 0), commits(g.size(), 0), spawns(g.size(), 0);
  std::map<NodeId, Partition> placed_partition;
  std::map<NodeId, PlaceReason> reasons;
  std::uint64_t width_sum = 0;
  double last_time = 0.0;
  for (const auto& e : report.trace) {
    if (e.time < last_time - 1e-12) return fail("trace not time-ordered");
    last_time = std::max(last_time, e.time);
    if (e.task >= g.size()) return fail("trace references unknown task");
    switch (e.kind) {
      case TraceKind::Spawn:
        ++spawns[e.task];
        break;
      case TraceKind::Place: {
        ++places[e.task];
        Partition p{e.leader, e.width};
        if (!topo.is_legal(p)) return fail("illegal partition placed for task " + std::to_string(e.task));
        placed_partition[e.task] = p;
        reasons[e.task] = e.reason;
        width_sum += e.width;
        break;
      }
      case TraceKind::Commit:
        ++commits[e.task];
        break;
      case TraceKind::Start:
        break;
    }
  }
  for (NodeId v = 0; v < g.size(); ++v) {
    if (places[v] != 1) return fail("task " + std::to_string(v) + " placed " + std::to_string(places[v]) + " times");
    if (commits[v] != 1) return fail("task " + std::to_string(v) + " committed " + std::to_string(commits[v]) + " times");
    if (spawns[v] != 1) return fail("task " + std::to_string(v) + " spawned " + std::to_string(spawns[v]) + " times");
  }
  if (report.tasks != g.size()) return fail("report.tasks != graph size");
  if (report.counters.aq_pushes != width_sum) return fail("AQ pushes != sum of placed widths");
  if (report.counters.aq_pops != width_sum) return fail("AQ refs outlived completion");
  if (report.counters.placements != g.size()) return fail("placement count != task count");
  if (check_reasons) {
    if (report.critical_tag.size() != g.size()) return fail("missing critical tags");
    for (NodeId v = 0; v < g.size(); ++v) {
      bool root = g.is_root(v);
      PlaceReason r = reasons[v];
      if (root && r != PlaceReason::InitialLocal)
        return fail("root " + std::to_string(v) + " placed with non-initial reason");
      if (!root && report.critical_tag[v] && r != PlaceReason::CriticalGlobal)
        return fail("critical task " + std::to_string(v) + " placed with reason " + to_string(r));
      if (!root && !report.critical_tag[v] && r == PlaceReason::CriticalGlobal)
        return fail("non-critical task " + std::to_string(v) + " placed via global search");
    }
  }
  double max_commit = 0.0;
  for (const auto& e : report.trace)
    if (e.kind == TraceKind::Commit) max_commit = std::max(max_commit, e.time);
  if (std::abs(report.makespan - max_commit) > 1e-9) return fail("makespan != last commit time");
  if (report.makespan > 0.0 &&
      std::abs(report.throughput - static_cast<double>(report.tasks) / report.makespan) > 1e-9)
    return fail("throughput != tasks / makespan");
  return std::nullopt;
}

/// A chain backbone (the critical path) with `sides` childless tasks hanging
/// off each chain node: one critical task ready at a time plus a steady
/// stream of non-critical work to keep every core training the table.
/// Parallelism is about 1 + sides.
inline TaskGraph chain_with_side_tasks(std::uint32_t length, std::uint32_t sides, TypeId type = 0) {
  TaskGraph g;
  NodeId prev = g.add_node(type);
  for (std::uint32_t i = 1; i < length; ++i) {
    NodeId next = g.add_node(type);
    g.add_edge(prev, next);
    // skip the tail so side tasks never sit one criticality step below their parent
    if (i + 2 < length)
      for (std::uint32_t s = 0; s < sides; ++s) g.add_edge(prev, g.add_node(type));
    prev = next;
  }
  g.assign_criticality();
  return g;
}

/// Placement partitions in task order, handy for fixture comparisons.
inline std::map<NodeId, Partition> placements(const RunReport& report) {
  std::map<NodeId, Partition> out;
  for (const auto& e : report.trace)
    if (e.kind == TraceKind::Place) out[e.task] = Partition{e.leader, e.width};
  return out;
}

inline std::string trace_to_string(const RunReport& report) {
  std::ostringstream os;
  report.write_trace_csv(os);
  return os.str();
}

}  // namespace esched::testutil
