#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "esched/topology.hpp"
#include "esched/ptt.hpp"

namespace esched {

using NodeId = std::uint32_t;

class DagError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskNode {
  NodeId id = 0;
  TypeId type = 0;
  std::uint32_t data_slot = 0;
  std::uint32_t criticality = 0;  // 1 + max(children criticality); sinks are 1
  std::vector<NodeId> children;
  std::vector<NodeId> parents;
};

/// A task on a longest path is critical; at wake-up time a child released by
/// a parent whose criticality exceeds its own by exactly 1 is on one.
inline bool is_critical_child(std::uint32_t parent_crit, std::uint32_t child_crit) {
  return parent_crit == child_crit + 1;
}

/// Static task-DAG structure. Immutable during execution; per-run mutable
/// state (dependency counters, placements) lives in ExecutionState.
class TaskGraph {
 public:
  NodeId add_node(TypeId type, std::uint32_t data_slot = 0) {
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(TaskNode{id, type, data_slot, 0, {}, {}});
    criticality_assigned_ = false;
    return id;
  }

  void add_edge(NodeId from, NodeId to) {
    if (from >= nodes_.size() || to >= nodes_.size() || from == to)
      throw DagError("bad edge " + std::to_string(from) + " -> " + std::to_string(to));
    nodes_[from].children.push_back(to);
    nodes_[to].parents.push_back(from);
    criticality_assigned_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const TaskNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<TaskNode>& nodes() const { return nodes_; }
  bool is_root(NodeId id) const { return nodes_.at(id).parents.empty(); }

  std::vector<NodeId> roots() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.parents.empty()) out.push_back(n.id);
    return out;
  }

  std::uint32_t num_types() const {
    std::uint32_t m = 0;
    for (const auto& n : nodes_) m = std::max(m, n.type + 1);
    return m == 0 ? 1 : m;
  }

  /// Memory slots per type: 1 + max slot index used by that type.
  std::vector<std::uint32_t> slot_counts(std::uint32_t num_types_hint = 0) const {
    std::vector<std::uint32_t> counts(std::max(num_types_hint, num_types()), 0);
    for (const auto& n : nodes_) counts[n.type] = std::max(counts[n.type], n.data_slot + 1);
    return counts;
  }

  /// Bottom-up pass: criticality = node count of the longest path to a sink.
  /// Throws on cycles.
  void assign_criticality() {
    std::vector<std::uint32_t> out_degree(nodes_.size());
    std::deque<NodeId> queue;
    for (const auto& n : nodes_) {
      out_degree[n.id] = static_cast<std::uint32_t>(n.children.size());
      if (n.children.empty()) queue.push_back(n.id);
    }
    std::size_t visited = 0;
    max_criticality_ = 0;
    while (!queue.empty()) {
      NodeId id = queue.front();
      queue.pop_front();
      ++visited;
      std::uint32_t best = 0;
      for (NodeId c : nodes_[id].children) best = std::max(best, nodes_[c].criticality);
      nodes_[id].criticality = best + 1;
      max_criticality_ = std::max(max_criticality_, best + 1);
      for (NodeId p : nodes_[id].parents)
        if (--out_degree[p] == 0) queue.push_back(p);
    }
    if (visited != nodes_.size()) throw DagError("cycle detected in task graph");
    criticality_assigned_ = true;
  }

  bool criticality_assigned() const { return criticality_assigned_; }

  std::uint32_t max_criticality() const {
    require_criticality();
    return max_criticality_;
  }

  /// Total tasks divided by the node count of one longest path.
  double avg_parallelism() const {
    require_criticality();
    if (nodes_.empty()) return 0.0;
    return static_cast<double>(nodes_.size()) / static_cast<double>(max_criticality_);
  }

 private:
  void require_criticality() const {
    if (!criticality_assigned_) throw DagError("criticality not assigned");
  }

  std::vector<TaskNode> nodes_;
  bool criticality_assigned_ = false;
  std::uint32_t max_criticality_ = 0;
};

struct ReadyTask {
  NodeId id;
  bool critical;
};

/// Per-run mutable state: dependency counters, wake-up criticality tags and
/// irrevocable placements. Counter decrements are atomic so completions can
/// race from any worker.
class ExecutionState {
 public:
  explicit ExecutionState(const TaskGraph& g)
      : graph_(&g),
        pending_(g.size()),
        completed_(g.size()),
        woken_critical_(g.size(), 0),
        placed_(g.size(), 0),
        placements_(g.size()) {
    if (!g.empty() && !g.criticality_assigned()) throw DagError("criticality not assigned");
    for (const auto& n : g.nodes()) {
      pending_[n.id].store(static_cast<std::uint32_t>(n.parents.size()), std::memory_order_relaxed);
      completed_[n.id].store(0, std::memory_order_relaxed);
    }
  }

  const TaskGraph& graph() const { return *graph_; }

  bool woken_critical(NodeId id) const { return woken_critical_[id] != 0; }

  /// Called exactly once per finished node; returns children whose last
  /// dependency this completion released, tagged against THIS parent.
  std::vector<ReadyTask> complete_and_wake(NodeId id) {
    if (completed_[id].exchange(1, std::memory_order_acq_rel) != 0)
      throw DagError("task " + std::to_string(id) + " completed twice");
    std::vector<ReadyTask> ready;
    const TaskNode& n = graph_->node(id);
    for (NodeId child : n.children) {
      std::uint32_t before = pending_[child].fetch_sub(1, std::memory_order_acq_rel);
      if (before == 0) throw DagError("dependency counter underflow at task " + std::to_string(child));
      if (before == 1) {
        bool crit = is_critical_child(n.criticality, graph_->node(child).criticality);
        woken_critical_[child] = crit ? 1 : 0;
        ready.push_back(ReadyTask{child, crit});
      }
    }
    completed_count_.fetch_add(1, std::memory_order_acq_rel);
    return ready;
  }

  std::size_t completed_count() const { return completed_count_.load(std::memory_order_acquire); }
  bool all_completed() const { return completed_count() == graph_->size(); }

  /// Placements are set exactly once.
  void set_placement(NodeId id, const Partition& p) {
    if (placed_[id]) throw DagError("task " + std::to_string(id) + " placed twice");
    placed_[id] = 1;
    placements_[id] = p;
  }

  bool placed(NodeId id) const { return placed_[id] != 0; }
  const Partition& placement(NodeId id) const {
    if (!placed_[id]) throw DagError("task " + std::to_string(id) + " not placed");
    return placements_[id];
  }

 private:
  const TaskGraph* graph_;
  std::vector<std::atomic<std::uint32_t>> pending_;
  std::vector<std::atomic<std::uint8_t>> completed_;
  std::vector<std::uint8_t> woken_critical_;
  std::vector<std::uint8_t> placed_;
  std::vector<Partition> placements_;
  std::atomic<std::size_t> completed_count_{0};
};

// --- text fixture format: `node <id> <type> <slot>` and `edge <from> <to>` ---

inline void write_dag(std::ostream& out, const TaskGraph& g) {
  out << "# task graph: " << g.size() << " nodes\n";
  for (const auto& n : g.nodes())
    out << "node " << n.id << ' ' << n.type << ' ' << n.data_slot << '\n';
  for (const auto& n : g.nodes())
    for (NodeId c : n.children) out << "edge " << n.id << ' ' << c << '\n';
}

inline TaskGraph read_dag(std::istream& in) {
  TaskGraph g;
  std::string line;
  int lineno = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  NodeId expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "node") {
      long long id = -1, type = -1, slot = 0;
      if (!(ls >> id >> type) || id < 0 || type < 0)
        throw DagError("line " + std::to_string(lineno) + ": expected 'node <id> <type> [slot]'");
      ls >> slot;
      if (static_cast<NodeId>(id) != expected)
        throw DagError("line " + std::to_string(lineno) + ": node ids must be dense and ascending");
      ++expected;
      g.add_node(static_cast<TypeId>(type), static_cast<std::uint32_t>(slot));
    } else if (word == "edge") {
      long long a = -1, b = -1;
      if (!(ls >> a >> b) || a < 0 || b < 0)
        throw DagError("line " + std::to_string(lineno) + ": expected 'edge <from> <to>'");
      edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    } else {
      throw DagError("line " + std::to_string(lineno) + ": unknown directive '" + word + "'");
    }
  }
  for (auto [a, b] : edges) g.add_edge(a, b);
  if (!g.empty()) g.assign_criticality();
  return g;
}

inline TaskGraph read_dag_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DagError("cannot open DAG file: " + path);
  return read_dag(f);
}

inline void write_dag_file(const std::string& path, const TaskGraph& g) {
  std::ofstream f(path);
  if (!f) throw DagError("cannot open DAG file for writing: " + path);
  write_dag(f, g);
}

}  // namespace esched
