#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "esched/dag.hpp"
#include "esched/rng.hpp"

namespace esched {

struct DagParams {
  std::map<TypeId, std::uint32_t> tasks_per_kernel;  // type -> count
  double avg_width = 1.0;                            // steers average parallelism
  double edge_rate = 1.0;                            // average out-degree
  std::uint64_t seed = 0;

  std::uint32_t total_tasks() const {
    std::uint32_t n = 0;
    for (auto& [t, c] : tasks_per_kernel) n += c;
    return n;
  }
};

/// Nodes-and-edges skeleton, kept apart from task creation so memory slots
/// can be assigned in between.
struct DagShape {
  std::vector<TypeId> type_of;                        // per node
  std::vector<std::vector<NodeId>> children;          // per node, forward edges only
  std::vector<std::vector<NodeId>> parents;
  std::vector<std::uint32_t> layer_of;

  std::size_t size() const { return type_of.size(); }
};

/// Layered shape sampler. Node count / layer count tracks avg_width; a spine
/// chain threads one node per layer so the longest path is exactly the layer
/// count and parallelism lands on avg_width. Every other node links to
/// ~edge_rate nodes in later layers with some layer skipping, which keeps
/// most nodes off full-depth paths the way irregular task graphs are.
inline DagShape generate_shape(const DagParams& params) {
  if (params.avg_width < 1.0) throw std::invalid_argument("avg_width must be >= 1");
  if (params.edge_rate < 0.0) throw std::invalid_argument("edge_rate must be >= 0");
  DagShape shape;
  const std::uint32_t n = params.total_tasks();
  if (n == 0) return shape;

  Rng rng(params.seed);
  const auto layers = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(std::llround(static_cast<double>(n) / params.avg_width)));

  // one node per layer, remaining spread at random
  std::vector<std::uint32_t> layer_sizes(layers, 1);
  for (std::uint32_t extra = n - layers; extra > 0; --extra) ++layer_sizes[rng.below(layers)];

  shape.type_of.resize(n);
  shape.children.resize(n);
  shape.parents.resize(n);
  shape.layer_of.resize(n);
  std::vector<std::uint32_t> layer_first(layers + 1, 0);
  {
    NodeId id = 0;
    for (std::uint32_t l = 0; l < layers; ++l) {
      layer_first[l] = id;
      for (std::uint32_t k = 0; k < layer_sizes[l]; ++k) shape.layer_of[id++] = l;
    }
    layer_first[layers] = id;
  }

  // shuffled kernel-type multiset
  {
    std::vector<TypeId> types;
    types.reserve(n);
    for (auto& [t, c] : params.tasks_per_kernel)
      for (std::uint32_t i = 0; i < c; ++i) types.push_back(t);
    rng.shuffle(types);
    shape.type_of = std::move(types);
  }

  auto add_edge = [&](NodeId u, NodeId v) {
    for (NodeId c : shape.children[u])
      if (c == v) return;
    shape.children[u].push_back(v);
    shape.parents[v].push_back(u);
  };

  auto pick_in_layer = [&](std::uint32_t l) {
    return layer_first[l] + rng.below(layer_first[l + 1] - layer_first[l]);
  };

  // spine: one node per layer chained through, pinning the critical path
  {
    NodeId prev = pick_in_layer(0);
    for (std::uint32_t l = 1; l < layers; ++l) {
      NodeId cur = pick_in_layer(l);
      add_edge(prev, cur);
      prev = cur;
    }
  }

  const auto base_degree = static_cast<std::uint32_t>(params.edge_rate);
  const double frac_degree = params.edge_rate - base_degree;
  for (NodeId u = 0; u < n; ++u) {
    std::uint32_t l = shape.layer_of[u];
    if (l + 1 >= layers) continue;
    std::uint32_t degree = base_degree + (rng.unit() < frac_degree ? 1 : 0);
    for (std::uint32_t e = 0; e < degree; ++e) {
      // half the edges hit the next layer, the rest skip a few
      std::uint32_t max_skip = std::min<std::uint32_t>(6, layers - l - 1);
      std::uint32_t tl = (max_skip <= 1 || rng.below(2) == 0) ? l + 1 : l + 1 + rng.below(max_skip);
      add_edge(u, pick_in_layer(tl));
    }
  }
  // connectivity fix-up: orphaned nodes get a parent a few layers up
  for (NodeId v = layer_first[1]; v < n; ++v) {
    if (!shape.parents[v].empty()) continue;
    std::uint32_t l = shape.layer_of[v];
    std::uint32_t pl = l - std::min<std::uint32_t>(l, 1 + rng.below(4));
    add_edge(pick_in_layer(pl), v);
  }
  return shape;
}

struct SlotAssignment {
  std::vector<std::uint32_t> slot_of;        // per node
  std::vector<std::uint32_t> slots_per_type; // final reuse-vector length per kernel
};

namespace detail {

/// Ancestor bitsets in node-id (topological) order.
class AncestorSet {
 public:
  explicit AncestorSet(const DagShape& shape)
      : n_(shape.size()), words_((n_ + 63) / 64), bits_(n_ * words_, 0) {
    for (NodeId v = 0; v < n_; ++v)
      for (NodeId p : shape.parents[v]) {
        std::uint64_t* row = &bits_[v * words_];
        const std::uint64_t* prow = &bits_[p * words_];
        for (std::size_t w = 0; w < words_; ++w) row[w] |= prow[w];
        row[p / 64] |= 1ull << (p % 64);
      }
  }

  bool is_ancestor(NodeId maybe_ancestor, NodeId of) const {
    return (bits_[of * words_ + maybe_ancestor / 64] >> (maybe_ancestor % 64)) & 1u;
  }

 private:
  std::size_t n_, words_;
  std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// Data-reuse walk: per kernel type a vector of node ids, one per memory
/// slot. Each node scans the vector for an entry that is one of its
/// (transitive) predecessors; on a match it takes over that slot, otherwise
/// a fresh slot is appended. Tasks sharing a slot end up dependency-ordered,
/// parallel tasks get isolated data.
inline SlotAssignment assign_data_slots(const DagShape& shape) {
  SlotAssignment out;
  out.slot_of.resize(shape.size(), 0);
  if (shape.size() == 0) return out;

  detail::AncestorSet ancestors(shape);
  TypeId max_type = 0;
  for (TypeId t : shape.type_of) max_type = std::max(max_type, t);
  std::vector<std::vector<NodeId>> reuse(max_type + 1);

  for (NodeId v = 0; v < shape.size(); ++v) {
    auto& vec = reuse[shape.type_of[v]];
    bool matched = false;
    for (std::uint32_t i = 0; i < vec.size(); ++i) {
      if (ancestors.is_ancestor(vec[i], v)) {
        vec[i] = v;
        out.slot_of[v] = i;
        matched = true;
        break;
      }
    }
    if (!matched) {
      out.slot_of[v] = static_cast<std::uint32_t>(vec.size());
      vec.push_back(v);
    }
  }
  out.slots_per_type.resize(reuse.size());
  for (std::size_t t = 0; t < reuse.size(); ++t)
    out.slots_per_type[t] = static_cast<std::uint32_t>(reuse[t].size());
  return out;
}

/// Spawn the tasks: shape + slots to a TaskGraph with criticality assigned.
inline TaskGraph build_graph(const DagShape& shape, const SlotAssignment& slots) {
  TaskGraph g;
  for (NodeId v = 0; v < shape.size(); ++v) g.add_node(shape.type_of[v], slots.slot_of[v]);
  for (NodeId v = 0; v < shape.size(); ++v)
    for (NodeId c : shape.children[v]) g.add_edge(v, c);
  if (!g.empty()) g.assign_criticality();
  return g;
}

inline TaskGraph generate_dag(const DagParams& params) {
  DagShape shape = generate_shape(params);
  SlotAssignment slots = assign_data_slots(shape);
  return build_graph(shape, slots);
}

/// Layered fork-join benchmark graph: `layers` ranks of `width` same-type
/// tasks with an all-to-all barrier between consecutive ranks.
inline TaskGraph layered_forkjoin(std::uint32_t layers, std::uint32_t width, TypeId type = 0) {
  TaskGraph g;
  std::vector<NodeId> prev, cur;
  for (std::uint32_t l = 0; l < layers; ++l) {
    cur.clear();
    // slot per column: the inter-layer barrier orders same-slot tasks
    for (std::uint32_t i = 0; i < width; ++i) cur.push_back(g.add_node(type, i));
    for (NodeId p : prev)
      for (NodeId c : cur) g.add_edge(p, c);
    prev = cur;
  }
  if (!g.empty()) g.assign_criticality();
  return g;
}

}  // namespace esched
