#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "esched/topology.hpp"

namespace esched {

using TypeId = std::uint32_t;

struct PttEntry {
  TypeId type = 0;
  CoreId leader = 0;
  std::uint32_t width = 1;
  double value = 0.0;
};

/// Online per-task-type latency model over (leader core, width) pairs.
///
/// Entries start at zero, which models "untrained": a zero entry has the
/// minimal time*width product and therefore wins every search until it has
/// been visited once, so all configuration pairs get explored.
///
/// Each new sample folds in as (4*old + sample) / 5 by default; the weights
/// are a knob. Writes to a (leader, width) cell must come from the leader's
/// worker only; readers may see stale values, never torn ones.
class PttTable {
 public:
  PttTable(std::size_t num_types, Topology topology, double old_weight = 4.0, double new_weight = 1.0)
      : topo_(std::move(topology)), num_types_(num_types), old_weight_(old_weight), new_weight_(new_weight) {
    if (num_types == 0) throw std::invalid_argument("PttTable needs at least one task type");
    if (old_weight < 0 || new_weight <= 0) throw std::invalid_argument("bad PTT smoothing weights");
    // Rows grouped per core: slot (type, core, log2(width)).
    core_offset_.reserve(topo_.total_cores() + 1);
    std::size_t off = 0;
    for (CoreId c = 0; c < topo_.total_cores(); ++c) {
      core_offset_.push_back(off);
      off += width_slots(topo_.cluster_of(c).size);
    }
    core_offset_.push_back(off);
    per_type_ = off;
    cells_ = std::vector<std::atomic<double>>(per_type_ * num_types_);
    for (auto& c : cells_) c.store(0.0, std::memory_order_relaxed);
  }

  const Topology& topology() const { return topo_; }
  std::size_t num_types() const { return num_types_; }

  /// Trainable cells per task type: sum over clusters of 2N-1.
  std::size_t trainable_entries() const { return topo_.valid_partitions().size(); }

  double value(TypeId type, const Partition& p) const {
    return cell(type, p).load(std::memory_order_relaxed);
  }

  /// Weighted update by the partition leader. Returns the new value.
  double update(TypeId type, const Partition& p, double sample) {
    if (!(sample >= 0.0))
      throw std::invalid_argument("negative PTT sample for type " + std::to_string(type));
    auto& c = cell(type, p);
    double old = c.load(std::memory_order_relaxed);
    double next = (old_weight_ * old + new_weight_ * sample) / (old_weight_ + new_weight_);
    c.store(next, std::memory_order_relaxed);
    return next;
  }

  /// Fixture/preload hook; bypasses smoothing.
  void set(TypeId type, const Partition& p, double v) {
    cell(type, p).store(v, std::memory_order_relaxed);
  }

  /// Best (leader, width) over all trainable entries of `type`, minimizing
  /// value * width. Untrained entries win (product 0). Ties break to the
  /// smaller width, then the smaller leader id.
  Partition global_search(TypeId type) const {
    const auto& parts = topo_.valid_partitions();
    Partition best = parts.front();
    double best_product = std::numeric_limits<double>::infinity();
    for (const auto& p : parts) {
      double product = value(type, p) * p.width;
      if (product < best_product) {
        best_product = product;
        best = p;
      }
    }
    return best;
  }

  /// Best width among partitions led by `core`, same objective and
  /// tie-breaking as the global search. Width 1 is always a candidate.
  Partition local_width_search(TypeId type, CoreId core) const {
    Partition best{core, 1};
    double best_product = std::numeric_limits<double>::infinity();
    for (std::uint32_t w : topo_.leader_widths(core)) {
      Partition p{core, w};
      double product = value(type, p) * w;
      if (product < best_product) {
        best_product = product;
        best = p;
      }
    }
    return best;
  }

  /// Read-only copy of the trainable cells; tolerates concurrent writers.
  std::vector<PttEntry> snapshot() const {
    std::vector<PttEntry> out;
    out.reserve(num_types_ * trainable_entries());
    for (TypeId t = 0; t < num_types_; ++t)
      for (const auto& p : topo_.valid_partitions())
        out.push_back(PttEntry{t, p.leader, p.width, value(t, p)});
    return out;
  }

  void load(const std::vector<PttEntry>& entries) {
    for (const auto& e : entries) set(e.type, Partition{e.leader, e.width}, e.value);
  }

 private:
  static std::uint32_t width_slots(std::uint32_t cluster_size) {
    std::uint32_t n = 0;
    for (std::uint32_t w = 1; w <= cluster_size; w *= 2) ++n;
    return n;
  }

  static std::uint32_t width_index(std::uint32_t width) {
    std::uint32_t i = 0;
    while ((1u << i) < width) ++i;
    return i;
  }

  const std::atomic<double>& cell(TypeId type, const Partition& p) const {
    if (type >= num_types_) throw std::out_of_range("task type out of range");
    if (!topo_.is_legal(p)) throw TopologyError("illegal partition for PTT cell");
    return cells_[type * per_type_ + core_offset_[p.leader] + width_index(p.width)];
  }
  std::atomic<double>& cell(TypeId type, const Partition& p) {
    return const_cast<std::atomic<double>&>(static_cast<const PttTable*>(this)->cell(type, p));
  }

  Topology topo_;
  std::size_t num_types_;
  double old_weight_, new_weight_;
  std::vector<std::size_t> core_offset_;
  std::size_t per_type_ = 0;
  std::vector<std::atomic<double>> cells_;
};

}  // namespace esched
