#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "esched/dag.hpp"
#include "esched/ptt.hpp"
#include "esched/rng.hpp"
#include "esched/topology.hpp"
#include "esched/trace.hpp"

namespace esched {

enum class SchedulerKind : std::uint8_t { Perf, Homogeneous };

inline const char* to_string(SchedulerKind k) {
  return k == SchedulerKind::Perf ? "perf" : "homogeneous";
}

struct SchedulerOptions {
  SchedulerKind kind = SchedulerKind::Perf;
  // Homogeneous baseline: fixed width, no PTT consultation.
  std::uint32_t homogeneous_width = 1;
  // When false every task is treated as non-critical (fork-join mode).
  bool use_criticality = true;
  // Steal attempts per round = factor * core count.
  std::uint32_t steal_attempt_factor = 2;
};

/// Per-core ready-task deque: the owner pushes and pops at the back, thieves
/// steal from the front.
template <typename T>
class WorkStealingQueue {
 public:
  void push(T v) {
    std::lock_guard<std::mutex> lock(mu_);
    q_.push_back(std::move(v));
  }

  bool try_pop(T& out) {
    std::lock_guard<std::mutex> lock(mu_);
    if (q_.empty()) return false;
    out = std::move(q_.back());
    q_.pop_back();
    return true;
  }

  bool try_steal(T& out) {
    std::lock_guard<std::mutex> lock(mu_);
    if (q_.empty()) return false;
    out = std::move(q_.front());
    q_.pop_front();
    return true;
  }

  bool empty() const {
    std::lock_guard<std::mutex> lock(mu_);
    return q_.empty();
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return q_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<T> q_;
};

/// Per-core FIFO of refs to placed tasks awaiting elastic execution.
/// Multi-producer, single consumer (the owning core).
template <typename T>
class AssemblyQueue {
 public:
  void push(T v) {
    std::lock_guard<std::mutex> lock(mu_);
    q_.push_back(std::move(v));
  }

  bool try_pop(T& out) {
    std::lock_guard<std::mutex> lock(mu_);
    if (q_.empty()) return false;
    out = std::move(q_.front());
    q_.pop_front();
    return true;
  }

  bool empty() const {
    std::lock_guard<std::mutex> lock(mu_);
    return q_.empty();
  }

 private:
  mutable std::mutex mu_;
  std::deque<T> q_;
};

struct PlacementChoice {
  Partition partition;
  PlaceReason reason;
};

/// The placement policy, shared verbatim by the thread and simulator
/// backends. Critical tasks search the whole PTT; non-critical and initial
/// tasks only size their width at the worker's own core. The homogeneous
/// baseline ignores the PTT and pins the configured width at the worker.
inline PlacementChoice choose_placement(bool woken_critical, bool is_root, TypeId type, CoreId worker,
                                        const PttTable& ptt, const Topology& topo,
                                        const SchedulerOptions& opt) {
  bool critical = woken_critical && opt.use_criticality && !is_root;
  PlaceReason reason = is_root ? PlaceReason::InitialLocal
                               : (critical ? PlaceReason::CriticalGlobal : PlaceReason::NoncriticalLocal);
  if (opt.kind == SchedulerKind::Homogeneous) {
    std::uint32_t w = 1;
    std::uint32_t cap = topo.cluster_of(worker).size;
    while (w * 2 <= opt.homogeneous_width && w * 2 <= cap) w *= 2;
    return PlacementChoice{topo.aligned_partition(worker, w), reason};
  }
  if (critical) return PlacementChoice{ptt.global_search(type), reason};
  return PlacementChoice{ptt.local_width_search(type, worker), reason};
}

struct TaskAcquisition {
  NodeId task = 0;
  bool stolen = false;
};

/// Pop the worker's own queue, else try bounded random steals. Also shared
/// by both backends; the rng draws make simulated steal order deterministic.
inline std::optional<TaskAcquisition> obtain_task(std::vector<WorkStealingQueue<NodeId>>& wsqs,
                                                  CoreId self, Rng& rng, std::uint32_t attempt_factor,
                                                  RunCounters* counters = nullptr) {
  NodeId task;
  if (wsqs[self].try_pop(task)) return TaskAcquisition{task, false};
  const auto n = static_cast<std::uint32_t>(wsqs.size());
  if (n <= 1) return std::nullopt;
  std::uint32_t attempts = attempt_factor * n;
  for (std::uint32_t i = 0; i < attempts; ++i) {
    CoreId victim = rng.below(n - 1);
    if (victim >= self) ++victim;
    if (counters) ++counters->steal_attempts;
    if (wsqs[victim].try_steal(task)) {
      if (counters) ++counters->steals;
      return TaskAcquisition{task, true};
    }
  }
  return std::nullopt;
}

}  // namespace esched
