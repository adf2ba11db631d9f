#pragma once

#include <atomic>
#include <cassert>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "esched/dag.hpp"
#include "esched/kernels.hpp"
#include "esched/ptt.hpp"
#include "esched/rng.hpp"
#include "esched/sched.hpp"
#include "esched/topology.hpp"
#include "esched/trace.hpp"

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

namespace esched {

inline void cpu_pause() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#else
  std::this_thread::yield();
#endif
}

/// Spin helper that degrades to yielding, so waiters cannot starve the
/// threads they wait for on oversubscribed hosts.
class SpinWait {
 public:
  void spin() {
    if (++count_ % 256 == 0)
      std::this_thread::yield();
    else
      cpu_pause();
  }

 private:
  std::uint32_t count_ = 0;
};

inline bool pin_current_thread(CoreId core) {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core, &set);
  return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
  (void)core;
  return false;
#endif
}

struct StageCounters {
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
};

/// One member's pass over a task's stages: claim chunk indices until the
/// stage is exhausted, then hold at the stage boundary until in-flight
/// chunks land. Chunk coverage is exact: every index claimed once.
inline void elastic_member_pass(KernelInstance& kernel, std::vector<StageCounters>& stages,
                                const std::atomic<bool>* abort = nullptr) {
  for (std::size_t s = 0; s < kernel.stage_count(); ++s) {
    auto& st = stages[s];
    const std::size_t count = kernel.stage_chunks(s);
    for (;;) {
      if (abort && abort->load(std::memory_order_relaxed)) return;
      std::size_t i = st.next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) break;
      kernel.run_chunk(s, i);
      st.done.fetch_add(1, std::memory_order_release);
    }
    SpinWait waiter;
    while (st.done.load(std::memory_order_acquire) < count) {
      if (abort && abort->load(std::memory_order_relaxed)) return;
      waiter.spin();
    }
  }
}

struct ExecOptions {
  SchedulerOptions sched;
  std::uint64_t seed = 0;
  bool pin_threads = true;
  bool record_ptt_series = false;
};

/// Real-thread backend: one pinned worker per core runs the shared scheduler
/// policy, executes elastic kernels, and trains the PTT with measured wall
/// time. Placement is irrevocable; assembly-queue inserts are totally
/// ordered so partition barriers cannot cross-block.
class ThreadExecutor {
 public:
  ThreadExecutor(const TaskGraph& graph, Topology topo, KernelRegistry& kernels, ExecOptions opt,
                 PttTable* shared_ptt = nullptr)
      : graph_(graph),
        topo_(std::move(topo)),
        kernels_(kernels),
        opt_(opt),
        owned_ptt_(shared_ptt ? nullptr
                              : std::make_unique<PttTable>(std::max(1u, graph.num_types()), topo_)),
        ptt_(shared_ptt ? shared_ptt : owned_ptt_.get()) {}

  RunReport run() {
    const auto n_cores = topo_.total_cores();
    ExecutionState state(graph_);
    state_ = &state;
    wsqs_ = std::vector<WorkStealingQueue<NodeId>>(n_cores);
    aqs_ = std::vector<AssemblyQueue<ElasticTask*>>(n_cores);
    worker_counters_.assign(n_cores, RunCounters{});
    rngs_.clear();
    for (CoreId c = 0; c < n_cores; ++c) rngs_.push_back(Rng::stream(opt_.seed, c + 1));

    tasks_ = std::vector<ElasticTask>(graph_.size());
    for (NodeId id = 0; id < graph_.size(); ++id) {
      const TaskNode& n = graph_.node(id);
      tasks_[id].node = id;
      tasks_[id].kernel = kernels_.instance(n.type, n.data_slot);
      tasks_[id].stages = std::vector<StageCounters>(tasks_[id].kernel->stage_count());
    }

    trace_.clear();
    ptt_series_.clear();
    done_.store(graph_.empty());
    failed_.store(false);
    start_ = std::chrono::steady_clock::now();

    {
      auto roots = graph_.roots();
      for (std::size_t i = 0; i < roots.size(); ++i) {
        CoreId c = static_cast<CoreId>(i % n_cores);
        wsqs_[c].push(roots[i]);
        emit(TraceEvent{0.0, c, roots[i], graph_.node(roots[i]).type, TraceKind::Spawn, 0, 0,
                        PlaceReason::None});
      }
    }

    std::vector<std::thread> threads;
    threads.reserve(n_cores);
    for (CoreId c = 0; c < n_cores; ++c) threads.emplace_back([this, c] { worker_main(c); });
    for (auto& t : threads) t.join();

    if (failed_.load()) throw std::runtime_error(failure_);

    RunReport report;
    report.tasks = state.completed_count();
    for (const auto& c : worker_counters_) {
      report.counters.placements += c.placements;
      report.counters.steals += c.steals;
      report.counters.steal_attempts += c.steal_attempts;
      report.counters.aq_pushes += c.aq_pushes;
      report.counters.aq_pops += c.aq_pops;
    }
    {
      ElasticTask* leftover;
      for (auto& q : aqs_)
        if (q.try_pop(leftover)) throw std::logic_error("assembly queue ref outlived completion");
    }
    std::stable_sort(trace_.begin(), trace_.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.time < b.time; });
    report.trace = std::move(trace_);
    for (const auto& e : report.trace)
      if (e.kind == TraceKind::Commit) report.makespan = std::max(report.makespan, e.time);
    report.throughput = report.makespan > 0.0 ? static_cast<double>(report.tasks) / report.makespan : 0.0;
    report.final_ptt = ptt_->snapshot();
    report.ptt_series = std::move(ptt_series_);
    report.critical_tag.resize(graph_.size());
    for (NodeId id = 0; id < graph_.size(); ++id) report.critical_tag[id] = state.woken_critical(id) ? 1 : 0;
    state_ = nullptr;
    return report;
  }

  const PttTable& ptt() const { return *ptt_; }

 private:
  struct ElasticTask {
    NodeId node = 0;
    KernelInstance* kernel = nullptr;
    Partition partition;
    std::vector<StageCounters> stages;
    std::atomic<std::uint32_t> entered{0};
    std::atomic<std::uint32_t> exited{0};
    std::atomic<std::int64_t> start_ns{0};
  };

  double now_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  std::int64_t now_ns() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

  void emit(TraceEvent e) {
    std::lock_guard<std::mutex> lock(trace_mu_);
    trace_.push_back(e);
  }

  void fail(NodeId node, const std::string& what) {
    {
      std::lock_guard<std::mutex> lock(trace_mu_);
      if (failure_.empty()) failure_ = "task " + std::to_string(node) + " failed: " + what;
    }
    failed_.store(true, std::memory_order_release);
    park_cv_.notify_all();
  }

  void worker_main(CoreId core) {
    if (opt_.pin_threads && !pin_current_thread(core)) {
      if (!pin_warned_.exchange(true))
        std::cerr << "warning: could not pin worker to core " << core
                  << " (continuing unpinned)\n";
    }
    while (!done_.load(std::memory_order_acquire) && !failed_.load(std::memory_order_acquire)) {
      ElasticTask* tk = nullptr;
      if (aqs_[core].try_pop(tk)) {
        ++worker_counters_[core].aq_pops;
        participate(*tk, core);
        continue;
      }
      auto got = obtain_task(wsqs_, core, rngs_[core], opt_.sched.steal_attempt_factor,
                             &worker_counters_[core]);
      if (got) {
        place_and_insert(got->task, core);
        continue;
      }
      std::unique_lock<std::mutex> lock(park_mu_);
      park_cv_.wait_for(lock, std::chrono::microseconds(200), [this] {
        return done_.load(std::memory_order_acquire) || failed_.load(std::memory_order_acquire);
      });
    }
  }

  void place_and_insert(NodeId id, CoreId core) {
    const TaskNode& node = graph_.node(id);
    auto choice = choose_placement(state_->woken_critical(id), graph_.is_root(id), node.type, core,
                                   *ptt_, topo_, opt_.sched);
    ElasticTask& tk = tasks_[id];
    tk.partition = choice.partition;
    double t = now_s();
    {
      // One placement commits all its AQ inserts before the next begins, so
      // every AQ sees placements in the same order and partition barriers
      // always drain in placement order.
      std::lock_guard<std::mutex> lock(place_mu_);
      state_->set_placement(id, choice.partition);
      for (CoreId m : choice.partition.members()) {
        aqs_[m].push(&tk);
        ++worker_counters_[core].aq_pushes;
      }
    }
    ++worker_counters_[core].placements;
    emit(TraceEvent{t, core, id, node.type, TraceKind::Place, choice.partition.leader,
                    choice.partition.width, choice.reason});
    park_cv_.notify_all();
  }

  void participate(ElasticTask& tk, CoreId core) {
    const TaskNode& node = graph_.node(tk.node);
    if (tk.entered.fetch_add(1, std::memory_order_acq_rel) == 0) {
      tk.start_ns.store(now_ns(), std::memory_order_release);
      emit(TraceEvent{static_cast<double>(tk.start_ns.load()) * 1e-9, core, tk.node, node.type,
                      TraceKind::Start, tk.partition.leader, tk.partition.width, PlaceReason::None});
    }
    try {
      elastic_member_pass(*tk.kernel, tk.stages, &failed_);
    } catch (const std::exception& e) {
      fail(tk.node, e.what());
    } catch (...) {
      fail(tk.node, "unknown kernel error");
    }
    tk.exited.fetch_add(1, std::memory_order_acq_rel);
    if (core != tk.partition.leader) return;

    // leader commit: wait out the members, stop the clock, train, wake
    SpinWait waiter;
    while (tk.exited.load(std::memory_order_acquire) < tk.partition.width) {
      if (failed_.load(std::memory_order_acquire)) return;
      waiter.spin();
    }
    if (failed_.load(std::memory_order_acquire)) return;
    double t1 = now_s();
    double sample = t1 - static_cast<double>(tk.start_ns.load(std::memory_order_acquire)) * 1e-9;
    if (sample < 0.0) sample = 0.0;
    assert(core == tk.partition.leader);
    double value = ptt_->update(node.type, tk.partition, sample);
    if (opt_.record_ptt_series) {
      std::lock_guard<std::mutex> lock(trace_mu_);
      ptt_series_.push_back(PttSample{t1, node.type, tk.partition.leader, tk.partition.width, value});
    }
    emit(TraceEvent{t1, core, tk.node, node.type, TraceKind::Commit, tk.partition.leader,
                    tk.partition.width, PlaceReason::None});
    for (const ReadyTask& r : state_->complete_and_wake(tk.node)) {
      wsqs_[core].push(r.id);
      emit(TraceEvent{now_s(), core, r.id, graph_.node(r.id).type, TraceKind::Spawn, 0, 0,
                      PlaceReason::None});
    }
    if (state_->completed_count() == graph_.size()) done_.store(true, std::memory_order_release);
    park_cv_.notify_all();
  }

  const TaskGraph& graph_;
  Topology topo_;
  KernelRegistry& kernels_;
  ExecOptions opt_;
  std::unique_ptr<PttTable> owned_ptt_;
  PttTable* ptt_;

  ExecutionState* state_ = nullptr;
  std::vector<WorkStealingQueue<NodeId>> wsqs_;
  std::vector<AssemblyQueue<ElasticTask*>> aqs_;
  std::vector<ElasticTask> tasks_;
  std::vector<Rng> rngs_;
  std::vector<RunCounters> worker_counters_;

  std::mutex place_mu_;
  std::mutex trace_mu_;
  std::vector<TraceEvent> trace_;
  std::vector<PttSample> ptt_series_;
  std::string failure_;

  std::mutex park_mu_;
  std::condition_variable park_cv_;
  std::atomic<bool> done_{false};
  std::atomic<bool> failed_{false};
  std::atomic<bool> pin_warned_{false};
  std::chrono::steady_clock::time_point start_;
};

/// Convenience wrapper matching the simulator entry point.
inline RunReport run_threads(const TaskGraph& graph, const Topology& topo, KernelRegistry& kernels,
                             const ExecOptions& opt, PttTable* shared_ptt = nullptr) {
  ThreadExecutor ex(graph, topo, kernels, opt, shared_ptt);
  return ex.run();
}

}  // namespace esched
