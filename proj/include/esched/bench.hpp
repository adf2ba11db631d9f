#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "esched/dag.hpp"
#include "esched/daggen.hpp"
#include "esched/exec.hpp"
#include "esched/kernels.hpp"
#include "esched/simcore.hpp"
#include "esched/trace.hpp"

#include <nlohmann/json.hpp>

#if defined(__linux__)
#include <csignal>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>
#endif

namespace esched {

enum class Backend : std::uint8_t { Sim, Threads };

inline const char* to_string(Backend b) { return b == Backend::Sim ? "sim" : "threads"; }

class BenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Even three-kernel split of `total` tasks.
inline DagParams mixed_dag_params(std::uint32_t total, double parallelism, double edge_rate,
                                  std::uint64_t seed) {
  DagParams p;
  std::uint32_t third = total / 3;
  p.tasks_per_kernel[kMatmulType] = third;
  p.tasks_per_kernel[kSortType] = third;
  p.tasks_per_kernel[kCopyType] = total - 2 * third;
  p.avg_width = std::max(1.0, parallelism);
  p.edge_rate = edge_rate;
  p.seed = seed;
  return p;
}

struct BenchRunConfig {
  Backend backend = Backend::Sim;
  Topology topo = Topology::single_cluster(4);
  PlatformModel platform;        // sim
  DurationModel durations;       // sim
  double duration_noise = 0.0;   // sim: multiplicative sample jitter
  KernelSizes kernel_sizes;      // threads
  bool record_ptt_series = false;
};

inline RunReport run_backend(const BenchRunConfig& cfg, const TaskGraph& graph,
                             const SchedulerOptions& sched, std::uint64_t seed) {
  if (cfg.backend == Backend::Sim) {
    SimOptions opt;
    opt.sched = sched;
    opt.seed = seed;
    opt.record_ptt_series = cfg.record_ptt_series;
    return simulate(graph, cfg.topo, cfg.platform, cfg.durations, opt);
  }
  KernelRegistry reg = KernelRegistry::standard(cfg.kernel_sizes, seed);
  reg.prepare(graph);
  ExecOptions opt;
  opt.sched = sched;
  opt.seed = seed;
  opt.record_ptt_series = cfg.record_ptt_series;
  RunReport report = run_threads(graph, cfg.topo, reg, opt);
  std::string failure;
  if (!reg.verify_all(&failure)) throw BenchError(failure);
  return report;
}

// ---------------------------------------------------------------- heatmap --

struct HeatmapSpec {
  BenchRunConfig run;
  std::vector<std::uint32_t> task_counts{250, 500, 1000, 2000, 4000};
  std::vector<double> parallelisms{1, 2, 4, 8, 16};
  double edge_rate = 2.0;
  std::uint32_t repetitions = 1;
  std::uint64_t seed = 0;
};

struct HeatmapCell {
  std::uint32_t tasks = 0;
  double parallelism = 0;
  double perf_throughput = 0;
  double homog_throughput = 0;
  double speedup = 0;  // perf throughput over homogeneous throughput
  bool ok = false;
  std::string error;
};

struct HeatmapResult {
  std::vector<std::uint32_t> task_counts;
  std::vector<double> parallelisms;
  std::vector<HeatmapCell> cells;  // row-major over (parallelism, tasks)

  const HeatmapCell& at(std::size_t pi, std::size_t ti) const { return cells[pi * task_counts.size() + ti]; }
};

/// Throughput grid over task count x parallelism, both schedulers per cell.
/// Per-cell failures are recorded and the sweep continues.
inline HeatmapResult bench_heatmap(const HeatmapSpec& spec) {
  if (spec.task_counts.empty() || spec.parallelisms.empty()) throw BenchError("empty heatmap grid axis");
  HeatmapResult out;
  out.task_counts = spec.task_counts;
  out.parallelisms = spec.parallelisms;
  for (double par : spec.parallelisms) {
    for (std::uint32_t tasks : spec.task_counts) {
      HeatmapCell cell;
      cell.tasks = tasks;
      cell.parallelism = par;
      try {
        double perf_sum = 0, homog_sum = 0;
        for (std::uint32_t rep = 0; rep < std::max(1u, spec.repetitions); ++rep) {
          std::uint64_t seed = splitmix64(spec.seed ^ (tasks * 131ull + static_cast<std::uint64_t>(par * 8) +
                                                       rep * 1000003ull));
          TaskGraph g = generate_dag(mixed_dag_params(tasks, par, spec.edge_rate, seed));
          SchedulerOptions perf{SchedulerKind::Perf, 1, true, 2};
          SchedulerOptions homog{SchedulerKind::Homogeneous, 1, true, 2};
          perf_sum += run_backend(spec.run, g, perf, seed).throughput;
          homog_sum += run_backend(spec.run, g, homog, seed).throughput;
        }
        cell.perf_throughput = perf_sum / std::max(1u, spec.repetitions);
        cell.homog_throughput = homog_sum / std::max(1u, spec.repetitions);
        cell.speedup = cell.homog_throughput > 0 ? cell.perf_throughput / cell.homog_throughput : 0.0;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

/// Header row of task counts, then one row per parallelism level.
inline void write_heatmap_csv(std::ostream& os, const HeatmapResult& r,
                              double HeatmapCell::*field) {
  os << "parallelism";
  for (auto t : r.task_counts) os << ',' << t;
  os << '\n';
  for (std::size_t pi = 0; pi < r.parallelisms.size(); ++pi) {
    os << format_number(r.parallelisms[pi]);
    for (std::size_t ti = 0; ti < r.task_counts.size(); ++ti) {
      const auto& c = r.at(pi, ti);
      os << ',' << (c.ok ? format_number(c.*field) : std::string("nan"));
    }
    os << '\n';
  }
}

// ----------------------------------------------------------- interference --

struct InterferenceSpec {
  BenchRunConfig run;
  DagParams dag;
  SchedulerOptions sched{SchedulerKind::Perf, 1, true, 2};
  std::uint64_t seed = 0;
  // Windows for the placement-share summary; default derives from the first
  // platform episode.
  std::optional<double> window_start, window_end;
  // Threads backend: external antagonist command, pinned to these cores.
  std::string antagonist_cmd;
  CoreId antagonist_first = 0, antagonist_last = 0;
};

struct WindowShare {
  double t0 = 0, t1 = 0;
  std::size_t critical_total = 0;
  std::size_t critical_on_affected = 0;
  double share() const {
    return critical_total ? static_cast<double>(critical_on_affected) / critical_total : 0.0;
  }
};

struct InterferenceResult {
  RunReport report;
  CoreId affected_first = 0, affected_last = 0;
  WindowShare before, during, after;
};

/// Fraction of critical placements led by a core in [first, last] within
/// [t0, t1).
inline WindowShare critical_share(const RunReport& report, double t0, double t1, CoreId first,
                                  CoreId last) {
  WindowShare w;
  w.t0 = t0;
  w.t1 = t1;
  for (const auto& e : report.trace) {
    if (e.kind != TraceKind::Place || e.reason != PlaceReason::CriticalGlobal) continue;
    if (e.time < t0 || e.time >= t1) continue;
    ++w.critical_total;
    if (e.leader >= first && e.leader <= last) ++w.critical_on_affected;
  }
  return w;
}

#if defined(__linux__)
class AntagonistProcess {
 public:
  AntagonistProcess(const std::string& cmd, CoreId first, CoreId last) {
    pid_ = fork();
    if (pid_ < 0) throw BenchError("antagonist launch failed: fork");
    if (pid_ == 0) {
      cpu_set_t set;
      CPU_ZERO(&set);
      for (CoreId c = first; c <= last; ++c) CPU_SET(c, &set);
      sched_setaffinity(0, sizeof(set), &set);
      execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
  }

  ~AntagonistProcess() {
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

 private:
  pid_t pid_ = -1;
};
#endif

/// Timeline + PTT time series for the interference experiment; the summary
/// compares critical-placement shares before/during/after the episode.
inline InterferenceResult bench_interference(const InterferenceSpec& spec) {
  InterferenceResult out;
  BenchRunConfig cfg = spec.run;
  cfg.record_ptt_series = true;

  double w0 = spec.window_start.value_or(0), w1 = spec.window_end.value_or(0);
  if (cfg.backend == Backend::Sim) {
    if (cfg.platform.episodes().empty() && !spec.window_start)
      throw BenchError("interference on the sim backend needs a platform episode");
    if (!cfg.platform.episodes().empty()) {
      const auto& ep = cfg.platform.episodes().front();
      out.affected_first = ep.first_core;
      out.affected_last = ep.last_core;
      if (!spec.window_start) w0 = ep.start;
      if (!spec.window_end) w1 = ep.start + ep.duration;
    }
  } else {
    out.affected_first = spec.antagonist_first;
    out.affected_last = spec.antagonist_last;
  }

  TaskGraph g = generate_dag(spec.dag);
  if (cfg.backend == Backend::Threads && !spec.antagonist_cmd.empty()) {
#if defined(__linux__)
    AntagonistProcess antagonist(spec.antagonist_cmd, spec.antagonist_first, spec.antagonist_last);
    out.report = run_backend(cfg, g, spec.sched, spec.seed);
#else
    throw BenchError("antagonist processes need a Linux host");
#endif
  } else {
    out.report = run_backend(cfg, g, spec.sched, spec.seed);
  }

  double end = out.report.makespan;
  if (!(w1 > w0)) {
    w0 = end / 3;
    w1 = 2 * end / 3;
  }
  out.before = critical_share(out.report, 0, w0, out.affected_first, out.affected_last);
  out.during = critical_share(out.report, w0, w1, out.affected_first, out.affected_last);
  out.after = critical_share(out.report, w1, end + 1, out.affected_first, out.affected_last);
  return out;
}

/// One JSON object per placement: Fig-style dots of when and where tasks ran.
inline void write_timeline_jsonl(std::ostream& os, const RunReport& report) {
  for (const auto& e : report.trace) {
    if (e.kind != TraceKind::Place) continue;
    nlohmann::json j{{"time", e.time},       {"core", e.core},   {"task", e.task},
                     {"type", e.type},       {"leader", e.leader}, {"width", e.width},
                     {"reason", to_string(e.reason)}};
    os << j.dump() << '\n';
  }
}

/// Width-1 PTT samples for the affected cores over time.
inline void write_affected_ptt_series_csv(std::ostream& os, const RunReport& report, CoreId first,
                                          CoreId last) {
  os << "time,type,leader,width,value\n";
  for (const auto& s : report.ptt_series) {
    if (s.width != 1 || s.leader < first || s.leader > last) continue;
    os << format_number(s.time) << ',' << s.type << ',' << s.leader << ',' << s.width << ','
       << format_number(s.value) << '\n';
  }
}

// --------------------------------------------------------------- forkjoin --

struct ForkjoinSpec {
  Backend backend = Backend::Sim;
  std::uint32_t layers = 16;
  std::uint32_t tasks_per_layer = 32;
  std::vector<std::uint32_t> worker_counts{1, 2, 4, 8};
  DurationModel durations = DurationModel::ideal(0, 1.0);  // sim
  KernelSizes kernel_sizes;                                // threads
  double base_speed = 1.0;
  std::uint64_t seed = 0;
};

struct ForkjoinPoint {
  std::uint32_t workers = 0;
  double makespan = 0;
  double throughput = 0;
  double efficiency = 0;                       // T1 / (K * TK)
  std::map<std::uint32_t, double> width_pct;   // width -> % of placements
};

struct ForkjoinResult {
  std::vector<ForkjoinPoint> points;
};

/// Strong scaling of a layered fork-join graph over worker counts, plus the
/// histogram of widths the scheduler chose. Criticality is disabled for
/// these runs: behind an all-to-all layer barrier every task lies on a
/// longest path and global search would funnel them onto one partition, so
/// width selection is the behavior under study.
inline ForkjoinResult bench_forkjoin(const ForkjoinSpec& spec) {
  ForkjoinResult out;
  double t1 = 0;
  for (std::uint32_t workers : spec.worker_counts) {
    if (!is_power_of_two(workers)) throw BenchError("worker counts must be powers of two");
    TaskGraph g = layered_forkjoin(spec.layers, spec.tasks_per_layer, 0);
    Topology topo = Topology::single_cluster(workers);
    SchedulerOptions sched{SchedulerKind::Perf, 1, /*use_criticality=*/false, 2};
    BenchRunConfig cfg;
    cfg.backend = spec.backend;
    cfg.topo = topo;
    cfg.platform = PlatformModel::uniform(workers, spec.base_speed);
    cfg.durations = spec.durations;
    cfg.kernel_sizes = spec.kernel_sizes;
    RunReport report = run_backend(cfg, g, sched, spec.seed);

    ForkjoinPoint pt;
    pt.workers = workers;
    pt.makespan = report.makespan;
    pt.throughput = report.throughput;
    std::map<std::uint32_t, std::size_t> width_counts;
    std::size_t placements = 0;
    for (const auto& e : report.trace)
      if (e.kind == TraceKind::Place) {
        ++width_counts[e.width];
        ++placements;
      }
    for (auto& [w, c] : width_counts)
      pt.width_pct[w] = placements ? 100.0 * static_cast<double>(c) / placements : 0.0;
    if (workers == 1) t1 = pt.makespan;
    pt.efficiency = (t1 > 0 && pt.makespan > 0) ? t1 / (workers * pt.makespan) : 0.0;
    out.points.push_back(std::move(pt));
  }
  return out;
}

inline void write_forkjoin_scaling_csv(std::ostream& os, const ForkjoinResult& r) {
  os << "workers,makespan,throughput,efficiency\n";
  for (const auto& p : r.points)
    os << p.workers << ',' << format_number(p.makespan) << ',' << format_number(p.throughput) << ','
       << format_number(p.efficiency) << '\n';
}

inline void write_forkjoin_width_hist_csv(std::ostream& os, const ForkjoinResult& r) {
  os << "workers,width,percent\n";
  for (const auto& p : r.points)
    for (const auto& [w, pct] : p.width_pct)
      os << p.workers << ',' << w << ',' << format_number(pct) << '\n';
}

}  // namespace esched
