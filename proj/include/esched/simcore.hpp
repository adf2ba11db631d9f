#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "esched/dag.hpp"
#include "esched/ptt.hpp"
#include "esched/rng.hpp"
#include "esched/sched.hpp"
#include "esched/topology.hpp"
#include "esched/trace.hpp"

namespace esched {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Piecewise-constant core speed in work units per virtual second. Segments
/// cover [0, inf); the last one is open-ended.
class SpeedProfile {
 public:
  explicit SpeedProfile(double base_speed = 1.0) : points_{{0.0, base_speed}} {}

  double at(double t) const {
    std::size_t i = index_at(t);
    return points_[i].second;
  }

  /// Time of the next speed change strictly after t, or +inf.
  double next_change_after(double t) const {
    std::size_t i = index_at(t);
    if (i + 1 < points_.size()) return points_[i + 1].first;
    return std::numeric_limits<double>::infinity();
  }

  /// Replace everything from `start` on with a flat segment.
  void set_from(double start, double speed) {
    split_at(start);
    std::size_t i = index_at(start);
    points_.erase(points_.begin() + static_cast<std::ptrdiff_t>(i) + (points_[i].first == start ? 0 : 1),
                  points_.end());
    if (points_.empty() || points_.back().first < start)
      points_.push_back({start, speed});
    else
      points_.back().second = speed;
  }

  /// Divide the speed inside [start, end) by `factor`; factors compose
  /// multiplicatively across overlapping windows.
  void scale_window(double start, double end, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw SimError("slowdown factor must be finite and > 0");
    if (!(end > start)) return;
    split_at(start);
    if (std::isfinite(end)) split_at(end);
    for (auto& [t, s] : points_)
      if (t >= start && (t < end || !std::isfinite(end))) s /= factor;
  }

  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::size_t index_at(double t) const {
    std::size_t lo = 0, hi = points_.size();
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (points_[mid].first <= t) lo = mid;
      else hi = mid;
    }
    return lo;
  }

  void split_at(double t) {
    if (t <= 0.0) return;
    std::size_t i = index_at(t);
    if (points_[i].first == t) return;
    points_.insert(points_.begin() + static_cast<std::ptrdiff_t>(i) + 1, {t, points_[i].second});
  }

  std::vector<std::pair<double, double>> points_;  // (start_time, speed), sorted
};

/// Transient slowdown on a set of cores: speed is divided by `factor`
/// inside [start, start + duration).
struct InterferenceEpisode {
  CoreId first_core = 0;
  CoreId last_core = 0;  // inclusive
  double start = 0.0;
  double duration = 0.0;
  double factor = 1.0;
};

/// Per-core speed profiles plus injected interference episodes.
class PlatformModel {
 public:
  PlatformModel() = default;
  explicit PlatformModel(std::uint32_t cores, double base_speed = 1.0)
      : profiles_(cores, SpeedProfile(base_speed)) {}

  static PlatformModel uniform(std::uint32_t cores, double speed = 1.0) {
    return PlatformModel(cores, speed);
  }

  std::uint32_t cores() const { return static_cast<std::uint32_t>(profiles_.size()); }

  void set_base_speed(CoreId first, CoreId last, double speed) {
    ensure(last);
    for (CoreId c = first; c <= last; ++c) profiles_[c] = SpeedProfile(speed);
  }

  void add_segment(CoreId first, CoreId last, double start, double speed) {
    ensure(last);
    for (CoreId c = first; c <= last; ++c) profiles_[c].set_from(start, speed);
  }

  void inject_episode(const InterferenceEpisode& ep) {
    if (ep.last_core < ep.first_core) throw SimError("bad episode core range");
    ensure(ep.last_core);
    for (CoreId c = ep.first_core; c <= ep.last_core; ++c)
      profiles_[c].scale_window(ep.start, ep.start + ep.duration, ep.factor);
    episodes_.push_back(ep);
  }

  const SpeedProfile& profile(CoreId c) const {
    if (c >= profiles_.size()) throw SimError("core " + std::to_string(c) + " outside platform model");
    return profiles_[c];
  }

  const std::vector<InterferenceEpisode>& episodes() const { return episodes_; }

  double min_speed_at(const Partition& p, double t) const {
    double s = std::numeric_limits<double>::infinity();
    for (CoreId c = p.leader; c < p.leader + p.width; ++c) s = std::min(s, profile(c).at(t));
    return s;
  }

  double next_change_after(const Partition& p, double t) const {
    double n = std::numeric_limits<double>::infinity();
    for (CoreId c = p.leader; c < p.leader + p.width; ++c)
      n = std::min(n, profile(c).next_change_after(t));
    return n;
  }

  /// Earliest t1 with integral over [t0, t1] of min member speed == work.
  double finish_time(const Partition& p, double t0, double work) const {
    double t = t0;
    double remaining = work;
    for (;;) {
      double s = min_speed_at(p, t);
      double tn = next_change_after(p, t);
      if (s > 0.0) {
        double candidate = t + remaining / s;
        if (candidate <= tn) return candidate;
        remaining -= s * (tn - t);
        if (remaining < 0.0) remaining = 0.0;
      } else if (!std::isfinite(tn)) {
        throw SimError("zero-speed deadlock: partition (" + std::to_string(p.leader) + "," +
                       std::to_string(p.width) + ") stuck at t=" + std::to_string(t) +
                       " with pending work");
      }
      t = tn;
    }
  }

 private:
  void ensure(CoreId last) {
    if (last >= profiles_.size()) profiles_.resize(last + 1, SpeedProfile(1.0));
  }

  std::vector<SpeedProfile> profiles_;
  std::vector<InterferenceEpisode> episodes_;
};

/// Nominal work units for one task of a type at each width. The simulator
/// needs an explicit cost model where the real backend measures kernels.
class DurationModel {
 public:
  void set(TypeId type, std::uint32_t width, double work) {
    if (!(work > 0.0)) throw SimError("duration must be > 0");
    table_[key(type, width)] = work;
  }

  double work(TypeId type, std::uint32_t width) const {
    auto it = table_.find(key(type, width));
    if (it == table_.end())
      throw SimError("no duration for type " + std::to_string(type) + " width " + std::to_string(width));
    return it->second;
  }

  bool defined(TypeId type, std::uint32_t width) const { return table_.count(key(type, width)) != 0; }

  /// Per-kernel defaults shaped like the measured benchmark kernels:
  /// matmul nearly halves with width, sort stops gaining past four members,
  /// copy is bandwidth-bound and gains nothing.
  static DurationModel benchmark_defaults(std::uint32_t max_width = 16) {
    DurationModel m;
    for (std::uint32_t w = 1; w <= max_width; w *= 2) {
      m.set(0, w, 1.0 / w + 0.12);                                   // matmul-like
      m.set(1, w, 0.25 + 0.75 / std::min(w, 4u));                    // sort-like, parallelism 4
      m.set(2, w, 1.0);                                              // copy-like
    }
    return m;
  }

  /// Same ideal scaling at every width (work/width), for scaling studies.
  static DurationModel ideal(TypeId type, double work, std::uint32_t max_width = 16) {
    DurationModel m;
    for (std::uint32_t w = 1; w <= max_width; w *= 2) m.set(type, w, work / w);
    return m;
  }

  /// One flat duration for every width of one type.
  static DurationModel flat(TypeId type, double work, std::uint32_t max_width = 16) {
    DurationModel m;
    for (std::uint32_t w = 1; w <= max_width; w *= 2) m.set(type, w, work);
    return m;
  }

  /// Flat duration for every width of the first `num_types` types.
  static DurationModel flat_all(std::uint32_t num_types, double work, std::uint32_t max_width = 16) {
    DurationModel m;
    for (TypeId t = 0; t < num_types; ++t)
      for (std::uint32_t w = 1; w <= max_width; w *= 2) m.set(t, w, work);
    return m;
  }

  void merge(const DurationModel& other) {
    for (auto& [k, v] : other.table_) table_[k] = v;
  }

 private:
  static std::uint64_t key(TypeId type, std::uint32_t width) {
    return (static_cast<std::uint64_t>(type) << 32) | width;
  }
  std::map<std::uint64_t, double> table_;
};

/// Platform file: `speed <first>[-<last>] <value>`,
/// `segment <first>[-<last>] <start> <value>`,
/// `episode <first>[-<last>] <start> <duration> <factor>`,
/// `duration <type> <width> <work>`. `#` comments.
struct PlatformFile {
  PlatformModel platform;
  DurationModel durations;
  bool has_durations = false;
};

inline PlatformFile parse_platform(std::istream& in) {
  PlatformFile out;
  std::string line;
  int lineno = 0;
  auto parse_range = [&](const std::string& word) -> std::pair<CoreId, CoreId> {
    auto dash = word.find('-');
    try {
      if (dash == std::string::npos) {
        CoreId c = static_cast<CoreId>(std::stoul(word));
        return {c, c};
      }
      return {static_cast<CoreId>(std::stoul(word.substr(0, dash))),
              static_cast<CoreId>(std::stoul(word.substr(dash + 1)))};
    } catch (const std::exception&) {
      throw SimError("line " + std::to_string(lineno) + ": bad core range '" + word + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "speed") {
      std::string range;
      double v;
      if (!(ls >> range >> v)) throw SimError("line " + std::to_string(lineno) + ": expected 'speed <cores> <value>'");
      auto [a, b] = parse_range(range);
      out.platform.set_base_speed(a, b, v);
    } else if (word == "segment") {
      std::string range;
      double start, v;
      if (!(ls >> range >> start >> v))
        throw SimError("line " + std::to_string(lineno) + ": expected 'segment <cores> <start> <value>'");
      auto [a, b] = parse_range(range);
      out.platform.add_segment(a, b, start, v);
    } else if (word == "episode") {
      std::string range;
      InterferenceEpisode ep;
      if (!(ls >> range >> ep.start >> ep.duration >> ep.factor))
        throw SimError("line " + std::to_string(lineno) + ": expected 'episode <cores> <start> <duration> <factor>'");
      std::tie(ep.first_core, ep.last_core) = parse_range(range);
      out.platform.inject_episode(ep);
    } else if (word == "duration") {
      long long type, width;
      double work;
      if (!(ls >> type >> width >> work) || type < 0 || width <= 0)
        throw SimError("line " + std::to_string(lineno) + ": expected 'duration <type> <width> <work>'");
      out.durations.set(static_cast<TypeId>(type), static_cast<std::uint32_t>(width), work);
      out.has_durations = true;
    } else {
      throw SimError("line " + std::to_string(lineno) + ": unknown directive '" + word + "'");
    }
  }
  return out;
}

inline PlatformFile parse_platform_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw SimError("cannot open platform file: " + path);
  return parse_platform(f);
}

struct SimOptions {
  SchedulerOptions sched;
  std::uint64_t seed = 0;
  bool record_ptt_series = false;
  // multiplicative jitter on task work: w * (1 + noise * (u - 0.5) * 2)
  double duration_noise = 0.0;
};

/// Deterministic virtual-time backend. Runs the identical placement, wake
/// and steal policy code as the thread executor, single-threaded over an
/// event loop. A task placed on partition P starts once every member joined
/// and occupies all members until the work integral completes at the min
/// member speed. Identical (graph, platform, seed, scheduler) reproduce a
/// byte-identical trace.
class Simulator {
 public:
  Simulator(const TaskGraph& graph, Topology topo, PlatformModel platform, DurationModel durations,
            SimOptions opt, PttTable* shared_ptt = nullptr)
      : graph_(graph),
        topo_(std::move(topo)),
        platform_(std::move(platform)),
        durations_(std::move(durations)),
        opt_(opt),
        owned_ptt_(shared_ptt ? nullptr
                              : std::make_unique<PttTable>(std::max(1u, graph.num_types()), topo_)),
        ptt_(shared_ptt ? shared_ptt : owned_ptt_.get()) {
    if (platform_.cores() < topo_.total_cores())
      throw SimError("platform model covers fewer cores than the topology");
  }

  RunReport run() {
    const auto n_cores = topo_.total_cores();
    ExecutionState state(graph_);
    std::vector<WorkStealingQueue<NodeId>> wsqs(n_cores);
    std::vector<std::deque<NodeId>> aqs(n_cores);
    std::vector<Worker> workers(n_cores);
    std::vector<Rng> rngs;
    rngs.reserve(n_cores);
    for (CoreId c = 0; c < n_cores; ++c) rngs.push_back(Rng::stream(opt_.seed, c + 1));
    Rng service_rng = Rng::stream(opt_.seed, 0);
    Rng noise_rng = Rng::stream(opt_.seed, 0x7fffull);

    tasks_.assign(graph_.size(), SimTask{});
    RunReport report;
    report.tasks = graph_.size();

    // roots fan out round-robin, the default spawn policy
    {
      auto roots = graph_.roots();
      for (std::size_t i = 0; i < roots.size(); ++i) {
        CoreId c = static_cast<CoreId>(i % n_cores);
        wsqs[c].push(roots[i]);
        report.trace.push_back(TraceEvent{0.0, c, roots[i], graph_.node(roots[i]).type, TraceKind::Spawn,
                                          0, 0, PlaceReason::None});
      }
    }

    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;
    std::uint64_t seq = 0;
    double now = 0.0;

    auto start_if_assembled = [&](NodeId id, double t) {
      SimTask& st = tasks_[id];
      if (st.joined < st.partition.width) return;
      double work = durations_.work(graph_.node(id).type, st.partition.width);
      if (opt_.duration_noise > 0.0) work *= 1.0 + opt_.duration_noise * (noise_rng.unit() - 0.5) * 2.0;
      st.start = t;
      double end = platform_.finish_time(st.partition, t, work);
      for (CoreId m : st.partition.members()) workers[m].state = Worker::Running;
      events.push(Event{end, seq++, id});
      report.trace.push_back(TraceEvent{t, st.partition.leader, id, graph_.node(id).type, TraceKind::Start,
                                        st.partition.leader, st.partition.width, PlaceReason::None});
    };

    auto schedule_phase = [&](double t) {
      std::vector<CoreId> order(n_cores);
      std::iota(order.begin(), order.end(), 0);
      bool progress = true;
      while (progress) {
        progress = false;
        service_rng.shuffle(order);
        for (CoreId c : order) {
          Worker& w = workers[c];
          if (w.state != Worker::Idle) continue;
          if (!aqs[c].empty()) {
            NodeId id = aqs[c].front();
            aqs[c].pop_front();
            ++report.counters.aq_pops;
            SimTask& st = tasks_[id];
            ++st.joined;
            w.state = Worker::Joined;
            w.current = id;
            start_if_assembled(id, t);
            progress = true;
            continue;
          }
          auto got = obtain_task(wsqs, c, rngs[c], opt_.sched.steal_attempt_factor, &report.counters);
          if (!got) continue;
          NodeId id = got->task;
          const TaskNode& node = graph_.node(id);
          auto choice = choose_placement(state.woken_critical(id), graph_.is_root(id), node.type, c,
                                         *ptt_, topo_, opt_.sched);
          state.set_placement(id, choice.partition);
          tasks_[id].partition = choice.partition;
          ++report.counters.placements;
          report.trace.push_back(TraceEvent{t, c, id, node.type, TraceKind::Place,
                                            choice.partition.leader, choice.partition.width, choice.reason});
          for (CoreId m : choice.partition.members()) {
            aqs[m].push_back(id);
            ++report.counters.aq_pushes;
          }
          progress = true;
        }
      }
    };

    schedule_phase(now);
    while (state.completed_count() < graph_.size()) {
      if (events.empty())
        throw SimError("simulation stalled with " +
                       std::to_string(graph_.size() - state.completed_count()) + " tasks pending");
      Event ev = events.top();
      events.pop();
      now = ev.time;
      commit(ev.task, now, state, wsqs, workers, report);
      schedule_phase(now);
    }

    for (CoreId c = 0; c < n_cores; ++c)
      if (!aqs[c].empty()) throw SimError("assembly queue ref outlived completion");

    report.makespan = now;
    report.throughput = report.makespan > 0.0 ? static_cast<double>(report.tasks) / report.makespan : 0.0;
    report.final_ptt = ptt_->snapshot();
    report.critical_tag.resize(graph_.size());
    for (NodeId id = 0; id < graph_.size(); ++id)
      report.critical_tag[id] = state.woken_critical(id) ? 1 : 0;
    return report;
  }

 private:
  struct Event {
    double time;
    std::uint64_t seq;
    NodeId task;
    friend bool operator>(const Event& a, const Event& b) {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  struct Worker {
    enum State { Idle, Joined, Running } state = Idle;
    NodeId current = 0;
  };

  struct SimTask {
    Partition partition;
    std::uint32_t joined = 0;
    double start = 0.0;
  };

  void commit(NodeId id, double t, ExecutionState& state, std::vector<WorkStealingQueue<NodeId>>& wsqs,
              std::vector<Worker>& workers, RunReport& report) {
    SimTask& st = tasks_[id];
    const TaskNode& node = graph_.node(id);
    for (CoreId m : st.partition.members()) workers[m].state = Worker::Idle;
    double sample = t - st.start;
    double value = ptt_->update(node.type, st.partition, sample);
    if (opt_.record_ptt_series)
      report.ptt_series.push_back(PttSample{t, node.type, st.partition.leader, st.partition.width, value});
    report.trace.push_back(TraceEvent{t, st.partition.leader, id, node.type, TraceKind::Commit,
                                      st.partition.leader, st.partition.width, PlaceReason::None});
    for (const ReadyTask& r : state.complete_and_wake(id)) {
      wsqs[st.partition.leader].push(r.id);
      report.trace.push_back(TraceEvent{t, st.partition.leader, r.id, graph_.node(r.id).type,
                                        TraceKind::Spawn, 0, 0, PlaceReason::None});
    }
  }

  const TaskGraph& graph_;
  Topology topo_;
  PlatformModel platform_;
  DurationModel durations_;
  SimOptions opt_;
  std::unique_ptr<PttTable> owned_ptt_;
  PttTable* ptt_;
  std::vector<SimTask> tasks_;
};

inline RunReport simulate(const TaskGraph& graph, const Topology& topo, const PlatformModel& platform,
                          const DurationModel& durations, const SimOptions& opt,
                          PttTable* shared_ptt = nullptr) {
  Simulator sim(graph, topo, platform, durations, opt, shared_ptt);
  return sim.run();
}

}  // namespace esched
