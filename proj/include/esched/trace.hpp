#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "esched/dag.hpp"
#include "esched/ptt.hpp"
#include "esched/topology.hpp"

namespace esched {

enum class TraceKind : std::uint8_t { Spawn, Place, Start, Commit };

enum class PlaceReason : std::uint8_t { CriticalGlobal, NoncriticalLocal, InitialLocal, None };

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Spawn: return "spawn";
    case TraceKind::Place: return "place";
    case TraceKind::Start: return "start";
    case TraceKind::Commit: return "commit";
  }
  return "?";
}

inline const char* to_string(PlaceReason r) {
  switch (r) {
    case PlaceReason::CriticalGlobal: return "critical-global";
    case PlaceReason::NoncriticalLocal: return "noncritical-local";
    case PlaceReason::InitialLocal: return "initial-local";
    case PlaceReason::None: return "";
  }
  return "?";
}

/// One timestamped scheduling/execution record. Leader and width are the
/// task's partition once known (Place onward); reason is set on Place rows.
struct TraceEvent {
  double time = 0.0;
  CoreId core = 0;  // the worker the event happened on
  NodeId task = 0;
  TypeId type = 0;
  TraceKind kind = TraceKind::Spawn;
  CoreId leader = 0;
  std::uint32_t width = 0;
  PlaceReason reason = PlaceReason::None;
};

struct PttSample {
  double time = 0.0;
  TypeId type = 0;
  CoreId leader = 0;
  std::uint32_t width = 1;
  double value = 0.0;
};

struct RunCounters {
  std::uint64_t placements = 0;
  std::uint64_t steals = 0;
  std::uint64_t steal_attempts = 0;
  std::uint64_t aq_pushes = 0;
  std::uint64_t aq_pops = 0;
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct RunReport {
  double makespan = 0.0;
  std::size_t tasks = 0;
  double throughput = 0.0;  // tasks per (virtual) second
  RunCounters counters;
  std::vector<TraceEvent> trace;
  std::vector<PttEntry> final_ptt;
  std::vector<PttSample> ptt_series;
  std::vector<std::uint8_t> critical_tag;  // per node, as woken

  void write_trace_csv(std::ostream& out) const {
    out << "time,core,task,type,event,leader,width,reason\n";
    for (const auto& e : trace) {
      out << format_number(e.time) << ',' << e.core << ',' << e.task << ',' << e.type << ','
          << to_string(e.kind) << ',';
      if (e.kind == TraceKind::Spawn)
        out << ",,";
      else
        out << e.leader << ',' << e.width << ',' << to_string(e.reason);
      out << '\n';
    }
  }

  void write_ptt_series_csv(std::ostream& out) const {
    out << "time,type,leader,width,value\n";
    for (const auto& s : ptt_series)
      out << format_number(s.time) << ',' << s.type << ',' << s.leader << ',' << s.width << ','
          << format_number(s.value) << '\n';
  }
};

inline void write_ptt_snapshot_csv(std::ostream& out, const std::vector<PttEntry>& snap, double timestamp) {
  out << "type,leader,width,value,timestamp\n";
  for (const auto& e : snap)
    out << e.type << ',' << e.leader << ',' << e.width << ',' << format_number(e.value) << ','
        << format_number(timestamp) << '\n';
}

}  // namespace esched
