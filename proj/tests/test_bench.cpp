#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "esched/bench.hpp"
#include "test_util.hpp"

#include <nlohmann/json.hpp>

using namespace esched;
using namespace esched::testutil;

namespace {

BenchRunConfig two_class_sim() {
  BenchRunConfig cfg;
  cfg.backend = Backend::Sim;
  cfg.topo = Topology({CoreCluster{0, 2, "fast"}, CoreCluster{2, 4, "slow"}});
  cfg.platform = PlatformModel(6, 1.0);
  cfg.platform.set_base_speed(0, 1, 2.0);
  cfg.durations = DurationModel::benchmark_defaults();
  return cfg;
}

}  // namespace

TEST_CASE("heatmap grid dimensions are preserved") {
  HeatmapSpec spec;
  spec.run = two_class_sim();
  spec.task_counts = {40, 80};
  spec.parallelisms = {1, 4};
  spec.seed = 3;
  HeatmapResult r = bench_heatmap(spec);
  REQUIRE(r.cells.size() == 4);
  for (const auto& c : r.cells) {
    INFO(c.error);
    CHECK(c.ok);
    CHECK(c.perf_throughput > 0);
    CHECK(c.homog_throughput > 0);
  }

  std::ostringstream csv;
  write_heatmap_csv(csv, r, &HeatmapCell::speedup);
  std::istringstream lines(csv.str());
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 3);  // header + one row per parallelism level
  CHECK(csv.str().rfind("parallelism,40,80\n", 0) == 0);
}

TEST_CASE("empty grid axes are rejected") {
  HeatmapSpec spec;
  spec.run = two_class_sim();
  spec.task_counts = {};
  CHECK_THROWS_AS(bench_heatmap(spec), BenchError);
}

TEST_CASE("per-cell failures are recorded without stopping the sweep") {
  HeatmapSpec spec;
  spec.run = two_class_sim();
  spec.run.durations = DurationModel::flat(0, 1.0);  // types 1,2 missing
  spec.task_counts = {30};
  spec.parallelisms = {2};
  HeatmapResult r = bench_heatmap(spec);
  REQUIRE(r.cells.size() == 1);
  CHECK_FALSE(r.cells[0].ok);
  CHECK(r.cells[0].error.find("no duration") != std::string::npos);
}

TEST_CASE("low-parallelism DAGs on a two-class platform favor the perf scheduler") {
  HeatmapSpec spec;
  spec.run = two_class_sim();
  spec.task_counts = {250};
  spec.parallelisms = {1};
  spec.repetitions = 3;
  spec.seed = 11;
  HeatmapResult r = bench_heatmap(spec);
  REQUIRE(r.cells[0].ok);
  CHECK(r.cells[0].speedup > 1.0);
}

TEST_CASE("uniform platform with width-1-optimal work leaves no headroom") {
  HeatmapSpec spec;
  spec.run.backend = Backend::Sim;
  spec.run.topo = Topology::single_cluster(4);
  spec.run.platform = PlatformModel::uniform(4);
  // width-1 strictly optimal in time x width
  DurationModel dm;
  for (TypeId t = 0; t < 3; ++t)
    for (std::uint32_t w = 1; w <= 4; w *= 2) dm.set(t, w, 1.0 / w + 0.2);
  spec.run.durations = dm;
  spec.task_counts = {400};
  spec.parallelisms = {8};
  spec.repetitions = 3;
  spec.seed = 17;
  HeatmapResult r = bench_heatmap(spec);
  REQUIRE(r.cells[0].ok);
  CHECK(r.cells[0].speedup == Catch::Approx(1.0).epsilon(0.25));
}

TEST_CASE("interference run shifts critical work off the affected cores") {
  // critical chain plus same-type side work; episode slows the fast pair 10x
  TaskGraph g = chain_with_side_tasks(600, 7, 0);
  Topology topo({CoreCluster{0, 2, "fast"}, CoreCluster{2, 8, "slow"}});
  PlatformModel pm(10, 1.0);
  pm.set_base_speed(0, 1, 2.0);
  pm.inject_episode(InterferenceEpisode{0, 1, 200.0, 120.0, 10.0});
  DurationModel dm;
  dm.set(0, 1, 1.0);
  dm.set(0, 2, 0.52);
  dm.set(0, 4, 0.28);
  dm.set(0, 8, 0.16);

  SimOptions opt;
  opt.seed = 2;
  opt.record_ptt_series = true;
  RunReport r = simulate(g, topo, pm, dm, opt);
  REQUIRE_FALSE(audit_run(g, topo, r).has_value());

  WindowShare before = critical_share(r, 100.0, 200.0, 0, 1);  // post-transient
  WindowShare during = critical_share(r, 200.0, 320.0, 0, 1);
  WindowShare after = critical_share(r, 360.0, r.makespan + 1, 0, 1);
  INFO("before " << before.share() << " during " << during.share() << " after " << after.share());
  REQUIRE(before.critical_total > 20);
  REQUIRE(during.critical_total > 20);
  REQUIRE(after.critical_total > 20);
  CHECK(before.share() > 0.9);
  CHECK(during.share() < 0.2);
  CHECK(after.share() > 0.5);
  CHECK_FALSE(r.ptt_series.empty());
}

TEST_CASE("bench_interference derives windows from the platform episode") {
  InterferenceSpec spec;
  spec.run.backend = Backend::Sim;
  spec.run.topo = Topology({CoreCluster{0, 2, "fast"}, CoreCluster{2, 4, "slow"}});
  spec.run.platform = PlatformModel(6, 1.0);
  spec.run.platform.set_base_speed(0, 1, 2.0);
  spec.run.platform.inject_episode(InterferenceEpisode{0, 1, 40.0, 30.0, 8.0});
  spec.run.durations = DurationModel::benchmark_defaults();
  spec.dag = mixed_dag_params(600, 6.0, 2.0, 21);
  spec.seed = 2;
  InterferenceResult r = bench_interference(spec);
  CHECK(r.affected_first == 0);
  CHECK(r.affected_last == 1);
  CHECK(r.during.t0 == 40.0);
  CHECK(r.during.t1 == 70.0);
  CHECK(r.before.critical_total + r.during.critical_total + r.after.critical_total > 0);
  CHECK_FALSE(r.report.ptt_series.empty());
}

TEST_CASE("timeline JSON lines parse back") {
  InterferenceSpec spec;
  spec.run.backend = Backend::Sim;
  spec.run.topo = Topology::single_cluster(4);
  spec.run.platform = PlatformModel::uniform(4);
  spec.run.platform.inject_episode(InterferenceEpisode{0, 0, 5.0, 5.0, 4.0});
  spec.run.durations = DurationModel::benchmark_defaults();
  spec.dag = mixed_dag_params(90, 3.0, 1.5, 4);
  InterferenceResult r = bench_interference(spec);

  std::ostringstream os;
  write_timeline_jsonl(os, r.report);
  std::istringstream lines(os.str());
  std::string line;
  std::size_t parsed = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("time"));
    CHECK(j.contains("leader"));
    CHECK(j.contains("width"));
    CHECK(j.at("reason").is_string());
    ++parsed;
  }
  CHECK(parsed == r.report.tasks);

  std::ostringstream ptt;
  write_affected_ptt_series_csv(ptt, r.report, 0, 0);
  std::istringstream pl(ptt.str());
  std::getline(pl, line);
  CHECK(line == "time,type,leader,width,value");
  double prev = -1;
  while (std::getline(pl, line)) {
    double t = std::stod(line.substr(0, line.find(',')));
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("forkjoin scaling, efficiency and width histogram") {
  ForkjoinSpec spec;
  spec.backend = Backend::Sim;
  spec.layers = 12;
  spec.tasks_per_layer = 64;
  spec.worker_counts = {1, 2, 4, 8};
  spec.durations = DurationModel::ideal(0, 1.0);
  ForkjoinResult r = bench_forkjoin(spec);
  REQUIRE(r.points.size() == 4);
  CHECK(r.points[0].workers == 1);
  CHECK(r.points[0].efficiency == Catch::Approx(1.0));
  for (const auto& pt : r.points) {
    double total = 0;
    for (auto& [w, pct] : pt.width_pct) total += pct;
    CHECK(total == Catch::Approx(100.0));
  }
  // ideal scaling: eight workers keep at least the reference efficiency
  CHECK(r.points[3].workers == 8);
  INFO("efficiency at 8 workers: " << r.points[3].efficiency);
  CHECK(r.points[3].efficiency >= 0.69);

  std::ostringstream scaling;
  write_forkjoin_scaling_csv(scaling, r);
  CHECK(scaling.str().rfind("workers,makespan,throughput,efficiency\n", 0) == 0);
  std::ostringstream hist;
  write_forkjoin_width_hist_csv(hist, r);
  CHECK(hist.str().rfind("workers,width,percent\n", 0) == 0);
}

TEST_CASE("experiments rerun bit-identically from their spec") {
  InterferenceSpec spec;
  spec.run.backend = Backend::Sim;
  spec.run.topo = Topology::single_cluster(4);
  spec.run.platform = PlatformModel::uniform(4);
  spec.run.platform.inject_episode(InterferenceEpisode{0, 1, 10.0, 10.0, 5.0});
  spec.run.durations = DurationModel::benchmark_defaults();
  spec.dag = mixed_dag_params(200, 4.0, 2.0, 9);
  spec.seed = 44;
  InterferenceResult a = bench_interference(spec);
  InterferenceResult b = bench_interference(spec);
  CHECK(trace_to_string(a.report) == trace_to_string(b.report));
}
