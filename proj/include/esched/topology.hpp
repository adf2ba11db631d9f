#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace esched {

using CoreId = std::uint32_t;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

/// A run of consecutive core ids sharing a last-level cache.
struct CoreCluster {
  CoreId first_core = 0;
  std::uint32_t size = 0;
  std::string label;

  CoreId end() const { return first_core + size; }
  bool contains(CoreId c) const { return c >= first_core && c < end(); }
};

/// An aligned (leader, width) set of consecutive cores inside one cluster.
/// The leader is the smallest member id. Irrevocable once assigned to a task.
struct Partition {
  CoreId leader = 0;
  std::uint32_t width = 1;

  bool contains(CoreId c) const { return c >= leader && c < leader + width; }

  std::vector<CoreId> members() const {
    std::vector<CoreId> m(width);
    for (std::uint32_t i = 0; i < width; ++i) m[i] = leader + i;
    return m;
  }

  friend bool operator==(const Partition& a, const Partition& b) {
    return a.leader == b.leader && a.width == b.width;
  }
  friend bool operator!=(const Partition& a, const Partition& b) { return !(a == b); }
};

/// The machine as ordered clusters of consecutive cores. Immutable after
/// construction; shareable across workers without synchronization.
class Topology {
 public:
  explicit Topology(std::vector<CoreCluster> clusters) : clusters_(std::move(clusters)) {
    if (clusters_.empty()) throw TopologyError("topology has no clusters");
    std::sort(clusters_.begin(), clusters_.end(),
              [](const CoreCluster& a, const CoreCluster& b) { return a.first_core < b.first_core; });
    CoreId next = 0;
    for (const auto& c : clusters_) {
      if (c.size == 0) throw TopologyError("cluster '" + c.label + "' has zero cores");
      if (!is_power_of_two(c.size))
        throw TopologyError("cluster '" + c.label + "' at core " + std::to_string(c.first_core) +
                            " has non-power-of-two size " + std::to_string(c.size));
      if (c.first_core != next)
        throw TopologyError("cluster at core " + std::to_string(c.first_core) +
                            (c.first_core < next ? " overlaps previous cluster" : " leaves a core-id gap"));
      next = c.end();
    }
    total_cores_ = next;
    build_partitions();
  }

  static Topology single_cluster(std::uint32_t n, std::string label = "") {
    return Topology({CoreCluster{0, n, std::move(label)}});
  }

  std::uint32_t total_cores() const { return total_cores_; }
  const std::vector<CoreCluster>& clusters() const { return clusters_; }

  const CoreCluster& cluster_of(CoreId core) const {
    for (const auto& c : clusters_)
      if (c.contains(core)) return c;
    throw TopologyError("core " + std::to_string(core) + " outside topology");
  }

  /// All aligned power-of-two partitions, sorted by (width, leader).
  /// A cluster of N cores contributes 2N-1 of them.
  const std::vector<Partition>& valid_partitions() const { return partitions_; }

  bool is_legal_width(CoreId core, std::uint32_t width) const {
    const auto& c = cluster_of(core);
    return is_power_of_two(width) && width <= c.size;
  }

  /// The partition of `width` containing `core`, leader aligned within the
  /// cluster: leader = first + floor((core - first) / width) * width.
  Partition aligned_partition(CoreId core, std::uint32_t width) const {
    const auto& c = cluster_of(core);
    if (!is_power_of_two(width) || width > c.size)
      throw TopologyError("width " + std::to_string(width) + " illegal for cluster '" + c.label +
                          "' of size " + std::to_string(c.size));
    CoreId leader = c.first_core + ((core - c.first_core) / width) * width;
    return Partition{leader, width};
  }

  bool is_legal(const Partition& p) const {
    if (p.width == 0 || p.leader >= total_cores_) return false;
    const auto& c = cluster_of(p.leader);
    return is_power_of_two(p.width) && p.width <= c.size &&
           (p.leader - c.first_core) % p.width == 0 && p.leader + p.width <= c.end();
  }

  /// Widths for which `core` is an aligned leader, ascending. Always holds 1.
  std::vector<std::uint32_t> leader_widths(CoreId core) const {
    const auto& c = cluster_of(core);
    std::vector<std::uint32_t> out;
    for (std::uint32_t w = 1; w <= c.size; w *= 2)
      if ((core - c.first_core) % w == 0) out.push_back(w);
    return out;
  }

  /// Config format, one cluster per line: `cluster <first_core> <size> [label]`.
  /// `#` starts a comment.
  static Topology parse(std::istream& in) {
    std::vector<CoreCluster> clusters;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string word;
      if (!(ls >> word)) continue;
      if (word != "cluster")
        throw TopologyError("line " + std::to_string(lineno) + ": expected 'cluster', got '" + word + "'");
      long long first = -1, size = -1;
      if (!(ls >> first >> size) || first < 0 || size <= 0)
        throw TopologyError("line " + std::to_string(lineno) + ": expected 'cluster <first_core> <size> [label]'");
      std::string label;
      ls >> label;
      clusters.push_back(CoreCluster{static_cast<CoreId>(first), static_cast<std::uint32_t>(size), label});
    }
    return Topology(std::move(clusters));
  }

  static Topology parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw TopologyError("cannot open topology file: " + path);
    return parse(f);
  }

 private:
  void build_partitions() {
    for (const auto& c : clusters_)
      for (std::uint32_t w = 1; w <= c.size; w *= 2)
        for (CoreId leader = c.first_core; leader < c.end(); leader += w)
          partitions_.push_back(Partition{leader, w});
    std::sort(partitions_.begin(), partitions_.end(), [](const Partition& a, const Partition& b) {
      return a.width != b.width ? a.width < b.width : a.leader < b.leader;
    });
  }

  std::vector<CoreCluster> clusters_;
  std::uint32_t total_cores_ = 0;
  std::vector<Partition> partitions_;
};

}  // namespace esched
