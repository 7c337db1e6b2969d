#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "gapsroute/topology.hpp"

namespace gapsroute {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// All-pairs costs plus a first-step table. dist(n, d) is the cheapest cost of
// moving a packet from n to d over up links; next_hop(n, d) is the neighbor to
// forward to, absent when d is unreachable or n == d.
class DistanceTable {
 public:
  DistanceTable() = default;
  explicit DistanceTable(std::size_t n)
      : n_(n), dist_(n * n, kInfinity), next_(n * n, kNone) {}

  std::size_t node_count() const { return n_; }
  double dist(NodeId from, NodeId to) const { return dist_[from * n_ + to]; }
  bool reachable(NodeId from, NodeId to) const { return dist(from, to) < kInfinity; }

  std::optional<NodeId> next_hop(NodeId from, NodeId to) const {
    const NodeId h = next_[from * n_ + to];
    if (h == kNone) return std::nullopt;
    return h;
  }

  void set(NodeId from, NodeId to, double d, std::optional<NodeId> hop) {
    dist_[from * n_ + to] = d;
    next_[from * n_ + to] = hop.value_or(kNone);
  }

  friend bool operator==(const DistanceTable&, const DistanceTable&) = default;

 private:
  static constexpr NodeId kNone = std::numeric_limits<NodeId>::max();
  std::size_t n_ = 0;
  std::vector<double> dist_;
  std::vector<NodeId> next_;
};

// Cost of sending a packet across the link from `from` to `to`.
using ArcCost = std::function<double(NodeId from, NodeId to)>;

inline double unit_cost(NodeId, NodeId) { return 1.0; }

// Dijkstra rooted at every destination over reversed arcs, so dist(n, d) is
// exactly min over neighbors y of cost(n, y) + dist(y, d). That keeps the
// next-hop argmin exact in floating point. Ties go to the lowest neighbor id.
inline DistanceTable shortest_paths(const Topology& t, const ArcCost& cost = unit_cost) {
  const std::size_t n = t.node_count();
  DistanceTable table(n);
  std::vector<double> to_dest(n);
  using Entry = std::pair<double, NodeId>;

  for (NodeId d = 0; d < n; ++d) {
    std::fill(to_dest.begin(), to_dest.end(), kInfinity);
    to_dest[d] = 0.0;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
    frontier.emplace(0.0, d);
    while (!frontier.empty()) {
      const auto [dy, y] = frontier.top();
      frontier.pop();
      if (dy > to_dest[y]) continue;
      for (const NodeId x : t.neighbors(y)) {
        const double candidate = cost(x, y) + dy;
        if (candidate < to_dest[x]) {
          to_dest[x] = candidate;
          frontier.emplace(candidate, x);
        }
      }
    }

    for (NodeId x = 0; x < n; ++x) {
      if (x == d || to_dest[x] == kInfinity) {
        table.set(x, d, to_dest[x], std::nullopt);
        continue;
      }
      std::optional<NodeId> hop;
      for (const NodeId y : t.neighbors(x)) {  // ascending neighbor id
        if (to_dest[y] < kInfinity && cost(x, y) + to_dest[y] == to_dest[x]) {
          hop = y;
          break;
        }
      }
      table.set(x, d, to_dest[x], hop);
    }
  }
  return table;
}

}  // namespace gapsroute
