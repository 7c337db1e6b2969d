#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gapsroute/shortest_paths.hpp"
#include "gapsroute/topology.hpp"

namespace gapsroute {

// Deterministic next-hop table, one entry per (node, destination).
class StaticRoutingTable {
 public:
  StaticRoutingTable() = default;
  explicit StaticRoutingTable(const DistanceTable& dt) : n_(dt.node_count()), hop_(n_ * n_) {
    for (NodeId x = 0; x < n_; ++x) {
      for (NodeId d = 0; d < n_; ++d) hop_[x * n_ + d] = dt.next_hop(x, d);
    }
  }

  std::size_t node_count() const { return n_; }
  std::optional<NodeId> next_hop(NodeId node, NodeId dest) const { return hop_[node * n_ + dest]; }

  friend bool operator==(const StaticRoutingTable&, const StaticRoutingTable&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::optional<NodeId>> hop_;
};

// "Best": unit-cost shortest paths, fixed for the run.
inline StaticRoutingTable best_policy(const Topology& t) {
  return StaticRoutingTable(shortest_paths(t));
}

// "Bestload": entering node v costs 1 + queue_lengths[v], including the
// destination's own queue.
inline StaticRoutingTable bestload_recompute(const Topology& t,
                                             std::span<const std::size_t> queue_lengths) {
  if (queue_lengths.size() != t.node_count()) {
    throw std::invalid_argument("queue_lengths must cover every node");
  }
  return StaticRoutingTable(shortest_paths(t, [&](NodeId, NodeId to) {
    return 1.0 + static_cast<double>(queue_lengths[to]);
  }));
}

// Q-routing estimates: q(x, d, a) is the expected time from x handing a
// packet for d to its link a until that packet is delivered.
class QTable {
 public:
  QTable() = default;
  QTable(const Topology& t, double learning_rate)
      : n_(t.node_count()), learning_rate_(learning_rate), offset_(n_ + 1, 0) {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
      throw std::invalid_argument("Q-routing learning rate must be in (0, 1]");
    }
    for (NodeId x = 0; x < n_; ++x) offset_[x + 1] = offset_[x] + t.degree(x);
    q_.assign(offset_[n_] * n_, 0.0);  // optimistic start
  }

  double learning_rate() const { return learning_rate_; }
  std::size_t degree(NodeId x) const { return offset_[x + 1] - offset_[x]; }

  double& at(NodeId x, NodeId d, LinkIndex a) { return q_[index(x, d, a)]; }
  double at(NodeId x, NodeId d, LinkIndex a) const { return q_[index(x, d, a)]; }

  // Smallest estimate over `available` links of x; zero when x is d.
  double best_remaining(NodeId x, NodeId d, std::span<const LinkIndex> available) const {
    if (x == d) return 0.0;
    double best = kInfinity;
    for (const LinkIndex a : available) best = std::min(best, at(x, d, a));
    return best;
  }

 private:
  std::size_t index(NodeId x, NodeId d, LinkIndex a) const {
    return (offset_[x] + a) * n_ + d;
  }

  std::size_t n_ = 0;
  double learning_rate_ = 0.5;
  std::vector<std::size_t> offset_;
  std::vector<double> q_;
};

// Greedy link choice; ties go to the lowest link index, which is the lowest
// neighbor id.
inline LinkIndex qrouting_select(const QTable& q, NodeId x, NodeId d,
                                 std::span<const LinkIndex> available) {
  if (available.empty()) throw std::invalid_argument("empty available action set");
  LinkIndex best = available.front();
  for (const LinkIndex a : available) {
    if (q.at(x, d, a) < q.at(x, d, best)) best = a;
  }
  return best;
}

inline void qrouting_update(QTable& q, NodeId x, NodeId d, LinkIndex a, double queue_time,
                            double transmission_cost, double best_remaining) {
  if (!std::isfinite(queue_time) || !std::isfinite(transmission_cost) ||
      !std::isfinite(best_remaining)) {
    throw std::invalid_argument("non-finite Q-routing update input");
  }
  double& estimate = q.at(x, d, a);
  estimate += q.learning_rate() * (queue_time + transmission_cost + best_remaining - estimate);
}

}  // namespace gapsroute
