#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gapsroute/policy.hpp"
#include "gapsroute/topology.hpp"

namespace gapsroute {

using Rng = std::mt19937_64;
using Time = std::uint64_t;

inline constexpr std::size_t kTraceCapacity = 8;

// A forwarding decision, tagged with the node that made it.
struct Decision {
  NodeId node = 0;
  DecisionEntry entry;
};

struct Packet {
  std::size_t id = 0;
  NodeId origin = 0;
  NodeId destination = 0;
  Time created_at = 0;
  Time last_service_at = 0;
  std::size_t hops = 0;
  std::size_t revisits = 0;       // arrivals at a node already in the trace
  std::vector<NodeId> trace;      // most recent last, at most kTraceCapacity
  NodeId location = 0;            // current node, or link target while in flight
  std::vector<NodeId> handlers;   // every forwarding node, when recorded
  std::vector<Decision> decisions;

  void visit(NodeId n) {
    if (std::find(trace.begin(), trace.end(), n) != trace.end()) ++revisits;
    if (trace.size() == kTraceCapacity) trace.erase(trace.begin());
    trace.push_back(n);
    location = n;
  }
};

enum class Terminal : std::uint8_t {
  kDelivered,
  kDiscarded,  // hop limit exceeded or no route
  kDropped,    // arrived at a full queue mid-route
};

struct RewardEvent {
  std::size_t packet_id = 0;
  Terminal terminal = Terminal::kDelivered;
  double reward = 0.0;
  Time elapsed = 0;
  Time completed_at = 0;
  double terminal_penalty = 0.0;  // discard penalty folded into reward, else 0
  std::size_t revisits = 0;       // loop revisits folded into reward
  double loop_penalty = 0.0;      // charged per revisit
};

struct Metrics {
  std::size_t injected = 0;
  std::size_t delivered = 0;
  std::size_t discarded = 0;
  std::size_t dropped = 0;  // full queue, at injection or mid-route
  double total_delivery_time = 0.0;

  // Only terminations completing after the warmup boundary.
  Time measure_after = 0;
  std::size_t measured_delivered = 0;
  std::size_t measured_discarded = 0;
  std::size_t measured_dropped = 0;
  double measured_delivery_time = 0.0;

  std::size_t max_delivered_hops = 0;

  std::optional<double> average_delivery_time() const {
    if (measured_delivered == 0) return std::nullopt;
    return measured_delivery_time / static_cast<double>(measured_delivered);
  }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct SimConfig {
  std::size_t queue_capacity = 1000;
  std::uint64_t seed = 1;
  double loop_penalty = 1.0;
};

class Simulator;

// Per-network routing logic. One instance serves every node of one simulation.
class RoutingAgent {
 public:
  virtual ~RoutingAgent() = default;

  // Link of `node` to forward `p` on, chosen from `available`; nullopt means
  // no route and the packet is discarded.
  virtual std::optional<LinkIndex> select(const Simulator& sim, NodeId node, const Packet& p,
                                          std::span<const LinkIndex> available, Rng& rng) = 0;

  // Whether packets must carry their decision history for on_reward.
  virtual bool records_decisions() const { return false; }

  // Packets for which this returns false are discarded at injection.
  virtual bool routable(NodeId /*origin*/, NodeId /*destination*/) const { return true; }

  virtual void on_forward(const Simulator&, NodeId /*node*/, const Packet&, LinkIndex) {}
  virtual void on_terminal(const Simulator&, const RewardEvent&, const Packet&) {}
  // One call per node that forwarded the packet, with that node's decisions.
  virtual void on_reward(NodeId /*node*/, const RewardEvent&, const TrajectoryRecord&) {}
};

struct NodeRecord {
  NodeId node = 0;
  TrajectoryRecord record;
};

// Splits a terminated packet's decision log into one record per handling node,
// in order of each node's first decision. Throws when a handler has no logged
// decision.
inline std::vector<NodeRecord> distribute_reward(const RewardEvent& e,
                                                 std::span<const NodeId> handlers,
                                                 std::span<const Decision> decisions) {
  std::vector<NodeRecord> out;
  for (const Decision& d : decisions) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const NodeRecord& r) { return r.node == d.node; });
    if (it == out.end()) {
      out.push_back({d.node, {e.packet_id, {}}});
      it = out.end() - 1;
    }
    if (!it->record.entries.empty() && it->record.entries.back().tau >= d.entry.tau) {
      throw std::logic_error("decision log out of order");
    }
    it->record.entries.push_back(d.entry);
  }
  for (const NodeId h : handlers) {
    const bool found = std::any_of(out.begin(), out.end(),
                                   [&](const NodeRecord& r) { return r.node == h; });
    if (!found) {
      throw std::logic_error("missing trajectory record for node " + std::to_string(h));
    }
  }
  return out;
}

// Discrete-time network. Each step every node services the head of its FIFO
// queue (one unit of queue delay), then either delivers it (if it is the
// destination) or forwards it; a forwarded packet spends the next step on the
// link (one unit of transmission) and joins the neighbor's queue at the end of
// that step. A packet created at time t on a one-hop route is delivered at
// t + 3; in general an uncongested h-hop route takes 2h + 1.
class Simulator {
 public:
  using Observer = std::function<void(const RewardEvent&, const Packet&)>;

  Simulator(Topology topology, std::unique_ptr<RoutingAgent> agent, SimConfig config = {})
      : topology_(std::move(topology)), agent_(std::move(agent)), config_(config),
        rng_(config.seed), queues_(topology_.node_count()),
        snapshot_(topology_.node_count(), 0) {
    if (!agent_) throw std::invalid_argument("simulator needs a routing agent");
    if (topology_.node_count() < 2) throw std::invalid_argument("simulator needs two nodes");
    if (config_.queue_capacity == 0) throw std::invalid_argument("queue capacity must be positive");
    available_.reserve(topology_.node_count());
    for (NodeId n = 0; n < topology_.node_count(); ++n) {
      available_.push_back(topology_.available_links(n));
    }
  }

  const Topology& topology() const { return topology_; }
  const SimConfig& config() const { return config_; }
  RoutingAgent& agent() { return *agent_; }
  const RoutingAgent& agent() const { return *agent_; }
  Time clock() const { return clock_; }
  const Metrics& metrics() const { return metrics_; }
  std::span<const LinkIndex> available_links(NodeId n) const { return available_[n]; }

  std::size_t queue_length(NodeId n) const { return queues_[n].size(); }
  const std::deque<Packet>& queue(NodeId n) const { return queues_[n]; }
  const std::vector<Packet>& in_flight() const { return in_flight_; }

  // Queue lengths as of the start of the current step; agents see these.
  std::span<const std::size_t> observed_queue_lengths() const { return snapshot_; }

  std::size_t queued_total() const {
    std::size_t total = 0;
    for (const auto& q : queues_) total += q.size();
    return total;
  }

  bool conserved() const {
    return metrics_.injected == metrics_.delivered + metrics_.discarded + metrics_.dropped +
                                    queued_total() + in_flight_.size();
  }

  double discard_penalty() const { return 2.0 * static_cast<double>(topology_.node_count() + 1); }

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  // Adds Poisson(load) packets with uniform origin and a uniform destination
  // different from the origin. Returns how many were created.
  std::size_t inject_packets(double load) {
    if (!(load > 0.0)) throw std::invalid_argument("load must be positive");
    const auto k = std::poisson_distribution<std::size_t>(load)(rng_);
    const std::size_t n = topology_.node_count();
    for (std::size_t i = 0; i < k; ++i) {
      const NodeId origin = std::uniform_int_distribution<NodeId>(0, n - 1)(rng_);
      NodeId destination = std::uniform_int_distribution<NodeId>(0, n - 2)(rng_);
      if (destination >= origin) ++destination;
      inject(origin, destination);
    }
    return k;
  }

  // Creates one packet at the tail of `origin`'s queue. Returns its id, or
  // nullopt when it was discarded as unroutable or dropped at a full queue.
  std::optional<std::size_t> inject(NodeId origin, NodeId destination) {
    const std::size_t n = topology_.node_count();
    if (origin >= n || destination >= n || origin == destination) {
      throw std::invalid_argument("packet needs distinct in-range endpoints");
    }
    Packet p;
    p.id = next_id_++;
    p.origin = origin;
    p.destination = destination;
    p.created_at = clock_;
    p.last_service_at = clock_;
    p.visit(origin);
    ++metrics_.injected;
    if (!agent_->routable(origin, destination)) {
      ++metrics_.discarded;
      if (measuring()) ++metrics_.measured_discarded;
      return std::nullopt;
    }
    const std::size_t id = p.id;
    if (!enqueue(std::move(p), /*mid_route=*/false, nullptr)) return std::nullopt;
    return id;
  }

  std::vector<RewardEvent> step() {
    std::vector<RewardEvent> events;
    const std::size_t n = topology_.node_count();
    for (NodeId v = 0; v < n; ++v) snapshot_[v] = queues_[v].size();

    std::vector<Packet> departing;
    for (NodeId v = 0; v < n; ++v) {
      if (queues_[v].empty()) continue;
      Packet p = std::move(queues_[v].front());
      queues_[v].pop_front();
      p.last_service_at = clock_;

      if (p.destination == v) {
        terminate(std::move(p), Terminal::kDelivered, events);
        continue;
      }

      const auto& available = available_[v];
      std::optional<LinkIndex> choice;
      if (!available.empty()) choice = agent_->select(*this, v, p, available, rng_);
      if (!choice) {
        terminate(std::move(p), Terminal::kDiscarded, events);
        continue;
      }
      if (std::find(available.begin(), available.end(), *choice) == available.end()) {
        throw std::logic_error("agent chose a link that is down or absent");
      }
      if (agent_->records_decisions()) {
        p.handlers.push_back(v);
        p.decisions.push_back(
            {v, {p.decisions.size(), p.destination, *choice, available, clock_, p.revisits}});
      }
      agent_->on_forward(*this, v, p, *choice);
      ++p.hops;
      if (p.hops > n) {
        terminate(std::move(p), Terminal::kDiscarded, events);
        continue;
      }
      p.location = topology_.links(v)[*choice].neighbor;
      departing.push_back(std::move(p));
    }

    for (Packet& p : in_flight_) {
      const NodeId at = p.location;
      p.visit(at);
      enqueue(std::move(p), /*mid_route=*/true, &events);
    }
    in_flight_ = std::move(departing);
    ++clock_;
    return events;
  }

  // Advances `steps` times, injecting before each step. Terminations that
  // complete after `measure_after` are measured.
  Metrics run(double load, std::size_t steps, std::size_t measure_after) {
    if (steps <= measure_after) throw std::invalid_argument("steps must exceed warmup");
    metrics_.measure_after = clock_ + measure_after;
    for (std::size_t i = 0; i < steps; ++i) {
      inject_packets(load);
      step();
    }
    return metrics_;
  }

 private:
  // Whether something ending during the current step counts as measured.
  bool measuring() const { return clock_ + 1 > metrics_.measure_after; }

  bool enqueue(Packet p, bool mid_route, std::vector<RewardEvent>* events) {
    auto& q = queues_[p.location];
    if (q.size() < config_.queue_capacity) {
      q.push_back(std::move(p));
      return true;
    }
    if (!mid_route) {
      ++metrics_.dropped;
      if (measuring()) ++metrics_.measured_dropped;
      return false;
    }
    terminate(std::move(p), Terminal::kDropped, *events);
    return false;
  }

  // Completion time is the end of the current step.
  void terminate(Packet p, Terminal kind, std::vector<RewardEvent>& events) {
    const Time done = clock_ + 1;
    const bool measured = measuring();
    RewardEvent e{p.id, kind, 0.0, done - p.created_at, done, 0.0, p.revisits, config_.loop_penalty};
    const double loop_cost = config_.loop_penalty * static_cast<double>(p.revisits);
    const double elapsed = static_cast<double>(e.elapsed);
    switch (kind) {
      case Terminal::kDelivered:
        e.reward = -elapsed - loop_cost;
        ++metrics_.delivered;
        metrics_.total_delivery_time += elapsed;
        metrics_.max_delivered_hops = std::max(metrics_.max_delivered_hops, p.hops);
        if (measured) {
          ++metrics_.measured_delivered;
          metrics_.measured_delivery_time += elapsed;
        }
        break;
      case Terminal::kDiscarded:
      case Terminal::kDropped:
        e.terminal_penalty = discard_penalty();
        e.reward = -elapsed - e.terminal_penalty - loop_cost;
        if (kind == Terminal::kDiscarded) {
          ++metrics_.discarded;
          if (measured) ++metrics_.measured_discarded;
        } else {
          ++metrics_.dropped;
          if (measured) ++metrics_.measured_dropped;
        }
        break;
    }

    agent_->on_terminal(*this, e, p);
    if (agent_->records_decisions()) {
      for (const NodeRecord& r : distribute_reward(e, p.handlers, p.decisions)) {
        agent_->on_reward(r.node, e, r.record);
      }
    }
    if (observer_) observer_(e, p);
    events.push_back(e);
  }

  Topology topology_;
  std::unique_ptr<RoutingAgent> agent_;
  SimConfig config_;
  Rng rng_;
  Time clock_ = 0;
  std::size_t next_id_ = 0;
  std::vector<std::deque<Packet>> queues_;
  std::vector<Packet> in_flight_;
  std::vector<std::size_t> snapshot_;
  std::vector<std::vector<LinkIndex>> available_;
  Metrics metrics_;
  Observer observer_;
};

}  // namespace gapsroute
