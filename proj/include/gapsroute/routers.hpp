#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gapsroute/baselines.hpp"
#include "gapsroute/policy.hpp"
#include "gapsroute/shortest_paths.hpp"
#include "gapsroute/simulator.hpp"
#include "gapsroute/topology.hpp"

namespace gapsroute {

enum class Credit {
  kTerminal,   // one update per packet: gamma^elapsed * reward * sum of gradients
  kRewardToGo  // one update per decision, scaled by the cost incurred after it
};

struct GapsOptions {
  Credit credit = Credit::kRewardToGo;
  double baseline_rate = 0.01;  // 0 disables the per-(node, destination) baseline
  bool normalize = true;        // divide advantages by a running mean of their magnitude
};

// Distributed GAPS: every node samples from its own softmax table and updates
// it from the acknowledgment of each packet it forwarded.
class GapsAgent : public RoutingAgent {
 public:
  explicit GapsAgent(std::vector<PolicyTable> tables, GapsOptions options = {})
      : tables_(std::move(tables)), options_(options) {
    if (!(options_.baseline_rate >= 0.0 && options_.baseline_rate <= 1.0)) {
      throw PolicyError("baseline rate must be in [0, 1]");
    }
    baselines_.reserve(tables_.size());
    scales_.reserve(tables_.size());
    for (const PolicyTable& t : tables_) {
      baselines_.emplace_back(t.observations(), 0.0);
      scales_.emplace_back(t.observations(), 0.0);
      seen_.emplace_back(t.observations(), false);
    }
  }

  static GapsAgent epsilon_greedy(const Topology& t, double epsilon, PolicyHyperparameters h,
                                  GapsOptions options = {}) {
    const DistanceTable dt = shortest_paths(t);
    std::vector<PolicyTable> tables;
    tables.reserve(t.node_count());
    for (NodeId n = 0; n < t.node_count(); ++n) {
      tables.push_back(init_epsilon_greedy(t, dt, n, epsilon, h));
    }
    return GapsAgent(std::move(tables), options);
  }

  static GapsAgent random(const Topology& t, Rng& rng, double scale, PolicyHyperparameters h,
                          GapsOptions options = {}) {
    std::vector<PolicyTable> tables;
    tables.reserve(t.node_count());
    for (NodeId n = 0; n < t.node_count(); ++n) {
      tables.push_back(init_random(t.node_count(), t.degree(n), h, rng, scale));
    }
    return GapsAgent(std::move(tables), options);
  }

  const std::vector<PolicyTable>& tables() const { return tables_; }
  const PolicyTable& table(NodeId n) const { return tables_.at(n); }
  const GapsOptions& options() const { return options_; }
  std::size_t updates() const { return updates_; }

  std::optional<LinkIndex> select(const Simulator&, NodeId node, const Packet& p,
                                  std::span<const LinkIndex> available, Rng& rng) override {
    return sample_action(tables_[node], p.destination, available, rng);
  }

  bool records_decisions() const override { return true; }

  void on_reward(NodeId node, const RewardEvent& e, const TrajectoryRecord& rec) override {
    if (rec.entries.empty()) return;
    PolicyTable& table = tables_[node];
    if (options_.credit == Credit::kTerminal) {
      const double signal = advantage(node, rec.entries.front().observation, e.reward);
      apply_update(table, accumulate(rec, table), signal, static_cast<double>(e.elapsed));
      ++updates_;
      return;
    }
    const double gamma = table.hyperparameters().discount;
    const Time created = e.completed_at - e.elapsed;
    for (const DecisionEntry& entry : rec.entries) {
      const double togo = reward_to_go(e, entry, created, gamma);
      const double signal = advantage(node, entry.observation, togo);
      TrajectoryRecord one{rec.packet_id, {entry}};
      apply_update(table, accumulate(one, table), signal, 0.0);
      ++updates_;
    }
  }

  // Unit cost per step from the decision to completion, discounted from the
  // packet's creation, plus the terminal penalty and the revisits still ahead.
  static double reward_to_go(const RewardEvent& e, const DecisionEntry& entry, Time created,
                             double gamma) {
    const double from = static_cast<double>(entry.time - created);
    const double until = static_cast<double>(e.elapsed);
    const double later_revisits = static_cast<double>(e.revisits - entry.revisits);
    double steps = until - from;
    double tail = 1.0;
    if (gamma < 1.0) {
      steps = (std::pow(gamma, from) - std::pow(gamma, until)) / (1.0 - gamma);
      tail = std::pow(gamma, until);
    }
    return -steps - tail * (e.terminal_penalty + e.loop_penalty * later_revisits);
  }

 private:
  double advantage(NodeId node, Observation o, double value) {
    if (options_.baseline_rate == 0.0) return value;
    const double rate = options_.baseline_rate;
    double& b = baselines_[node][o];
    double& scale = scales_[node][o];
    if (!seen_[node][o]) {
      seen_[node][o] = true;
      b = value;
    }
    double adv = value - b;
    b += rate * (value - b);
    if (options_.normalize) {
      scale += rate * (std::abs(adv) - scale);
      adv /= std::max(scale, 1.0);
    }
    return adv;
  }

  std::vector<PolicyTable> tables_;
  GapsOptions options_;
  std::vector<std::vector<double>> baselines_;
  std::vector<std::vector<double>> scales_;
  std::vector<std::vector<bool>> seen_;
  std::size_t updates_ = 0;
};

// Follows a fixed next-hop table.
class StaticAgent : public RoutingAgent {
 public:
  explicit StaticAgent(StaticRoutingTable table) : table_(std::move(table)) {}

  const StaticRoutingTable& table() const { return table_; }

  std::optional<LinkIndex> select(const Simulator& sim, NodeId node, const Packet& p,
                                  std::span<const LinkIndex> available, Rng&) override {
    const auto hop = table_.next_hop(node, p.destination);
    if (!hop) return std::nullopt;
    const LinkIndex a = sim.topology().link_to(node, *hop);
    if (std::find(available.begin(), available.end(), a) == available.end()) return std::nullopt;
    return a;
  }

  bool routable(NodeId origin, NodeId destination) const override {
    return table_.next_hop(origin, destination).has_value();
  }

 protected:
  StaticRoutingTable table_;
};

class BestAgent : public StaticAgent {
 public:
  explicit BestAgent(const Topology& t) : StaticAgent(best_policy(t)) {}
};

// Recomputes queue-aware shortest paths after every `period` deliveries.
class BestloadAgent : public StaticAgent {
 public:
  static constexpr std::size_t kDefaultPeriod = 50;

  explicit BestloadAgent(const Topology& t, std::size_t period = kDefaultPeriod)
      : StaticAgent(best_policy(t)), period_(period) {}

  std::size_t recomputations() const { return recomputations_; }

  void on_terminal(const Simulator& sim, const RewardEvent& e, const Packet&) override {
    if (e.terminal != Terminal::kDelivered) return;
    if (++since_last_ < period_) return;
    since_last_ = 0;
    table_ = bestload_recompute(sim.topology(), sim.observed_queue_lengths());
    ++recomputations_;
  }

 private:
  std::size_t period_;
  std::size_t since_last_ = 0;
  std::size_t recomputations_ = 0;
};

// Boyan-Littman Q-routing with one-unit transmission and service costs.
class QRoutingAgent : public RoutingAgent {
 public:
  QRoutingAgent(const Topology& t, double learning_rate) : q_(t, learning_rate) {}

  const QTable& q() const { return q_; }

  std::optional<LinkIndex> select(const Simulator&, NodeId node, const Packet& p,
                                  std::span<const LinkIndex> available, Rng&) override {
    return qrouting_select(q_, node, p.destination, available);
  }

  // The chosen neighbor y reports its queue wait plus its own service time and
  // its best remaining estimate toward the destination.
  void on_forward(const Simulator& sim, NodeId node, const Packet& p, LinkIndex a) override {
    const NodeId y = sim.topology().links(node)[a].neighbor;
    const double queue_time = static_cast<double>(sim.observed_queue_lengths()[y]) + 1.0;
    const double remaining = q_.best_remaining(y, p.destination, sim.available_links(y));
    qrouting_update(q_, node, p.destination, a, queue_time, 1.0,
                    remaining == kInfinity ? 0.0 : remaining);
  }

 private:
  QTable q_;
};

}  // namespace gapsroute
