#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gapsroute/shortest_paths.hpp"
#include "gapsroute/topology.hpp"

namespace gapsroute {

using Observation = std::size_t;  // destination of the packet being routed

class PolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PolicyHyperparameters {
  double temperature = 1.0;
  double learning_rate = 0.01;
  double discount = 1.0;

  friend bool operator==(const PolicyHyperparameters&, const PolicyHyperparameters&) = default;
};

// Reactive softmax policy for one node: a parameter per (destination, link).
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(std::size_t observations, std::size_t actions, PolicyHyperparameters h = {})
      : observations_(observations), actions_(actions), hyper_(h),
        theta_(observations * actions, 0.0) {
    if (!(h.temperature > 0.0)) throw PolicyError("temperature must be positive");
    if (!(h.learning_rate > 0.0)) throw PolicyError("learning rate must be positive");
    if (!(h.discount >= 0.0 && h.discount <= 1.0)) throw PolicyError("discount must be in [0, 1]");
  }

  std::size_t observations() const { return observations_; }
  std::size_t actions() const { return actions_; }
  double temperature() const { return hyper_.temperature; }
  double learning_rate() const { return hyper_.learning_rate; }
  double discount() const { return hyper_.discount; }
  const PolicyHyperparameters& hyperparameters() const { return hyper_; }

  double& theta(Observation o, LinkIndex a) { return theta_[o * actions_ + a]; }
  double theta(Observation o, LinkIndex a) const { return theta_[o * actions_ + a]; }
  std::span<const double> row(Observation o) const {
    return {theta_.data() + o * actions_, actions_};
  }
  std::span<double> row(Observation o) { return {theta_.data() + o * actions_, actions_}; }

  friend bool operator==(const PolicyTable&, const PolicyTable&) = default;

 private:
  std::size_t observations_ = 0;
  std::size_t actions_ = 0;
  PolicyHyperparameters hyper_;
  std::vector<double> theta_;
};

namespace detail {

inline void check_available(const PolicyTable& p, Observation o,
                            std::span<const LinkIndex> available) {
  if (available.empty()) throw PolicyError("empty available action set");
  if (o >= p.observations()) throw PolicyError("observation out of range");
  for (const LinkIndex a : available) {
    if (a >= p.actions()) throw PolicyError("action out of range");
  }
}

// Max-shifted logits theta/temperature over `available`, plus log of the
// normalizer of the shifted values.
inline double shifted_logits(const PolicyTable& p, Observation o,
                             std::span<const LinkIndex> available, std::vector<double>& z) {
  z.resize(available.size());
  double peak = -kInfinity;
  for (std::size_t i = 0; i < available.size(); ++i) {
    z[i] = p.theta(o, available[i]) / p.temperature();
    peak = std::max(peak, z[i]);
  }
  double sum = 0.0;
  for (double& v : z) {
    v -= peak;
    sum += std::exp(v);
  }
  return std::log(sum);
}

}  // namespace detail

// Softmax over the available links, in the order of `available`.
inline std::vector<double> action_probabilities(const PolicyTable& p, Observation o,
                                                std::span<const LinkIndex> available) {
  detail::check_available(p, o, available);
  std::vector<double> z;
  const double log_norm = detail::shifted_logits(p, o, available, z);
  // Floor keeps far-behind links from underflowing to exactly zero.
  for (double& v : z) v = std::max(std::exp(v - log_norm), std::numeric_limits<double>::min());
  return z;
}

inline double log_probability(const PolicyTable& p, Observation o, LinkIndex a,
                              std::span<const LinkIndex> available) {
  detail::check_available(p, o, available);
  const auto it = std::find(available.begin(), available.end(), a);
  if (it == available.end()) throw PolicyError("action not available");
  std::vector<double> z;
  const double log_norm = detail::shifted_logits(p, o, available, z);
  return z[static_cast<std::size_t>(it - available.begin())] - log_norm;
}

// Draws one uniform variate per call, so a fixed seed yields a fixed sequence.
template <class Rng>
LinkIndex sample_action(const PolicyTable& p, Observation o,
                        std::span<const LinkIndex> available, Rng& rng) {
  const auto probs = action_probabilities(p, o, available);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return available[i];
  }
  return available.back();
}

// Gradient of ln mu(a | o) with respect to row o of theta. Every other row is
// zero and is not represented.
struct RowGradient {
  Observation observation = 0;
  std::vector<double> values;  // one entry per link of the node
};

inline RowGradient grad_log_prob(const PolicyTable& p, Observation o, LinkIndex a,
                                 std::span<const LinkIndex> available) {
  if (std::find(available.begin(), available.end(), a) == available.end()) {
    throw PolicyError("taken action is not in the available set");
  }
  const auto probs = action_probabilities(p, o, available);
  RowGradient g{o, std::vector<double>(p.actions(), 0.0)};
  const double inv_temp = 1.0 / p.temperature();
  for (std::size_t i = 0; i < available.size(); ++i) {
    g.values[available[i]] = -probs[i] * inv_temp;
  }
  g.values[a] += inv_temp;  // (1 - mu) / temperature for the taken link
  return g;
}

// One routing decision in a packet's history.
struct DecisionEntry {
  std::size_t tau = 0;  // decision index within the packet's history
  Observation observation = 0;
  LinkIndex action = 0;
  std::vector<LinkIndex> available;
  std::uint64_t time = 0;    // clock of the step in which the decision was made
  std::size_t revisits = 0;  // loop revisits the packet had accrued by then
};

struct TrajectoryRecord {
  std::size_t packet_id = 0;
  std::vector<DecisionEntry> entries;  // strictly increasing tau
};

// Sparse sum of row gradients.
class GradientAccumulator {
 public:
  bool empty() const { return rows_.empty(); }
  const std::vector<RowGradient>& rows() const { return rows_; }

  void add(const RowGradient& g) {
    for (RowGradient& r : rows_) {
      if (r.observation == g.observation) {
        for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] += g.values[i];
        return;
      }
    }
    rows_.push_back(g);
  }

  double value(Observation o, LinkIndex a) const {
    for (const RowGradient& r : rows_) {
      if (r.observation == o) return r.values.at(a);
    }
    return 0.0;
  }

 private:
  std::vector<RowGradient> rows_;
};

inline GradientAccumulator accumulate(const TrajectoryRecord& rec, const PolicyTable& p) {
  GradientAccumulator acc;
  for (const DecisionEntry& e : rec.entries) {
    acc.add(grad_log_prob(p, e.observation, e.action, e.available));
  }
  return acc;
}

// theta += learning_rate * discount^elapsed * reward * acc
inline void apply_update(PolicyTable& p, const GradientAccumulator& acc, double reward,
                         double elapsed) {
  if (!std::isfinite(reward)) throw PolicyError("non-finite reward");
  if (elapsed < 0.0) throw PolicyError("negative elapsed time");
  for (const RowGradient& r : acc.rows()) {
    for (const double v : r.values) {
      if (!std::isfinite(v)) throw PolicyError("non-finite gradient accumulator");
    }
  }
  const double scale = p.learning_rate() * std::pow(p.discount(), elapsed) * reward;
  for (const RowGradient& r : acc.rows()) {
    auto row = p.row(r.observation);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += scale * r.values[i];
  }
}

template <class Rng>
PolicyTable init_random(std::size_t observations, std::size_t actions,
                        PolicyHyperparameters h, Rng& rng, double scale) {
  if (!(scale > 0.0)) throw PolicyError("init scale must be positive");
  PolicyTable p(observations, actions, h);
  std::uniform_real_distribution<double> draw(-scale, scale);
  for (Observation o = 0; o < observations; ++o) {
    for (double& v : p.row(o)) v = draw(rng);
  }
  return p;
}

// Gap between the greedy link's parameter and every other link's parameter
// that makes the greedy probability exactly 1 - epsilon over `k` links.
inline double epsilon_greedy_gap(double temperature, double epsilon, std::size_t k) {
  return temperature * std::log((1.0 - epsilon) * static_cast<double>(k - 1) / epsilon);
}

// Parameters that route (1 - epsilon) of the traffic for each destination
// down the shortest-path next hop of `node` and spread epsilon evenly over the
// other up links. Unreachable destinations get a flat row.
inline PolicyTable init_epsilon_greedy(const Topology& t, const DistanceTable& dt, NodeId node,
                                       double epsilon, PolicyHyperparameters h) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw PolicyError("epsilon must be in (0, 1)");
  PolicyTable p(t.node_count(), t.degree(node), h);
  const auto available = t.available_links(node);
  if (available.size() < 2) return p;
  const double gap = epsilon_greedy_gap(h.temperature, epsilon, available.size());
  for (Observation d = 0; d < t.node_count(); ++d) {
    const auto hop = dt.next_hop(node, d);
    if (!hop) continue;
    p.theta(d, t.link_to(node, *hop)) = gap;
  }
  return p;
}

// Text checkpoint: `policy <node> <destinations> <links>` then one row of
// parameters per destination.
inline void write_policy(std::ostream& out, NodeId node, const PolicyTable& p) {
  out << "policy " << node << ' ' << p.observations() << ' ' << p.actions() << '\n';
  char buf[32];
  for (Observation o = 0; o < p.observations(); ++o) {
    const auto row = p.row(o);
    for (std::size_t a = 0; a < row.size(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", row[a]);
      out << (a ? " " : "") << buf;
    }
    out << '\n';
  }
}

// Reads one table written by write_policy into `p` with hyperparameters `h`.
// Returns the node id.
inline NodeId read_policy(std::istream& in, PolicyTable& p, PolicyHyperparameters h = {}) {
  std::string keyword;
  std::size_t node = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  if (!(in >> keyword >> node >> rows >> cols) || keyword != "policy") {
    throw PolicyError("malformed policy header");
  }
  PolicyTable table(rows, cols, h);
  for (Observation o = 0; o < rows; ++o) {
    for (double& v : table.row(o)) {
      if (!(in >> v) || !std::isfinite(v)) throw PolicyError("malformed policy row");
    }
  }
  p = std::move(table);
  return node;
}

}  // namespace gapsroute
