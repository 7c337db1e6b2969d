#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gapsroute {

using NodeId = std::size_t;
using LinkIndex = std::size_t;  // position of a link in Topology::links(node)

enum class LinkState : std::uint8_t { kUp, kDown };

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unordered edge, always stored with lo < hi.
struct Edge {
  NodeId lo = 0;
  NodeId hi = 0;

  Edge() = default;
  Edge(NodeId u, NodeId v) : lo(std::min(u, v)), hi(std::max(u, v)) {}

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Link {
  NodeId neighbor;
  std::size_t edge;  // index into Topology::edges()
};

// Immutable undirected graph with per-link up/down state. Each node's links
// are ordered by neighbor id, and that order defines its action indices.
class Topology {
 public:
  Topology() = default;

  Topology(std::size_t node_count, std::vector<Edge> edges)
      : node_count_(node_count), edges_(std::move(edges)) {
    if (node_count_ == 0) throw TopologyError("topology needs at least one node");
    std::sort(edges_.begin(), edges_.end());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      if (e.lo == e.hi) {
        throw TopologyError("self-loop at node " + std::to_string(e.lo));
      }
      if (e.hi >= node_count_) {
        throw TopologyError("edge endpoint " + std::to_string(e.hi) +
                            " out of range for " + std::to_string(node_count_) + " nodes");
      }
      if (i > 0 && edges_[i - 1] == e) {
        throw TopologyError("duplicate edge " + std::to_string(e.lo) + " " +
                            std::to_string(e.hi));
      }
    }
    state_.assign(edges_.size(), LinkState::kUp);
    links_.assign(node_count_, {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      links_[edges_[i].lo].push_back({edges_[i].hi, i});
      links_[edges_[i].hi].push_back({edges_[i].lo, i});
    }
    for (auto& row : links_) {
      std::sort(row.begin(), row.end(),
                [](const Link& a, const Link& b) { return a.neighbor < b.neighbor; });
    }
  }

  std::size_t node_count() const { return node_count_; }
  std::span<const Edge> edges() const { return edges_; }

  // All incident links of `n`, up or down.
  std::span<const Link> links(NodeId n) const { return links_.at(n); }
  std::size_t degree(NodeId n) const { return links_.at(n).size(); }

  bool is_up(NodeId n, LinkIndex a) const { return state_[links_[n][a].edge] == LinkState::kUp; }

  LinkState state(const Edge& e) const { return state_[edge_index(e)]; }

  bool has_edge(const Edge& e) const {
    return std::binary_search(edges_.begin(), edges_.end(), e);
  }

  std::size_t edge_index(const Edge& e) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    if (it == edges_.end() || *it != e) {
      throw TopologyError("unknown edge " + std::to_string(e.lo) + " " + std::to_string(e.hi));
    }
    return static_cast<std::size_t>(it - edges_.begin());
  }

  // Link indices of `n` whose link is currently up.
  std::vector<LinkIndex> available_links(NodeId n) const {
    std::vector<LinkIndex> out;
    const auto& row = links_.at(n);
    for (LinkIndex a = 0; a < row.size(); ++a) {
      if (state_[row[a].edge] == LinkState::kUp) out.push_back(a);
    }
    return out;
  }

  // Neighbors joined to `n` by an up link.
  std::vector<NodeId> neighbors(NodeId n) const {
    std::vector<NodeId> out;
    for (const Link& l : links_.at(n)) {
      if (state_[l.edge] == LinkState::kUp) out.push_back(l.neighbor);
    }
    return out;
  }

  // Index of the link from `n` to `neighbor`, or degree(n) when absent.
  LinkIndex link_to(NodeId n, NodeId neighbor) const {
    const auto& row = links_.at(n);
    for (LinkIndex a = 0; a < row.size(); ++a) {
      if (row[a].neighbor == neighbor) return a;
    }
    return row.size();
  }

  Topology with_link_state(const Edge& e, LinkState s) const {
    Topology copy = *this;
    copy.state_[edge_index(e)] = s;
    return copy;
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_ && a.state_ == b.state_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<LinkState> state_;
  std::vector<std::vector<Link>> links_;
};

inline Topology set_link_state(const Topology& t, const Edge& e, LinkState s) {
  return t.with_link_state(e, s);
}

inline std::set<Edge> edge_set(const Topology& t) {
  return {t.edges().begin(), t.edges().end()};
}

// Parses the line-oriented topology format:
//   # comment
//   nodes N
//   edge U V
inline Topology load_topology(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t nodes = 0;
  bool have_nodes = false;
  std::vector<Edge> edges;
  std::set<Edge> seen;

  auto fail = [&](const std::string& what) {
    throw TopologyError("line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    std::string keyword;
    fields >> keyword;
    if (keyword == "nodes") {
      if (have_nodes) fail("repeated 'nodes' declaration");
      long long n = -1;
      if (!(fields >> n) || n <= 0) fail("expected 'nodes N' with N > 0");
      nodes = static_cast<std::size_t>(n);
      have_nodes = true;
    } else if (keyword == "edge") {
      if (!have_nodes) fail("'edge' before 'nodes'");
      long long u = -1;
      long long v = -1;
      if (!(fields >> u >> v) || u < 0 || v < 0) fail("expected 'edge U V'");
      if (static_cast<std::size_t>(u) >= nodes || static_cast<std::size_t>(v) >= nodes) {
        fail("edge endpoint out of range");
      }
      if (u == v) fail("self-loop");
      Edge e(static_cast<NodeId>(u), static_cast<NodeId>(v));
      if (!seen.insert(e).second) fail("duplicate edge");
      edges.push_back(e);
    } else {
      fail("unknown keyword '" + keyword + "'");
    }
    std::string extra;
    if (fields >> extra) fail("trailing token '" + extra + "'");
  }
  if (!have_nodes) throw TopologyError("missing 'nodes' declaration");
  return Topology(nodes, std::move(edges));
}

inline std::string to_text(const Topology& t) {
  std::ostringstream out;
  out << "nodes " << t.node_count() << '\n';
  for (const Edge& e : t.edges()) out << "edge " << e.lo << ' ' << e.hi << '\n';
  return out.str();
}

// Irregular 6x6 grid, row-major numbering (node = 6 * row + col). Columns 0-2
// and columns 3-5 each form a complete 6x3 grid lattice; the two halves are
// joined only by the bridges 20-21 and 32-33.
inline Topology build_grid_original() {
  constexpr std::size_t kSide = 6;
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < kSide; ++r) {
    for (std::size_t c = 0; c < kSide; ++c) {
      const NodeId n = r * kSide + c;
      if (c + 1 < kSide && c != 2) edges.emplace_back(n, n + 1);
      if (r + 1 < kSide) edges.emplace_back(n, n + kSide);
    }
  }
  edges.emplace_back(20, 21);
  edges.emplace_back(32, 33);
  return Topology(kSide * kSide, std::move(edges));
}

// The original grid with the lower bridge 32-33 moved to 20-27, which leaves
// node 20 as the only gateway between the halves.
inline Topology build_grid_modified() {
  Topology base = build_grid_original();
  std::vector<Edge> edges;
  for (const Edge& e : base.edges()) {
    if (e != Edge(32, 33)) edges.push_back(e);
  }
  edges.emplace_back(20, 27);
  return Topology(base.node_count(), std::move(edges));
}

}  // namespace gapsroute
