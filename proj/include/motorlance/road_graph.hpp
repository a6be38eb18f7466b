#ifndef MOTORLANCE_ROAD_GRAPH_HPP
#define MOTORLANCE_ROAD_GRAPH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "motorlance/error.hpp"
#include "motorlance/geo.hpp"

namespace motorlance {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

inline constexpr double kSecondsPerDay = 86'400.0;
inline constexpr int kHoursPerDay = 24;

struct RoadNode {
  NodeId id = 0;
  GeoPoint location;
};

struct RoadEdge {
  EdgeId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  double length_m = 0.0;
  double free_flow_mps = 0.0;
  WidthClass width = WidthClass::Narrow;
};

/// Directed road network. Undirected input is expanded to edge pairs by the loader.
class RoadGraph {
 public:
  RoadGraph() = default;

  RoadGraph(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges) {
    for (auto& n : nodes) add_node(n.id, n.location);
    for (auto& e : edges) add_edge(e);
  }

  void add_node(NodeId id, GeoPoint location) {
    if (index_.contains(id)) {
      fail(ErrorCode::Config, "duplicate node id " + std::to_string(id));
    }
    index_.emplace(id, nodes_.size());
    nodes_.push_back({id, location});
    out_.emplace_back();
  }

  void add_edge(const RoadEdge& e) {
    if (edge_ids_.contains(e.id)) {
      fail(ErrorCode::Config, "duplicate edge id " + std::to_string(e.id));
    }
    if (!has_node(e.from) || !has_node(e.to)) {
      fail(ErrorCode::Config, "edge " + std::to_string(e.id) + " references unknown node");
    }
    if (!(e.length_m > 0.0) || !std::isfinite(e.length_m)) {
      fail(ErrorCode::Config, "edge " + std::to_string(e.id) + " length_m must be > 0");
    }
    if (!(e.free_flow_mps > 0.0) || !std::isfinite(e.free_flow_mps)) {
      fail(ErrorCode::Config, "edge " + std::to_string(e.id) + " free_flow_mps must be > 0");
    }
    edge_ids_.emplace(e.id, edges_.size());
    out_[index_.at(e.from)].push_back(edges_.size());
    edges_.push_back(e);
  }

  bool has_node(NodeId id) const { return index_.contains(id); }

  const RoadNode& node(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::NotFound, "unknown node " + std::to_string(id));
    return nodes_[it->second];
  }

  const std::vector<RoadNode>& nodes() const noexcept { return nodes_; }
  const std::vector<RoadEdge>& edges() const noexcept { return edges_; }

  std::size_t node_index(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::NotFound, "unknown node " + std::to_string(id));
    return it->second;
  }

  /// Indices into edges() leaving the node at `node_index`.
  const std::vector<std::size_t>& out_edges(std::size_t node_index) const {
    return out_[node_index];
  }

  /// Closest node by great-circle distance; ties go to the smaller node id.
  NodeId nearest_node(const GeoPoint& p) const {
    if (nodes_.empty()) fail(ErrorCode::Config, "graph has no nodes");
    const RoadNode* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
      double d = haversine_distance(p, n.location);
      if (d < best_d || (d == best_d && n.id < best->id)) {
        best = &n;
        best_d = d;
      }
    }
    return best->id;
  }

 private:
  std::vector<RoadNode> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<std::size_t>> out_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<EdgeId, std::size_t> edge_ids_;
};

/// Hourly congestion factors per width class plus per-class sensitivity.
class CongestionProfile {
 public:
  CongestionProfile() = default;

  /// Same factor for every hour and width class; sensitivities default to
  /// motorcycle 0, ambulance 1, motorlance 1/6.
  static CongestionProfile uniform(double factor) {
    CongestionProfile p;
    for (int h = 0; h < kHoursPerDay; ++h) {
      p.set_factor(h, WidthClass::Narrow, factor);
      p.set_factor(h, WidthClass::Wide, factor);
    }
    p.set_sensitivity(VehicleClass::Motorcycle, 0.0);
    p.set_sensitivity(VehicleClass::Motorlance, 1.0 / 6.0);
    p.set_sensitivity(VehicleClass::Ambulance, 1.0);
    return p;
  }

  void set_factor(int hour, WidthClass width, double factor) {
    if (hour < 0 || hour >= kHoursPerDay) {
      fail(ErrorCode::Config, "congestion bucket hour out of range: " + std::to_string(hour));
    }
    if (!std::isfinite(factor) || factor < 1.0) {
      fail(ErrorCode::Config, "congestion factor must be >= 1");
    }
    factors_[slot(hour, width)] = factor;
  }

  void set_sensitivity(VehicleClass c, double s) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      fail(ErrorCode::Config, "class sensitivity must be in [0, 1]");
    }
    sensitivity_[static_cast<std::size_t>(c)] = s;
  }

  double factor(int hour, WidthClass width) const {
    if (hour < 0 || hour >= kHoursPerDay) {
      fail(ErrorCode::Config, "no congestion bucket for hour " + std::to_string(hour));
    }
    const auto& f = factors_[slot(hour, width)];
    if (!f) {
      fail(ErrorCode::Config, "missing congestion factor for hour " + std::to_string(hour) +
                                  " width " + std::string(to_string(width)));
    }
    return *f;
  }

  double sensitivity(VehicleClass c) const { return sensitivity_[static_cast<std::size_t>(c)]; }

  bool complete() const {
    return std::all_of(factors_.begin(), factors_.end(), [](const auto& f) { return f.has_value(); });
  }

  /// Multiplies every defined factor by `k` (k >= 1 keeps factors valid).
  CongestionProfile scaled(double k) const {
    CongestionProfile p = *this;
    for (auto& f : p.factors_) {
      if (f) f = std::max(1.0, *f * k);
    }
    return p;
  }

 private:
  static std::size_t slot(int hour, WidthClass width) {
    return static_cast<std::size_t>(hour) * 2 + (width == WidthClass::Narrow ? 0 : 1);
  }

  std::array<std::optional<double>, kHoursPerDay * 2> factors_{};
  std::array<double, 3> sensitivity_{0.0, 1.0 / 6.0, 1.0};
};

/// Maps an absolute simulation/clock time in seconds to seconds past midnight.
inline double time_of_day(double t) {
  double tod = std::fmod(t, kSecondsPerDay);
  if (tod < 0) tod += kSecondsPerDay;
  return tod;
}

inline int hour_bucket(double tod_seconds) {
  if (!(tod_seconds >= 0.0) || tod_seconds >= kSecondsPerDay) {
    fail(ErrorCode::Config, "time of day outside [0, 24h): " + std::to_string(tod_seconds));
  }
  return static_cast<int>(tod_seconds / 3600.0);
}

/// free_flow / (1 + s * (f - 1)) with the bucket taken from `tod_seconds`.
inline double effective_speed(const RoadEdge& edge, VehicleClass c, const CongestionProfile& profile,
                              double tod_seconds) {
  const double f = profile.factor(hour_bucket(tod_seconds), edge.width);
  return edge.free_flow_mps / (1.0 + profile.sensitivity(c) * (f - 1.0));
}

struct Route {
  double seconds = 0.0;
  std::vector<NodeId> path;
};

/// Per-edge traversal time for class `c` frozen at `tod_seconds`.
inline double edge_travel_time(const RoadEdge& edge, VehicleClass c, const CongestionProfile& profile,
                               double tod_seconds) {
  return edge.length_m / effective_speed(edge, c, profile, tod_seconds);
}

namespace detail {

inline std::vector<NodeId> unwind(const RoadGraph& g, const std::vector<std::size_t>& pred,
                                  std::size_t at) {
  std::vector<NodeId> path;
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  for (std::size_t v = at; v != none; v = pred[v]) path.push_back(g.nodes()[v].id);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

/// Static-snapshot Dijkstra. Congestion is evaluated once at `depart_time`
/// (absolute seconds; reduced to time of day). Among equal-time routes the
/// lexicographically smallest node-id sequence wins.
inline Route shortest_travel_time(const RoadGraph& g, const CongestionProfile& profile, NodeId from,
                                  NodeId to, VehicleClass c, double depart_time) {
  const std::size_t src = g.node_index(from);
  const std::size_t dst = g.node_index(to);
  if (src == dst) return Route{0.0, {from}};

  const double tod = time_of_day(depart_time);
  const std::size_t n = g.nodes().size();
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Cheapest edge per (u, v) pair; parallel edges collapse to one arc.
  std::vector<double> dist(n, inf);
  std::vector<std::size_t> pred(n, none);
  std::vector<bool> settled(n, false);

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});

  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (settled[u] || d > dist[u]) continue;
    settled[u] = true;
    if (u == dst) break;

    std::unordered_map<std::size_t, double> arcs;
    for (std::size_t ei : g.out_edges(u)) {
      const auto& e = g.edges()[ei];
      const double w = edge_travel_time(e, c, profile, tod);
      const std::size_t v = g.node_index(e.to);
      auto [it, inserted] = arcs.emplace(v, w);
      if (!inserted && w < it->second) it->second = w;
    }
    for (auto [v, w] : arcs) {
      if (settled[v]) continue;
      const double nd = d + w;
      bool better = nd < dist[v];
      if (!better && nd == dist[v]) {
        auto cand = detail::unwind(g, pred, u);
        cand.push_back(g.nodes()[v].id);
        better = cand < detail::unwind(g, pred, v);
      }
      if (better) {
        dist[v] = nd;
        pred[v] = u;
        pq.push({nd, v});
      }
    }
  }

  if (!settled[dst]) {
    fail(ErrorCode::Unreachable,
         "node " + std::to_string(to) + " unreachable from node " + std::to_string(from));
  }
  return Route{dist[dst], detail::unwind(g, pred, dst)};
}

}  // namespace motorlance

#endif
