// Brute-force reference implementations and random generators shared by the
// unit tests and the acceptance runner.
#ifndef MOTORLANCE_TESTS_ORACLES_HPP
#define MOTORLANCE_TESTS_ORACLES_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "motorlance/dispatch.hpp"
#include "motorlance/road_graph.hpp"

namespace oracle {

using namespace motorlance;

inline std::string source_path(const std::string& rel) { return std::string(MOTORLANCE_SOURCE_DIR) + "/" + rel; }

struct PathResult {
  double seconds = std::numeric_limits<double>::infinity();
  std::vector<NodeId> path;
  bool found = false;
};

/// Enumerates every simple path (over edges, so parallel edges are separate
/// choices) and keeps the fastest, breaking ties by node-id sequence.
inline PathResult brute_force_route(const RoadGraph& g, const CongestionProfile& p, NodeId from, NodeId to,
                                    VehicleClass c, double depart) {
  PathResult best;
  if (from == to) return PathResult{0.0, {from}, true};
  const double tod = time_of_day(depart);
  std::vector<NodeId> path{from};
  std::vector<double> legs;
  std::function<void(NodeId)> dfs = [&](NodeId u) {
    for (const auto& e : g.edges()) {
      if (e.from != u) continue;
      if (std::find(path.begin(), path.end(), e.to) != path.end()) continue;
      path.push_back(e.to);
      legs.push_back(edge_travel_time(e, c, p, tod));
      if (e.to == to) {
        double total = 0.0;
        for (double w : legs) total += w;  // forward order, same as the search
        if (!best.found || total < best.seconds || (total == best.seconds && path < best.path)) {
          best = PathResult{total, path, true};
        }
      } else {
        dfs(e.to);
      }
      path.pop_back();
      legs.pop_back();
    }
  };
  dfs(from);
  return best;
}

/// Nearest Available driver by brute-force travel time, ties by id.
inline std::optional<std::string> brute_force_nearest(const RoadGraph& g, const CongestionProfile& p,
                                                      const std::map<std::string, Driver>& drivers, NodeId origin,
                                                      double now) {
  std::optional<std::string> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (const auto& [id, d] : drivers) {
    if (d.status != DriverStatus::Available) continue;
    auto r = brute_force_route(g, p, d.node, origin, d.vehicle, now);
    if (!r.found) continue;
    if (!best || r.seconds < best_t || (r.seconds == best_t && id < *best)) {
      best = id;
      best_t = r.seconds;
    }
  }
  return best;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

struct RandomWorld {
  RoadGraph graph;
  CongestionProfile profile;
  std::map<std::string, Driver> drivers;
};

/// Small random directed graph. Half the seeds use coarse integer lengths and
/// one speed so that equal-time routes are common.
inline RandomWorld random_world(std::uint64_t seed, int max_nodes = 8, int max_drivers = 10) {
  std::mt19937_64 rng(seed);
  RandomWorld w;
  const bool ties = seed % 2 == 0;
  const int n = uniform_int(rng, 2, max_nodes);
  for (int i = 1; i <= n; ++i) {
    w.graph.add_node(i, GeoPoint(14.5 + 0.001 * i, 121.0 + 0.0007 * uniform_int(rng, 0, 9)));
  }
  const int m = uniform_int(rng, n - 1, n * 3);
  for (int k = 1; k <= m; ++k) {
    RoadEdge e;
    e.id = k;
    e.from = uniform_int(rng, 1, n);
    e.to = uniform_int(rng, 1, n);
    if (e.to == e.from) e.to = e.from % n + 1;
    e.length_m = ties ? 100.0 * uniform_int(rng, 1, 3) : uniform(rng, 50.0, 800.0);
    e.free_flow_mps = ties ? 10.0 : uniform(rng, 4.0, 14.0);
    e.width = uniform_int(rng, 0, 1) == 0 ? WidthClass::Narrow : WidthClass::Wide;
    w.graph.add_edge(e);
  }
  for (int h = 0; h < kHoursPerDay; ++h) {
    w.profile.set_factor(h, WidthClass::Narrow, ties ? 2.0 : uniform(rng, 1.0, 5.0));
    w.profile.set_factor(h, WidthClass::Wide, ties ? 1.0 : uniform(rng, 1.0, 3.0));
  }
  const int k = uniform_int(rng, 1, max_drivers);
  for (int i = 0; i < k; ++i) {
    Driver d;
    d.driver_id = "D" + std::to_string(i);
    d.node = uniform_int(rng, 1, n);
    d.location = w.graph.node(d.node).location;
    d.vehicle = kAllVehicleClasses[static_cast<std::size_t>(uniform_int(rng, 0, 2))];
    d.screened = d.trained = true;
    d.status = uniform_int(rng, 0, 3) == 0 ? DriverStatus::Offline : DriverStatus::Available;
    w.drivers[d.driver_id] = d;
  }
  return w;
}

}  // namespace oracle

#endif
