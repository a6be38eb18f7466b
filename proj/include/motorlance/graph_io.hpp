#ifndef MOTORLANCE_GRAPH_IO_HPP
#define MOTORLANCE_GRAPH_IO_HPP

#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "motorlance/error.hpp"
#include "motorlance/road_graph.hpp"

namespace motorlance {

using json = nlohmann::json;

namespace detail {

template <typename T>
T field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorCode::Config, path + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::Config, path + "." + key + ": wrong type");
  }
}

inline std::string at_index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, path + ": " + e.what());
  }
}

/// Graph from the `nodes` / `edges` keys. Undirected graphs (`directed`
/// absent or false) get a reverse edge per input edge, with id
/// `id + max_edge_id + 1`.
inline RoadGraph load_graph(const json& doc) {
  using detail::at_index;
  using detail::field;
  RoadGraph g;
  if (!doc.contains("nodes") || !doc.at("nodes").is_array()) fail(ErrorCode::Config, "graph.nodes: missing");
  if (!doc.contains("edges") || !doc.at("edges").is_array()) fail(ErrorCode::Config, "graph.edges: missing");
  const bool directed = doc.value("directed", false);

  const auto& nodes = doc.at("nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto path = at_index("graph.nodes", i);
    const double lat = field<double>(nodes[i], "lat", path);
    const double lon = field<double>(nodes[i], "lon", path);
    try {
      g.add_node(field<NodeId>(nodes[i], "id", path), GeoPoint(lat, lon));
    } catch (const Error& e) {
      fail(ErrorCode::Config, path + ": " + e.what());
    }
  }

  const auto& edges = doc.at("edges");
  std::vector<RoadEdge> parsed;
  EdgeId max_id = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto path = at_index("graph.edges", i);
    RoadEdge e;
    e.id = field<EdgeId>(edges[i], "id", path);
    e.from = field<NodeId>(edges[i], "from", path);
    e.to = field<NodeId>(edges[i], "to", path);
    e.length_m = field<double>(edges[i], "length_m", path);
    e.free_flow_mps = field<double>(edges[i], "free_flow_mps", path);
    auto w = parse_width_class(field<std::string>(edges[i], "width", path));
    if (!w) fail(ErrorCode::Config, path + ".width: expected narrow or wide");
    e.width = *w;
    max_id = std::max(max_id, e.id);
    parsed.push_back(e);
  }
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    try {
      g.add_edge(parsed[i]);
      if (!directed) {
        RoadEdge rev = parsed[i];
        std::swap(rev.from, rev.to);
        rev.id = parsed[i].id + max_id + 1;
        g.add_edge(rev);
      }
    } catch (const Error& e) {
      fail(ErrorCode::Config, at_index("graph.edges", i) + ": " + e.what());
    }
  }
  return g;
}

/// Profile from `{"hourly": {"narrow": [24], "wide": [24]}, "sensitivity": {...}}`.
inline CongestionProfile load_profile(const json& j) {
  CongestionProfile p;
  if (!j.is_object() || !j.contains("hourly")) fail(ErrorCode::Config, "profile.hourly: missing");
  for (auto width : {WidthClass::Narrow, WidthClass::Wide}) {
    const std::string key(to_string(width));
    const std::string path = "profile.hourly." + key;
    if (!j.at("hourly").contains(key)) fail(ErrorCode::Config, path + ": missing");
    const auto& arr = j.at("hourly").at(key);
    if (!arr.is_array() || arr.size() != kHoursPerDay) {
      fail(ErrorCode::Config, path + ": expected 24 hourly factors");
    }
    for (int h = 0; h < kHoursPerDay; ++h) {
      try {
        p.set_factor(h, width, arr.at(static_cast<std::size_t>(h)).get<double>());
      } catch (const std::exception& e) {
        fail(ErrorCode::Config, path + "[" + std::to_string(h) + "]: " + e.what());
      }
    }
  }
  if (!j.contains("sensitivity")) fail(ErrorCode::Config, "profile.sensitivity: missing");
  for (auto c : kAllVehicleClasses) {
    const std::string key(to_string(c));
    const std::string path = "profile.sensitivity." + key;
    if (!j.at("sensitivity").contains(key)) fail(ErrorCode::Config, path + ": missing");
    try {
      p.set_sensitivity(c, j.at("sensitivity").at(key).get<double>());
    } catch (const std::exception& e) {
      fail(ErrorCode::Config, path + ": " + e.what());
    }
  }
  return p;
}

}  // namespace motorlance

#endif
