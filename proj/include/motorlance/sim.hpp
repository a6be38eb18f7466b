#ifndef MOTORLANCE_SIM_HPP
#define MOTORLANCE_SIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "motorlance/dispatch.hpp"
#include "motorlance/error.hpp"
#include "motorlance/graph_io.hpp"
#include "motorlance/registry.hpp"
#include "motorlance/road_graph.hpp"

namespace motorlance::sim {

// ---------------------------------------------------------------- demand

/// Name recorded in reports. mt19937_64 has a fully specified output
/// sequence; uniforms and exponentials are derived by hand so results do
/// not depend on the standard library's distribution implementations.
inline constexpr const char* kPrngName = "mt19937_64/u53-inverse-exp/v1";

struct OriginWeight {
  NodeId node = 0;
  double weight = 0.0;
};

struct DemandModel {
  double rate_per_hour = 0.0;
  std::vector<OriginWeight> origins;

  void validate() const {
    if (!(rate_per_hour > 0.0) || !std::isfinite(rate_per_hour)) {
      fail(ErrorCode::Config, "demand.rate_per_hour must be > 0");
    }
    if (origins.empty()) fail(ErrorCode::Config, "demand.origins must be nonempty");
    double total = 0.0;
    for (std::size_t i = 0; i < origins.size(); ++i) {
      if (!(origins[i].weight >= 0.0) || !std::isfinite(origins[i].weight)) {
        fail(ErrorCode::Config, "demand.origins[" + std::to_string(i) + "].weight must be >= 0");
      }
      total += origins[i].weight;
    }
    if (!(total > 0.0)) fail(ErrorCode::Config, "demand.origins weights must sum to > 0");
  }
};

struct Arrival {
  double at = 0.0;  // seconds after simulation start
  NodeId origin = 0;

  friend bool operator==(const Arrival&, const Arrival&) = default;
};

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Poisson arrivals on [0, horizon) with weighted origins.
inline std::vector<Arrival> generate_demand(std::uint64_t seed, const DemandModel& demand, double horizon_s) {
  demand.validate();
  std::mt19937_64 rng(seed);
  const double mean_gap = 3600.0 / demand.rate_per_hour;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& o : demand.origins) {
    total += o.weight;
    cumulative.push_back(total);
  }
  std::vector<Arrival> out;
  double t = 0.0;
  for (;;) {
    t += -mean_gap * std::log1p(-uniform01(rng));
    if (t >= horizon_s) break;
    const double pick = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    out.push_back({t, demand.origins[static_cast<std::size_t>(it - cumulative.begin())].node});
  }
  return out;
}

// ---------------------------------------------------------------- scenario

struct FleetEntry {
  VehicleClass vehicle = VehicleClass::Motorlance;
  int count = 0;
  NodeId depot = 0;
};

struct FacilitySpec {
  std::string id;
  NodeId node = 0;
  std::string name;
};

struct Scenario {
  std::string name;
  std::shared_ptr<const RoadGraph> graph;
  std::shared_ptr<const CongestionProfile> profile;
  std::vector<FleetEntry> fleet;
  std::vector<FacilitySpec> facilities;
  DemandModel demand;
  double horizon_s = 0.0;
  std::uint64_t seed = 1;
  DispatchConfig dispatch;
  bool dispatcher_present = false;
  /// Simulated dispatcher confirms this long after the proposal (< window).
  double dispatcher_reaction_s = 0.0;
  /// Time of day (seconds past midnight) at simulation start.
  double start_time_s = 0.0;
  double on_scene_service_s = 300.0;
  std::map<std::string, NodeId> landmarks;

  void validate() const {
    if (!graph || !profile) fail(ErrorCode::Config, "scenario: graph and profile required");
    if (!profile->complete()) fail(ErrorCode::Config, "profile: missing hourly buckets");
    if (fleet.empty()) fail(ErrorCode::Config, "scenario.fleet: must be nonempty");
    for (std::size_t i = 0; i < fleet.size(); ++i) {
      const std::string path = "scenario.fleet[" + std::to_string(i) + "]";
      if (fleet[i].count <= 0) fail(ErrorCode::Config, path + ".count: must be > 0");
      if (!graph->has_node(fleet[i].depot)) fail(ErrorCode::Config, path + ".depot: unknown node");
    }
    for (std::size_t i = 0; i < facilities.size(); ++i) {
      if (!graph->has_node(facilities[i].node)) {
        fail(ErrorCode::Config, "scenario.facilities[" + std::to_string(i) + "].node: unknown node");
      }
    }
    for (std::size_t i = 0; i < demand.origins.size(); ++i) {
      if (!graph->has_node(demand.origins[i].node)) {
        fail(ErrorCode::Config, "scenario.demand.origins[" + std::to_string(i) + "].node: unknown node");
      }
    }
    demand.validate();
    if (!(horizon_s > 0.0)) fail(ErrorCode::Config, "scenario.horizon_s: must be > 0");
    if (dispatcher_present && dispatcher_reaction_s >= dispatch.confirmation_window_s) {
      fail(ErrorCode::Config, "scenario.dispatcher_reaction_s: must be below the confirmation window");
    }
    if (!(on_scene_service_s >= 0.0)) fail(ErrorCode::Config, "scenario.on_scene_service_s: must be >= 0");
    dispatch.validate();
  }

  /// Same scenario with every vehicle replaced by `vc`.
  Scenario with_fleet_class(VehicleClass vc) const {
    Scenario s = *this;
    for (auto& f : s.fleet) f.vehicle = vc;
    return s;
  }
};

/// Parses the `scenario` object of a scenario file. The graph and profile
/// come from the same document unless `scenario.graph_file` names another
/// file (resolved relative to `base_dir`).
inline Scenario scenario_from_json(const json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::field;
  Scenario s;
  if (!doc.contains("scenario")) fail(ErrorCode::Config, "scenario: missing");
  const json& sc = doc.at("scenario");
  s.name = doc.value("name", std::string("unnamed"));

  json graph_doc = doc;
  if (sc.contains("graph_file")) {
    graph_doc = read_json_file((base_dir / field<std::string>(sc, "graph_file", "scenario")).string());
  }
  s.graph = std::make_shared<const RoadGraph>(load_graph(graph_doc));
  if (!graph_doc.contains("profile")) fail(ErrorCode::Config, "profile: missing");
  s.profile = std::make_shared<const CongestionProfile>(load_profile(graph_doc.at("profile")));

  if (!sc.contains("fleet") || !sc.at("fleet").is_array()) fail(ErrorCode::Config, "scenario.fleet: missing");
  for (std::size_t i = 0; i < sc.at("fleet").size(); ++i) {
    const auto& f = sc.at("fleet")[i];
    const std::string path = "scenario.fleet[" + std::to_string(i) + "]";
    auto vc = parse_vehicle_class(field<std::string>(f, "vehicle", path));
    if (!vc) fail(ErrorCode::Config, path + ".vehicle: unknown vehicle class");
    s.fleet.push_back({*vc, field<int>(f, "count", path), field<NodeId>(f, "depot", path)});
  }
  if (sc.contains("facilities")) {
    for (std::size_t i = 0; i < sc.at("facilities").size(); ++i) {
      const auto& f = sc.at("facilities")[i];
      const std::string path = "scenario.facilities[" + std::to_string(i) + "]";
      s.facilities.push_back({field<std::string>(f, "id", path), field<NodeId>(f, "node", path),
                              f.value("name", std::string{})});
    }
  }
  if (!sc.contains("demand")) fail(ErrorCode::Config, "scenario.demand: missing");
  const auto& d = sc.at("demand");
  s.demand.rate_per_hour = field<double>(d, "rate_per_hour", "scenario.demand");
  if (d.contains("origins")) {
    for (std::size_t i = 0; i < d.at("origins").size(); ++i) {
      const std::string path = "scenario.demand.origins[" + std::to_string(i) + "]";
      s.demand.origins.push_back(
          {field<NodeId>(d.at("origins")[i], "node", path), field<double>(d.at("origins")[i], "weight", path)});
    }
  } else {
    for (const auto& n : s.graph->nodes()) s.demand.origins.push_back({n.id, 1.0});
  }
  s.horizon_s = field<double>(sc, "horizon_s", "scenario");
  s.seed = sc.value("seed", std::uint64_t{1});
  s.start_time_s = sc.value("start_time_s", 0.0);
  s.on_scene_service_s = sc.value("on_scene_service_s", 300.0);
  s.dispatcher_present = sc.value("dispatcher_present", false);
  s.dispatcher_reaction_s = sc.value("dispatcher_reaction_s", 0.0);
  if (sc.contains("dispatch")) {
    const auto& dc = sc.at("dispatch");
    s.dispatch.confirmation_window_s = dc.value("confirmation_window_s", 15.0);
    s.dispatch.notify_contacts = dc.value("notify_contacts", true);
    s.dispatch.nearest_k_considered = dc.value("nearest_k_considered", 1);
  }
  if (sc.contains("landmarks")) {
    for (auto it = sc.at("landmarks").begin(); it != sc.at("landmarks").end(); ++it) {
      s.landmarks[it.key()] = it.value().get<NodeId>();
    }
  }
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  json doc = read_json_file(path);
  return scenario_from_json(doc, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------- metrics

struct ResponseStats {
  std::vector<double> samples;
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;

  std::size_t count() const noexcept { return samples.size(); }

  static ResponseStats from(std::vector<double> samples) {
    ResponseStats s;
    s.samples = std::move(samples);
    if (s.samples.empty()) return s;
    std::vector<double> sorted = s.samples;
    std::sort(sorted.begin(), sorted.end());
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    const std::size_t n = sorted.size();
    s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    // nearest-rank
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
    s.p90 = sorted[std::max<std::size_t>(rank, 1) - 1];
    return s;
  }

  friend bool operator==(const ResponseStats&, const ResponseStats&) = default;
};

struct MetricsReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::map<VehicleClass, ResponseStats> by_class;
  ResponseStats overall;
  double utilization = 0.0;
  std::size_t arrivals = 0;
  std::size_t served = 0;
  std::size_t escalations = 0;
  std::size_t open_at_horizon = 0;
  std::size_t events_processed = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// 100 * (1 - mean_motorlance / mean_ambulance).
inline double reduction_percent(const MetricsReport& motorlance, const MetricsReport& ambulance) {
  if (motorlance.overall.count() == 0 || ambulance.overall.count() == 0 || ambulance.overall.mean <= 0.0) {
    fail(ErrorCode::Domain, "reduction undefined without served requests in both runs");
  }
  return 100.0 * (1.0 - motorlance.overall.mean / ambulance.overall.mean);
}

inline json to_json(const ResponseStats& s, bool with_samples) {
  json j{{"count", s.count()}, {"mean_s", s.mean}, {"median_s", s.median}, {"p90_s", s.p90}};
  if (with_samples) j["samples_s"] = s.samples;
  return j;
}

inline json to_json(const MetricsReport& r, bool with_samples = true) {
  json classes = json::object();
  for (const auto& [vc, st] : r.by_class) classes[std::string(to_string(vc))] = to_json(st, with_samples);
  return json{{"scenario", r.scenario},
              {"seed", r.seed},
              {"prng", kPrngName},
              {"by_class", classes},
              {"overall", to_json(r.overall, with_samples)},
              {"utilization", r.utilization},
              {"arrivals", r.arrivals},
              {"served", r.served},
              {"escalations", r.escalations},
              {"open_at_horizon", r.open_at_horizon},
              {"events_processed", r.events_processed}};
}

inline std::string format_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "scenario " << r.scenario << "  seed " << r.seed << "\n";
  os << "arrivals " << r.arrivals << "  served " << r.served << "  escalated " << r.escalations << "  open "
     << r.open_at_horizon << "  utilization " << 100.0 * r.utilization << "%\n";
  os << std::left << std::setw(12) << "class" << std::right << std::setw(8) << "n" << std::setw(12) << "mean_s"
     << std::setw(12) << "median_s" << std::setw(12) << "p90_s" << "\n";
  auto row = [&](const std::string& name, const ResponseStats& s) {
    os << std::left << std::setw(12) << name << std::right << std::setw(8) << s.count() << std::setw(12) << s.mean
       << std::setw(12) << s.median << std::setw(12) << s.p90 << "\n";
  };
  for (const auto& [vc, st] : r.by_class) row(std::string(to_string(vc)), st);
  row("all", r.overall);
  return os.str();
}

// ---------------------------------------------------------------- engine

enum class SimEventKind : int {
  ArriveFacility = 0,
  ArriveScene = 1,
  BeginTransport = 2,
  WindowExpiry = 3,
  DispatcherConfirm = 4,
  RequestArrival = 5,
};

struct SimEvent {
  double at = 0.0;
  SimEventKind kind = SimEventKind::RequestArrival;
  std::size_t id = 0;  // arrival index

  bool operator>(const SimEvent& o) const {
    return std::tie(at, kind, id) > std::tie(o.at, o.kind, o.id);
  }
};

/// Called after each processed event with the virtual time and the core.
using Observer = std::function<void(double, const DispatchCore&)>;

/// Runs one scenario to the horizon. The real DispatchCore drives every
/// transition; the engine only schedules travel, service, and timers.
inline MetricsReport run(const Scenario& scenario, const Observer& observer = {}) {
  scenario.validate();
  const double t0 = scenario.start_time_s;
  const double t_end = t0 + scenario.horizon_s;

  EventLog log;
  Registry registry(log, scenario.graph.get());
  DispatchConfig cfg = scenario.dispatch;
  cfg.clock_offset_s = 0.0;
  DispatchCore core(scenario.graph, scenario.profile, registry, cfg);
  const RoadGraph& g = *scenario.graph;

  for (const auto& f : scenario.facilities) {
    registry.add_facility({f.id, g.node(f.node).location, f.node, f.name}, t0);
  }
  std::map<std::string, VehicleClass> driver_class;
  int serial = 0;
  for (const auto& entry : scenario.fleet) {
    for (int i = 0; i < entry.count; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "D%03d", ++serial);
      Driver d;
      d.driver_id = id;
      d.status = DriverStatus::Available;
      d.location = g.node(entry.depot).location;
      d.node = entry.depot;
      d.vehicle = entry.vehicle;
      d.screened = d.trained = true;
      registry.add_driver(d, t0);
      driver_class[id] = entry.vehicle;
    }
  }
  const std::string dispatcher_id = "SIM-DISPATCH";
  if (scenario.dispatcher_present) registry.add_dispatcher({dispatcher_id, true, true}, t0);

  const auto arrivals = generate_demand(scenario.seed, scenario.demand, scenario.horizon_s);
  std::vector<std::string> request_of(arrivals.size());
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> queue;
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    queue.push({t0 + arrivals[i].at, SimEventKind::RequestArrival, i});
  }

  std::map<VehicleClass, std::vector<double>> samples;
  std::vector<double> all_samples;
  std::map<std::string, double> busy_since;
  double busy_total = 0.0;
  std::size_t escalations = 0;
  std::size_t processed = 0;
  double last_t = t0;

  auto travel = [&](const Driver& d, NodeId to, double now) {
    return shortest_travel_time(g, *scenario.profile, d.node, to, d.vehicle, now).seconds;
  };
  auto schedule_scene = [&](std::size_t i, double now) {
    const Request& r = core.request(request_of[i]);
    const Driver& d = registry.driver(*r.assigned_driver);
    queue.push({now + travel(d, r.origin_node, now), SimEventKind::ArriveScene, i});
  };

  while (!queue.empty() && queue.top().at <= t_end) {
    const SimEvent ev = queue.top();
    queue.pop();
    if (ev.at < last_t) fail(ErrorCode::Domain, "virtual clock moved backwards");
    last_t = ev.at;
    const double now = ev.at;
    ++processed;

    switch (ev.kind) {
      case SimEventKind::RequestArrival: {
        const NodeId origin = arrivals[ev.id].origin;
        const Request& r = core.create_request(std::nullopt, g.node(origin).location, "", now);
        request_of[ev.id] = r.request_id;
        if (r.state == RequestState::EscalatedToEMS) {
          ++escalations;
          break;
        }
        busy_since[*r.proposed_driver] = now;
        if (scenario.dispatcher_present) {
          queue.push({now + scenario.dispatcher_reaction_s, SimEventKind::DispatcherConfirm, ev.id});
        } else {
          queue.push({*r.window_deadline, SimEventKind::WindowExpiry, ev.id});
        }
        break;
      }
      case SimEventKind::DispatcherConfirm: {
        core.dispatcher_confirm(request_of[ev.id], dispatcher_id, now);
        schedule_scene(ev.id, now);
        break;
      }
      case SimEventKind::WindowExpiry: {
        const Request& r = core.on_window_expire(request_of[ev.id], now);
        if (r.state == RequestState::EnRoute) schedule_scene(ev.id, now);
        break;
      }
      case SimEventKind::ArriveScene: {
        const Request& r = core.request(request_of[ev.id]);
        const std::string driver = *r.assigned_driver;
        core.update_driver_location(driver, r.origin, now, r.origin_node);
        core.progress(r.request_id, Progress::ArriveScene, driver, now);
        const double response = now - r.created_at;
        samples[driver_class.at(driver)].push_back(response);
        all_samples.push_back(response);
        queue.push({now + scenario.on_scene_service_s, SimEventKind::BeginTransport, ev.id});
        break;
      }
      case SimEventKind::BeginTransport: {
        const std::string driver = *core.request(request_of[ev.id]).assigned_driver;
        const Request& r = core.progress(request_of[ev.id], Progress::BeginTransport, driver, now);
        double leg = 0.0;
        if (r.facility) leg = travel(registry.driver(driver), registry.facility(*r.facility).node, now);
        queue.push({now + leg, SimEventKind::ArriveFacility, ev.id});
        break;
      }
      case SimEventKind::ArriveFacility: {
        const Request& r = core.request(request_of[ev.id]);
        const std::string driver = *r.assigned_driver;
        if (r.facility) {
          const Facility& f = registry.facility(*r.facility);
          core.update_driver_location(driver, f.location, now, f.node);
        }
        core.progress(r.request_id, Progress::Complete, driver, now);
        busy_total += now - busy_since.at(driver);
        busy_since.erase(driver);
        break;
      }
    }
    if (observer) observer(now, core);
  }
  for (const auto& [_, since] : busy_since) busy_total += t_end - since;

  MetricsReport rep;
  rep.scenario = scenario.name;
  rep.seed = scenario.seed;
  for (auto& [vc, v] : samples) rep.by_class[vc] = ResponseStats::from(std::move(v));
  rep.overall = ResponseStats::from(std::move(all_samples));
  rep.utilization = busy_total / (static_cast<double>(driver_class.size()) * scenario.horizon_s);
  rep.arrivals = arrivals.size();
  rep.served = rep.overall.count();
  rep.escalations = escalations;
  rep.open_at_horizon = rep.arrivals - rep.served - rep.escalations;
  rep.events_processed = processed;
  return rep;
}

struct Comparison {
  MetricsReport motorlance;
  MetricsReport ambulance;
  double reduction_percent = 0.0;
};

/// Runs the scenario fleet as given and again with every vehicle replaced by
/// an ambulance; both runs share the seed and therefore the demand.
inline Comparison compare_modes(const Scenario& scenario) {
  Comparison c;
  c.motorlance = run(scenario);
  c.ambulance = run(scenario.with_fleet_class(VehicleClass::Ambulance));
  c.reduction_percent = reduction_percent(c.motorlance, c.ambulance);
  return c;
}

inline json to_json(const Comparison& c) {
  return json{{"motorlance", to_json(c.motorlance, false)},
              {"ambulance", to_json(c.ambulance, false)},
              {"reduction_percent", c.reduction_percent},
              {"median_reduction_percent",
               c.ambulance.overall.median > 0 ? 100.0 * (1.0 - c.motorlance.overall.median / c.ambulance.overall.median)
                                              : 0.0}};
}

}  // namespace motorlance::sim

#endif
