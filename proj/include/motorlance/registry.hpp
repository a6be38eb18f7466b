#ifndef MOTORLANCE_REGISTRY_HPP
#define MOTORLANCE_REGISTRY_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "motorlance/error.hpp"
#include "motorlance/event_log.hpp"
#include "motorlance/geo.hpp"
#include "motorlance/road_graph.hpp"

namespace motorlance {

struct EmergencyContact {
  std::string name;
  std::string phone;

  friend bool operator==(const EmergencyContact&, const EmergencyContact&) = default;
};

struct RiderProfile {
  std::string rider_id;
  bool registered = false;
  std::optional<std::string> name;
  std::vector<std::string> medical_history;
  std::vector<EmergencyContact> emergency_contacts;
  std::optional<std::string> home_region;

  friend bool operator==(const RiderProfile&, const RiderProfile&) = default;
};

enum class DriverStatus { Offline, Available, Proposed, Assigned, EnRoute, OnScene, Transporting };

inline constexpr std::string_view to_string(DriverStatus s) {
  switch (s) {
    case DriverStatus::Offline: return "offline";
    case DriverStatus::Available: return "available";
    case DriverStatus::Proposed: return "proposed";
    case DriverStatus::Assigned: return "assigned";
    case DriverStatus::EnRoute: return "en_route";
    case DriverStatus::OnScene: return "on_scene";
    case DriverStatus::Transporting: return "transporting";
  }
  return "?";
}

inline constexpr std::array<DriverStatus, 7> kAllDriverStatuses = {
    DriverStatus::Offline,  DriverStatus::Available, DriverStatus::Proposed,    DriverStatus::Assigned,
    DriverStatus::EnRoute,  DriverStatus::OnScene,   DriverStatus::Transporting};

inline std::optional<DriverStatus> parse_driver_status(std::string_view s) {
  for (auto st : kAllDriverStatuses) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

/// Statuses in which a driver holds exactly one request.
inline constexpr bool holds_request(DriverStatus s) {
  return s != DriverStatus::Offline && s != DriverStatus::Available;
}

/// Full driver lifecycle table. Besides the forward chain, any held driver
/// may be released to Available (escalation, cancellation), and a Proposed
/// driver may drop Offline during the confirmation window.
inline constexpr bool is_legal_driver_transition(DriverStatus from, DriverStatus to) {
  using S = DriverStatus;
  switch (from) {
    case S::Offline: return to == S::Available;
    case S::Available: return to == S::Offline || to == S::Proposed;
    case S::Proposed: return to == S::Assigned || to == S::Available || to == S::Offline;
    case S::Assigned: return to == S::EnRoute || to == S::Available;
    case S::EnRoute: return to == S::OnScene || to == S::Available;
    case S::OnScene: return to == S::Transporting || to == S::Available;
    case S::Transporting: return to == S::Available;
  }
  return false;
}

/// Transitions a driver (or rider app) may request directly; the rest are
/// issued by the dispatch core.
inline constexpr bool is_self_service_transition(DriverStatus from, DriverStatus to) {
  return (from == DriverStatus::Offline && to == DriverStatus::Available) ||
         (from == DriverStatus::Available && to == DriverStatus::Offline);
}

struct Driver {
  std::string driver_id;
  DriverStatus status = DriverStatus::Offline;
  GeoPoint location;
  NodeId node = 0;
  VehicleClass vehicle = VehicleClass::Motorlance;
  bool screened = false;
  bool trained = false;
  std::optional<std::string> active_request;

  friend bool operator==(const Driver&, const Driver&) = default;
};

struct Dispatcher {
  std::string dispatcher_id;
  bool on_duty = false;
  bool screened = false;

  friend bool operator==(const Dispatcher&, const Dispatcher&) = default;
};

struct Facility {
  std::string facility_id;
  GeoPoint location;
  NodeId node = 0;
  std::string name;

  friend bool operator==(const Facility&, const Facility&) = default;
};

// ---------------------------------------------------------------- JSON

inline json to_json(const GeoPoint& p) { return json{{"lat", p.lat()}, {"lon", p.lon()}}; }
inline GeoPoint geo_from_json(const json& j) { return GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>()); }

inline json to_json(const RiderProfile& r) {
  json contacts = json::array();
  for (const auto& c : r.emergency_contacts) contacts.push_back({{"name", c.name}, {"phone", c.phone}});
  json j{{"rider_id", r.rider_id},
         {"registered", r.registered},
         {"medical_history", r.medical_history},
         {"emergency_contacts", contacts}};
  j["name"] = r.name ? json(*r.name) : json(nullptr);
  j["home_region"] = r.home_region ? json(*r.home_region) : json(nullptr);
  return j;
}

inline std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

inline RiderProfile rider_from_json(const json& j) {
  RiderProfile r;
  r.rider_id = j.at("rider_id").get<std::string>();
  r.registered = j.value("registered", false);
  r.name = opt_string(j, "name");
  r.home_region = opt_string(j, "home_region");
  if (j.contains("medical_history")) r.medical_history = j.at("medical_history").get<std::vector<std::string>>();
  if (j.contains("emergency_contacts")) {
    for (const auto& c : j.at("emergency_contacts")) {
      r.emergency_contacts.push_back({c.at("name").get<std::string>(), c.at("phone").get<std::string>()});
    }
  }
  return r;
}

inline json to_json(const Driver& d) {
  return json{{"driver_id", d.driver_id},
              {"status", to_string(d.status)},
              {"location", to_json(d.location)},
              {"node", d.node},
              {"vehicle", to_string(d.vehicle)},
              {"screened", d.screened},
              {"trained", d.trained},
              {"active_request", d.active_request ? json(*d.active_request) : json(nullptr)}};
}

inline Driver driver_from_json(const json& j) {
  Driver d;
  d.driver_id = j.at("driver_id").get<std::string>();
  auto st = parse_driver_status(j.at("status").get<std::string>());
  if (!st) fail(ErrorCode::Validation, "unknown driver status");
  d.status = *st;
  d.location = geo_from_json(j.at("location"));
  d.node = j.at("node").get<NodeId>();
  auto vc = parse_vehicle_class(j.at("vehicle").get<std::string>());
  if (!vc) fail(ErrorCode::Validation, "unknown vehicle class");
  d.vehicle = *vc;
  d.screened = j.at("screened").get<bool>();
  d.trained = j.at("trained").get<bool>();
  d.active_request = opt_string(j, "active_request");
  return d;
}

inline json to_json(const Dispatcher& d) {
  return json{{"dispatcher_id", d.dispatcher_id}, {"on_duty", d.on_duty}, {"screened", d.screened}};
}

inline Dispatcher dispatcher_from_json(const json& j) {
  return Dispatcher{j.at("dispatcher_id").get<std::string>(), j.at("on_duty").get<bool>(),
                    j.at("screened").get<bool>()};
}

inline json to_json(const Facility& f) {
  return json{{"facility_id", f.facility_id}, {"location", to_json(f.location)}, {"node", f.node}, {"name", f.name}};
}

inline Facility facility_from_json(const json& j) {
  return Facility{j.at("facility_id").get<std::string>(), geo_from_json(j.at("location")),
                  j.at("node").get<NodeId>(), j.value("name", std::string{})};
}

// ---------------------------------------------------------------- state

struct RegistryState {
  std::map<std::string, RiderProfile> riders;
  std::map<std::string, Driver> drivers;
  std::map<std::string, Dispatcher> dispatchers;
  std::map<std::string, Facility> facilities;

  friend bool operator==(const RegistryState&, const RegistryState&) = default;

  /// Upserts every registry entity carried in an event payload. Payloads use
  /// the keys rider, driver, drivers, dispatcher, facility.
  void apply(const Event& e) {
    const json& p = e.payload;
    if (p.contains("rider")) {
      auto r = rider_from_json(p.at("rider"));
      riders[r.rider_id] = r;
    }
    if (p.contains("driver")) {
      auto d = driver_from_json(p.at("driver"));
      drivers[d.driver_id] = d;
    }
    if (p.contains("drivers")) {
      for (const auto& dj : p.at("drivers")) {
        auto d = driver_from_json(dj);
        drivers[d.driver_id] = d;
      }
    }
    if (p.contains("dispatcher")) {
      auto d = dispatcher_from_json(p.at("dispatcher"));
      dispatchers[d.dispatcher_id] = d;
    }
    if (p.contains("facility_record")) {
      auto f = facility_from_json(p.at("facility_record"));
      facilities[f.facility_id] = f;
    }
  }
};

inline json to_json(const RegistryState& s) {
  json j{{"riders", json::array()}, {"drivers", json::array()}, {"dispatchers", json::array()},
         {"facilities", json::array()}};
  for (const auto& [_, r] : s.riders) j["riders"].push_back(to_json(r));
  for (const auto& [_, d] : s.drivers) j["drivers"].push_back(to_json(d));
  for (const auto& [_, d] : s.dispatchers) j["dispatchers"].push_back(to_json(d));
  for (const auto& [_, f] : s.facilities) j["facilities"].push_back(to_json(f));
  return j;
}

inline RegistryState registry_state_from_json(const json& j) {
  RegistryState s;
  for (const auto& r : j.at("riders")) {
    auto v = rider_from_json(r);
    s.riders[v.rider_id] = v;
  }
  for (const auto& d : j.at("drivers")) {
    auto v = driver_from_json(d);
    s.drivers[v.driver_id] = v;
  }
  for (const auto& d : j.at("dispatchers")) {
    auto v = dispatcher_from_json(d);
    s.dispatchers[v.dispatcher_id] = v;
  }
  for (const auto& f : j.at("facilities")) {
    auto v = facility_from_json(f);
    s.facilities[v.facility_id] = v;
  }
  return s;
}

// ---------------------------------------------------------------- registry

struct RiderRegistration {
  std::string rider_id;
  std::optional<std::string> name;
  std::vector<std::string> medical_history;
  std::vector<EmergencyContact> emergency_contacts;
  std::optional<std::string> home_region;
};

inline bool valid_phone(const std::string& phone) {
  return !phone.empty() &&
         std::all_of(phone.begin(), phone.end(), [](char c) { return c == '+' || (c >= '0' && c <= '9'); });
}

/// Store of riders, drivers, dispatchers, and facilities. Every public
/// mutation appends exactly one event to the shared log; the `*_unlogged`
/// variants exist for the dispatch core, which folds driver changes into its
/// own command event.
///
/// Single writer: callers serialize mutations.
class Registry {
 public:
  explicit Registry(EventLog& log, const RoadGraph* graph = nullptr) : log_(&log), graph_(graph) {}

  EventLog& log() noexcept { return *log_; }
  const EventLog& log() const noexcept { return *log_; }
  const RegistryState& state() const noexcept { return state_; }

  // -- riders

  const RiderProfile& register_rider(const RiderRegistration& reg, double now) {
    if (reg.rider_id.empty()) fail(ErrorCode::Validation, "rider_id must be nonempty");
    if (state_.riders.contains(reg.rider_id)) fail(ErrorCode::Conflict, "rider " + reg.rider_id + " already exists");
    for (const auto& c : reg.emergency_contacts) {
      if (!valid_phone(c.phone)) fail(ErrorCode::Validation, "invalid phone number for contact " + c.name);
    }
    RiderProfile r;
    r.rider_id = reg.rider_id;
    r.registered = reg.name.has_value() || reg.home_region.has_value() || !reg.medical_history.empty() ||
                   !reg.emergency_contacts.empty();
    r.name = reg.name;
    r.medical_history = reg.medical_history;
    r.emergency_contacts = reg.emergency_contacts;
    r.home_region = reg.home_region;
    state_.riders[r.rider_id] = r;
    log_->append("rider_registered", json{{"rider", to_json(r)}}, now);
    return state_.riders.at(r.rider_id);
  }

  const RiderProfile& rider(const std::string& id) const {
    auto it = state_.riders.find(id);
    if (it == state_.riders.end()) fail(ErrorCode::NotFound, "unknown rider " + id);
    return it->second;
  }

  // -- drivers

  const Driver& add_driver(Driver d, double now) {
    if (d.driver_id.empty()) fail(ErrorCode::Validation, "driver_id must be nonempty");
    if (state_.drivers.contains(d.driver_id)) fail(ErrorCode::Conflict, "driver " + d.driver_id + " already exists");
    check_node(d.node);
    if (d.status != DriverStatus::Offline && d.status != DriverStatus::Available) {
      fail(ErrorCode::IllegalTransition, "new drivers start Offline or Available");
    }
    if (d.status == DriverStatus::Available && !(d.screened && d.trained)) {
      fail(ErrorCode::ScreeningIncomplete, "driver " + d.driver_id + " has not completed screening and training");
    }
    d.active_request.reset();
    state_.drivers[d.driver_id] = d;
    log_->append("driver_added", json{{"driver", to_json(d)}}, now);
    return state_.drivers.at(d.driver_id);
  }

  const Driver& driver(const std::string& id) const {
    auto it = state_.drivers.find(id);
    if (it == state_.drivers.end()) fail(ErrorCode::NotFound, "unknown driver " + id);
    return it->second;
  }

  /// Self-service status change (Offline <-> Available only).
  const Driver& set_driver_status(const std::string& id, DriverStatus to, double now) {
    const Driver& d = driver(id);
    if (!is_self_service_transition(d.status, to)) {
      fail(ErrorCode::IllegalTransition, "driver " + id + ": " + std::string(to_string(d.status)) + " -> " +
                                             std::string(to_string(to)) + " is not allowed");
    }
    Driver updated = transition_driver_unlogged(id, to, std::nullopt);
    log_->append("driver_status", json{{"driver", to_json(updated)}}, now);
    return driver(id);
  }

  const Driver& set_driver_screening(const std::string& id, bool screened, bool trained, double now) {
    Driver d = driver(id);
    if (holds_request(d.status) && !(screened && trained)) {
      fail(ErrorCode::Conflict, "driver " + id + " is serving a request");
    }
    d.screened = screened;
    d.trained = trained;
    if (d.status == DriverStatus::Available && !(screened && trained)) d.status = DriverStatus::Offline;
    state_.drivers[id] = d;
    log_->append("driver_screening", json{{"driver", to_json(d)}}, now);
    return driver(id);
  }

  /// Applies a lifecycle transition without logging. `request` is the request
  /// the driver holds after the transition (ignored when releasing).
  Driver transition_driver_unlogged(const std::string& id, DriverStatus to,
                                    const std::optional<std::string>& request) {
    Driver& d = mutable_driver(id);
    if (!is_legal_driver_transition(d.status, to)) {
      fail(ErrorCode::IllegalTransition, "driver " + id + ": " + std::string(to_string(d.status)) + " -> " +
                                             std::string(to_string(to)));
    }
    if (to == DriverStatus::Available && !(d.screened && d.trained)) {
      fail(ErrorCode::ScreeningIncomplete, "driver " + id + " has not completed screening and training");
    }
    if (holds_request(to)) {
      if (!request) fail(ErrorCode::IllegalTransition, "status " + std::string(to_string(to)) + " requires a request");
      if (d.active_request && *d.active_request != *request) {
        fail(ErrorCode::Conflict, "driver " + id + " already holds request " + *d.active_request);
      }
      d.active_request = request;
    } else {
      d.active_request.reset();
    }
    d.status = to;
    return d;
  }

  Driver move_driver_unlogged(const std::string& id, GeoPoint location, NodeId node) {
    check_node(node);
    Driver& d = mutable_driver(id);
    d.location = location;
    d.node = node;
    return d;
  }

  // -- dispatchers

  const Dispatcher& add_dispatcher(Dispatcher d, double now) {
    if (d.dispatcher_id.empty()) fail(ErrorCode::Validation, "dispatcher_id must be nonempty");
    if (state_.dispatchers.contains(d.dispatcher_id)) {
      fail(ErrorCode::Conflict, "dispatcher " + d.dispatcher_id + " already exists");
    }
    if (d.on_duty && !d.screened) fail(ErrorCode::ScreeningIncomplete, "dispatcher " + d.dispatcher_id + " not screened");
    state_.dispatchers[d.dispatcher_id] = d;
    log_->append("dispatcher_added", json{{"dispatcher", to_json(d)}}, now);
    return state_.dispatchers.at(d.dispatcher_id);
  }

  const Dispatcher& dispatcher(const std::string& id) const {
    auto it = state_.dispatchers.find(id);
    if (it == state_.dispatchers.end()) fail(ErrorCode::NotFound, "unknown dispatcher " + id);
    return it->second;
  }

  const Dispatcher& set_dispatcher_duty(const std::string& id, bool on_duty, double now) {
    Dispatcher d = dispatcher(id);
    if (on_duty && !d.screened) fail(ErrorCode::ScreeningIncomplete, "dispatcher " + id + " not screened");
    d.on_duty = on_duty;
    state_.dispatchers[id] = d;
    log_->append("dispatcher_duty", json{{"dispatcher", to_json(d)}}, now);
    return dispatcher(id);
  }

  const Dispatcher& set_dispatcher_screened(const std::string& id, bool screened, double now) {
    Dispatcher d = dispatcher(id);
    d.screened = screened;
    if (!screened) d.on_duty = false;
    state_.dispatchers[id] = d;
    log_->append("dispatcher_screening", json{{"dispatcher", to_json(d)}}, now);
    return dispatcher(id);
  }

  std::vector<std::string> on_duty_dispatchers() const {
    std::vector<std::string> out;
    for (const auto& [id, d] : state_.dispatchers) {
      if (d.on_duty) out.push_back(id);
    }
    return out;
  }

  // -- facilities

  const Facility& add_facility(Facility f, double now) {
    if (f.facility_id.empty()) fail(ErrorCode::Validation, "facility_id must be nonempty");
    if (state_.facilities.contains(f.facility_id)) {
      fail(ErrorCode::Conflict, "facility " + f.facility_id + " already exists");
    }
    check_node(f.node);
    state_.facilities[f.facility_id] = f;
    log_->append("facility_added", json{{"facility_record", to_json(f)}}, now);
    return state_.facilities.at(f.facility_id);
  }

  const Facility& facility(const std::string& id) const {
    auto it = state_.facilities.find(id);
    if (it == state_.facilities.end()) fail(ErrorCode::UnknownFacility, "unknown facility " + id);
    return it->second;
  }

  // -- rollback support for multi-step commands

  std::map<std::string, Driver> drivers_checkpoint() const { return state_.drivers; }
  void rollback_drivers(std::map<std::string, Driver> drivers) { state_.drivers = std::move(drivers); }

  // -- persistence

  static RegistryState replay(const EventLog& log) {
    RegistryState s;
    for (const auto& e : log.events()) s.apply(e);
    return s;
  }

  /// Restores state from a snapshot plus the events after it.
  void restore(RegistryState snapshot, const EventLog& tail) {
    state_ = std::move(snapshot);
    for (const auto& e : tail.events()) state_.apply(e);
  }

 private:
  Driver& mutable_driver(const std::string& id) {
    auto it = state_.drivers.find(id);
    if (it == state_.drivers.end()) fail(ErrorCode::NotFound, "unknown driver " + id);
    return it->second;
  }

  void check_node(NodeId node) const {
    if (graph_ && !graph_->has_node(node)) {
      fail(ErrorCode::Validation, "node " + std::to_string(node) + " not in scenario graph");
    }
  }

  EventLog* log_;
  const RoadGraph* graph_;
  RegistryState state_;
};

}  // namespace motorlance

#endif
