#ifndef MOTORLANCE_DISPATCH_HPP
#define MOTORLANCE_DISPATCH_HPP

#include <algorithm>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "motorlance/error.hpp"
#include "motorlance/event_log.hpp"
#include "motorlance/geo.hpp"
#include "motorlance/registry.hpp"
#include "motorlance/road_graph.hpp"
#include "motorlance/time_format.hpp"

namespace motorlance {

enum class RequestState {
  Created,
  DriverProposed,
  Confirmed,
  EnRoute,
  OnScene,
  Transporting,
  Completed,
  EscalatedToEMS,
  Cancelled
};

inline constexpr std::array<RequestState, 9> kAllRequestStates = {
    RequestState::Created,      RequestState::DriverProposed, RequestState::Confirmed,
    RequestState::EnRoute,      RequestState::OnScene,        RequestState::Transporting,
    RequestState::Completed,    RequestState::EscalatedToEMS, RequestState::Cancelled};

inline constexpr std::string_view to_string(RequestState s) {
  switch (s) {
    case RequestState::Created: return "created";
    case RequestState::DriverProposed: return "driver_proposed";
    case RequestState::Confirmed: return "confirmed";
    case RequestState::EnRoute: return "en_route";
    case RequestState::OnScene: return "on_scene";
    case RequestState::Transporting: return "transporting";
    case RequestState::Completed: return "completed";
    case RequestState::EscalatedToEMS: return "escalated_to_ems";
    case RequestState::Cancelled: return "cancelled";
  }
  return "?";
}

inline std::optional<RequestState> parse_request_state(std::string_view s) {
  for (auto st : kAllRequestStates) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

inline constexpr bool is_terminal(RequestState s) {
  return s == RequestState::Completed || s == RequestState::EscalatedToEMS || s == RequestState::Cancelled;
}

/// States in which the request has an assigned driver.
inline constexpr bool has_assignment(RequestState s) {
  return s == RequestState::Confirmed || s == RequestState::EnRoute || s == RequestState::OnScene ||
         s == RequestState::Transporting || s == RequestState::Completed;
}

inline constexpr bool is_legal_request_transition(RequestState from, RequestState to) {
  using S = RequestState;
  if (is_terminal(from)) return false;
  if (to == S::EscalatedToEMS || to == S::Cancelled) return true;
  switch (from) {
    case S::Created: return to == S::DriverProposed;
    case S::DriverProposed: return to == S::Confirmed || to == S::DriverProposed;
    case S::Confirmed: return to == S::EnRoute;
    case S::EnRoute: return to == S::OnScene;
    case S::OnScene: return to == S::Transporting;
    case S::Transporting: return to == S::Completed;
    default: return false;
  }
}

struct DispatchConfig {
  double confirmation_window_s = 15.0;
  bool notify_contacts = true;
  /// How many ranked candidates are shown alongside the proposal.
  int nearest_k_considered = 1;
  /// Added to clock time before looking up congestion buckets (local time).
  double clock_offset_s = 0.0;

  void validate() const {
    if (!(confirmation_window_s > 0.0)) fail(ErrorCode::Config, "confirmation_window must be > 0");
    if (nearest_k_considered < 1) fail(ErrorCode::Config, "nearest_k_considered must be >= 1");
  }
};

struct StateStamp {
  RequestState state;
  double at;

  friend bool operator==(const StateStamp&, const StateStamp&) = default;
};

struct Request {
  std::string request_id;
  std::optional<std::string> rider;  // nullopt = anonymous
  GeoPoint origin;
  NodeId origin_node = 0;
  std::string details;
  RequestState state = RequestState::Created;
  std::optional<std::string> proposed_driver;
  std::optional<std::string> assigned_driver;
  std::optional<std::string> facility;
  bool facility_requires_dispatcher = false;
  double created_at = 0.0;
  std::optional<double> proposed_at;
  std::optional<double> window_deadline;
  std::vector<StateStamp> history;
  std::optional<std::string> dispatcher;  // call-session owner
  std::optional<std::string> confirmed_by;
  bool auto_dispatched = false;
  bool call_open = false;
  std::optional<std::string> escalation_reason;
  std::vector<std::string> candidates;

  friend bool operator==(const Request&, const Request&) = default;
};

inline json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }
inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Request as JSON. Times appear both as ISO-8601 strings and as exact epoch
/// seconds (`*_s`) so that replay reproduces state bit-for-bit.
inline json to_json(const Request& r) {
  json hist = json::array();
  for (const auto& h : r.history) {
    hist.push_back({{"state", to_string(h.state)}, {"at", format_iso8601(h.at)}, {"at_s", h.at}});
  }
  json j{{"request_id", r.request_id},
         {"rider_id", r.rider ? json(*r.rider) : json("anonymous")},
         {"anonymous", !r.rider.has_value()},
         {"origin", to_json(r.origin)},
         {"origin_node", r.origin_node},
         {"details", r.details},
         {"state", to_string(r.state)},
         {"proposed_driver", opt_json(r.proposed_driver)},
         {"assigned_driver", opt_json(r.assigned_driver)},
         {"facility", opt_json(r.facility)},
         {"facility_requires_dispatcher", r.facility_requires_dispatcher},
         {"created_at", format_iso8601(r.created_at)},
         {"created_at_s", r.created_at},
         {"proposed_at_s", opt_json(r.proposed_at)},
         {"window_deadline", r.window_deadline ? json(format_iso8601(*r.window_deadline)) : json(nullptr)},
         {"window_deadline_s", opt_json(r.window_deadline)},
         {"history", hist},
         {"dispatcher", opt_json(r.dispatcher)},
         {"confirmed_by", opt_json(r.confirmed_by)},
         {"auto_dispatched", r.auto_dispatched},
         {"call_open", r.call_open},
         {"escalation_reason", opt_json(r.escalation_reason)},
         {"candidates", r.candidates}};
  return j;
}

inline std::optional<double> opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline Request request_from_json(const json& j) {
  Request r;
  r.request_id = j.at("request_id").get<std::string>();
  if (!j.at("anonymous").get<bool>()) r.rider = j.at("rider_id").get<std::string>();
  r.origin = geo_from_json(j.at("origin"));
  r.origin_node = j.at("origin_node").get<NodeId>();
  r.details = j.at("details").get<std::string>();
  auto st = parse_request_state(j.at("state").get<std::string>());
  if (!st) fail(ErrorCode::Validation, "unknown request state");
  r.state = *st;
  r.proposed_driver = opt_string(j, "proposed_driver");
  r.assigned_driver = opt_string(j, "assigned_driver");
  r.facility = opt_string(j, "facility");
  r.facility_requires_dispatcher = j.at("facility_requires_dispatcher").get<bool>();
  r.created_at = j.at("created_at_s").get<double>();
  r.proposed_at = opt_double(j, "proposed_at_s");
  r.window_deadline = opt_double(j, "window_deadline_s");
  for (const auto& h : j.at("history")) {
    r.history.push_back({*parse_request_state(h.at("state").get<std::string>()), h.at("at_s").get<double>()});
  }
  r.dispatcher = opt_string(j, "dispatcher");
  r.confirmed_by = opt_string(j, "confirmed_by");
  r.auto_dispatched = j.at("auto_dispatched").get<bool>();
  r.call_open = j.at("call_open").get<bool>();
  r.escalation_reason = opt_string(j, "escalation_reason");
  r.candidates = j.at("candidates").get<std::vector<std::string>>();
  return r;
}

// ---------------------------------------------------------------- selection

struct RankedDriver {
  std::string driver_id;
  double seconds;
};

/// All Available drivers that can reach `origin_node`, sorted by predicted
/// travel time and then driver id.
inline std::vector<RankedDriver> rank_available_drivers(const RoadGraph& g, const CongestionProfile& profile,
                                                        const std::map<std::string, Driver>& drivers,
                                                        NodeId origin_node, double now) {
  std::vector<RankedDriver> ranked;
  for (const auto& [id, d] : drivers) {
    if (d.status != DriverStatus::Available) continue;
    try {
      ranked.push_back({id, shortest_travel_time(g, profile, d.node, origin_node, d.vehicle, now).seconds});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unreachable) throw;
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedDriver& a, const RankedDriver& b) {
    return a.seconds != b.seconds ? a.seconds < b.seconds : a.driver_id < b.driver_id;
  });
  return ranked;
}

inline std::string select_nearest_driver(const RoadGraph& g, const CongestionProfile& profile,
                                         const std::map<std::string, Driver>& drivers, NodeId origin_node,
                                         double now) {
  auto ranked = rank_available_drivers(g, profile, drivers, origin_node, now);
  if (ranked.empty()) fail(ErrorCode::NoAvailableDriver, "no available driver can reach node " + std::to_string(origin_node));
  return ranked.front().driver_id;
}

/// Facility with the shortest motorlance travel time from `origin_node`;
/// nullopt when there are no reachable facilities.
inline std::optional<std::string> assign_facility(const RoadGraph& g, const CongestionProfile& profile,
                                                  const std::map<std::string, Facility>& facilities,
                                                  NodeId origin_node, double now) {
  std::optional<std::string> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (const auto& [id, f] : facilities) {
    double t = 0.0;
    try {
      t = shortest_travel_time(g, profile, origin_node, f.node, VehicleClass::Motorlance, now).seconds;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unreachable) throw;
      continue;
    }
    if (t < best_t) {  // map order already gives the smaller id on ties
      best_t = t;
      best = id;
    }
  }
  return best;
}

// ---------------------------------------------------------------- core

enum class Progress { ArriveScene, BeginTransport, Complete };

inline constexpr std::string_view to_string(Progress p) {
  switch (p) {
    case Progress::ArriveScene: return "arrive_scene";
    case Progress::BeginTransport: return "begin_transport";
    case Progress::Complete: return "complete";
  }
  return "?";
}

inline std::optional<Progress> parse_progress(std::string_view s) {
  for (auto p : {Progress::ArriveScene, Progress::BeginTransport, Progress::Complete}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

struct SystemState {
  RegistryState registry;
  std::map<std::string, Request> requests;

  friend bool operator==(const SystemState&, const SystemState&) = default;

  void apply(const Event& e) {
    registry.apply(e);
    if (e.payload.contains("request")) {
      auto r = request_from_json(e.payload.at("request"));
      requests[r.request_id] = r;
    }
  }
};

/// The request lifecycle state machine. Every public mutation appends exactly
/// one event to the registry's log; the event payload carries the post-state
/// of every entity it touched so the log alone reproduces the system.
///
/// Not thread-safe: commands and timer events must be serialized by the caller.
class DispatchCore {
 public:
  DispatchCore(std::shared_ptr<const RoadGraph> graph, std::shared_ptr<const CongestionProfile> profile,
               Registry& registry, DispatchConfig config = {})
      : graph_(std::move(graph)), profile_(std::move(profile)), registry_(&registry), config_(config) {
    config_.validate();
    if (!graph_ || !profile_) fail(ErrorCode::Config, "dispatch core requires a graph and a profile");
  }

  const DispatchConfig& config() const noexcept { return config_; }
  const RoadGraph& graph() const noexcept { return *graph_; }
  const CongestionProfile& profile() const noexcept { return *profile_; }
  Registry& registry() noexcept { return *registry_; }
  const Registry& registry() const noexcept { return *registry_; }
  EventLog& log() noexcept { return registry_->log(); }

  const std::map<std::string, Request>& requests() const noexcept { return requests_; }

  const Request& request(const std::string& id) const {
    auto it = requests_.find(id);
    if (it == requests_.end()) fail(ErrorCode::NotFound, "unknown request " + id);
    return it->second;
  }

  SystemState state() const { return SystemState{registry_->state(), requests_}; }

  // ------------------------------------------------------------ commands

  /// Alert for on-duty dispatchers; logged even when nobody is on duty.
  Seq on_app_open(const std::optional<std::string>& rider, double now) {
    if (rider) registry_->rider(*rider);
    json payload{{"rider_id", rider ? json(*rider) : json("anonymous")},
                 {"anonymous", !rider.has_value()},
                 {"delivered_to", registry_->on_duty_dispatchers()}};
    return log().append("app_open_alert", std::move(payload), now);
  }

  const Request& create_request(const std::optional<std::string>& rider, const GeoPoint& origin,
                                std::string details, double now) {
    const RiderProfile* profile = rider ? &registry_->rider(*rider) : nullptr;
    return transaction([&]() -> const Request& {
      Request r;
      r.request_id = next_request_id();
      r.rider = rider;
      r.origin = origin;
      r.origin_node = graph_->nearest_node(origin);
      r.details = std::move(details);
      r.created_at = now;
      r.history.push_back({RequestState::Created, now});

      auto on_duty = registry_->on_duty_dispatchers();
      if (!on_duty.empty()) r.dispatcher = on_duty.front();
      r.call_open = true;

      json payload{{"call", {{"opened", true}, {"dispatcher", opt_json(r.dispatcher)}}}};

      json notified = json::array();
      if (profile && profile->registered && config_.notify_contacts) {
        for (const auto& c : profile->emergency_contacts) {
          notified.push_back({{"name", c.name}, {"phone", c.phone}});
        }
      }
      payload["contacts_notified"] = notified;

      json drivers = json::array();
      auto ranked = rank_available_drivers(*graph_, *profile_, registry_->state().drivers, r.origin_node, route_time(now));
      if (ranked.empty()) {
        r.state = RequestState::EscalatedToEMS;
        r.escalation_reason = "no_driver";
        r.call_open = false;
        r.history.push_back({RequestState::EscalatedToEMS, now});
        payload["escalated"] = {{"reason", "no_driver"}, {"actor", "system"}};
      } else {
        assign_initial_facility(r, now);
        propose(r, ranked, now, drivers);
      }
      payload["drivers"] = drivers;
      auto& stored = requests_[r.request_id] = r;
      payload["request"] = to_json(stored);
      log().append("request_created", std::move(payload), now);
      return stored;
    });
  }

  const Request& dispatcher_confirm(const std::string& id, const std::string& dispatcher_id, double now) {
    const Dispatcher& d = registry_->dispatcher(dispatcher_id);
    if (!d.on_duty) fail(ErrorCode::Forbidden, "dispatcher " + dispatcher_id + " is not on duty");
    fire_if_due(id, now);
    Request& r = mutable_request(id);
    require_open_window(r);
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      confirm(r, dispatcher_id, false, now, drivers);
      return commit(r, "confirmed", json{{"by", dispatcher_id}, {"auto", false}, {"drivers", drivers}}, now);
    });
  }

  /// Dispatcher picks another driver; this also confirms the assignment.
  const Request& dispatcher_reassign(const std::string& id, const std::string& new_driver,
                                     const std::string& dispatcher_id, double now) {
    const Dispatcher& d = registry_->dispatcher(dispatcher_id);
    if (!d.on_duty) fail(ErrorCode::Forbidden, "dispatcher " + dispatcher_id + " is not on duty");
    fire_if_due(id, now);
    Request& r = mutable_request(id);
    require_open_window(r);
    const Driver& target = registry_->driver(new_driver);
    if (target.status != DriverStatus::Available) {
      fail(ErrorCode::DriverUnavailable, "driver " + new_driver + " is " + std::string(to_string(target.status)));
    }
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      const std::string previous = *r.proposed_driver;
      drivers.push_back(to_json(registry_->transition_driver_unlogged(previous, DriverStatus::Available, std::nullopt)));
      registry_->transition_driver_unlogged(new_driver, DriverStatus::Proposed, r.request_id);
      r.proposed_driver = new_driver;
      r.history.push_back({RequestState::DriverProposed, now});
      confirm(r, dispatcher_id, false, now, drivers);
      return commit(r, "reassigned",
                    json{{"from", previous}, {"to", new_driver}, {"by", dispatcher_id}, {"drivers", drivers}}, now);
    });
  }

  /// Auto-dispatch when the confirmation window lapses. No-op (and no event)
  /// when the request has already left DriverProposed or the deadline is ahead.
  const Request& on_window_expire(const std::string& id, double now) {
    Request& r = mutable_request(id);
    if (r.state != RequestState::DriverProposed || !r.window_deadline || now < *r.window_deadline) return r;
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      confirm(r, std::nullopt, true, now, drivers);
      return commit(r, "confirmed", json{{"by", nullptr}, {"auto", true}, {"drivers", drivers}}, now);
    });
  }

  /// Fires every window expiry due at or before `now`, earliest first.
  std::vector<std::string> advance_timers(double now) {
    std::vector<std::string> fired;
    while (!timers_.empty() && timers_.begin()->first <= now) {
      auto [deadline, id] = *timers_.begin();
      on_window_expire(id, std::max(now, deadline));
      timers_.erase({deadline, id});
      fired.push_back(id);
    }
    return fired;
  }

  std::optional<double> next_deadline() const {
    if (timers_.empty()) return std::nullopt;
    return timers_.begin()->first;
  }

  const Request& dispatcher_change_facility(const std::string& id, const std::string& facility_id,
                                            const std::string& dispatcher_id, double now) {
    registry_->dispatcher(dispatcher_id);
    Request& r = mutable_request(id);
    if (is_terminal(r.state)) fail(ErrorCode::WrongState, "request " + id + " is " + std::string(to_string(r.state)));
    registry_->facility(facility_id);
    return transaction([&]() -> const Request& {
      const auto previous = r.facility;
      r.facility = facility_id;
      r.facility_requires_dispatcher = false;
      const bool notify = r.assigned_driver.has_value();
      return commit(r, "facility_changed",
                    json{{"from", opt_json(previous)},
                         {"to", facility_id},
                         {"by", dispatcher_id},
                         {"driver_notified", notify ? json(*r.assigned_driver) : json(nullptr)}},
                    now);
    });
  }

  const Request& escalate_to_ems(const std::string& id, const std::string& reason, const std::string& actor,
                                 double now) {
    Request& r = mutable_request(id);
    if (is_terminal(r.state)) fail(ErrorCode::WrongState, "request " + id + " is " + std::string(to_string(r.state)));
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      release_driver(r, drivers);
      r.state = RequestState::EscalatedToEMS;
      r.escalation_reason = reason;
      r.call_open = false;
      r.history.push_back({RequestState::EscalatedToEMS, now});
      timers_.erase({r.window_deadline.value_or(0.0), r.request_id});
      return commit(r, "escalated", json{{"reason", reason}, {"actor", actor}, {"drivers", drivers}}, now);
    });
  }

  const Request& cancel(const std::string& id, const std::string& actor, double now) {
    Request& r = mutable_request(id);
    if (is_terminal(r.state)) fail(ErrorCode::WrongState, "request " + id + " is " + std::string(to_string(r.state)));
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      release_driver(r, drivers);
      r.state = RequestState::Cancelled;
      r.call_open = false;
      r.history.push_back({RequestState::Cancelled, now});
      timers_.erase({r.window_deadline.value_or(0.0), r.request_id});
      return commit(r, "cancelled", json{{"actor", actor}, {"drivers", drivers}}, now);
    });
  }

  const Request& progress(const std::string& id, Progress step, const std::string& driver_id, double now) {
    Request& r = mutable_request(id);
    if (!r.assigned_driver || is_terminal(r.state)) {
      fail(ErrorCode::IllegalTransition, "request " + id + " has no active assignment");
    }
    if (*r.assigned_driver != driver_id) fail(ErrorCode::WrongDriver, "driver " + driver_id + " is not assigned to " + id);
    RequestState from = r.state;
    RequestState to{};
    DriverStatus driver_to{};
    switch (step) {
      case Progress::ArriveScene:
        to = RequestState::OnScene;
        driver_to = DriverStatus::OnScene;
        break;
      case Progress::BeginTransport:
        to = RequestState::Transporting;
        driver_to = DriverStatus::Transporting;
        break;
      case Progress::Complete:
        to = RequestState::Completed;
        driver_to = DriverStatus::Available;
        break;
    }
    if (from == RequestState::Confirmed || !is_legal_request_transition(from, to)) {
      fail(ErrorCode::IllegalTransition, "request " + id + ": " + std::string(to_string(step)) + " from " +
                                             std::string(to_string(from)));
    }
    return transaction([&]() -> const Request& {
      json drivers = json::array();
      drivers.push_back(to_json(registry_->transition_driver_unlogged(
          driver_id, driver_to, driver_to == DriverStatus::Available ? std::nullopt : std::optional(id))));
      r.state = to;
      r.history.push_back({to, now});
      if (to == RequestState::Completed) r.call_open = false;
      return commit(r, to == RequestState::Completed ? "completed" : "state_changed",
                    json{{"transition", to_string(step)}, {"from", to_string(from)}, {"drivers", drivers}}, now);
    });
  }

  /// Predicted seconds until the driver reaches the scene (Confirmed, EnRoute)
  /// or the facility (Transporting), from the driver's current node.
  double eta(const std::string& id, double now) const {
    const Request& r = request(id);
    NodeId target = 0;
    if (r.state == RequestState::Confirmed || r.state == RequestState::EnRoute) {
      target = r.origin_node;
    } else if (r.state == RequestState::Transporting) {
      if (!r.facility) fail(ErrorCode::WrongState, "request " + id + " has no facility");
      target = registry_->facility(*r.facility).node;
    } else {
      fail(ErrorCode::WrongState, "no ETA for request in state " + std::string(to_string(r.state)));
    }
    const Driver& d = registry_->driver(*r.assigned_driver);
    return shortest_travel_time(*graph_, *profile_, d.node, target, d.vehicle, route_time(now)).seconds;
  }

  /// Driver position report. Snaps to the nearest node unless one is given;
  /// the event carries a fresh ETA when the driver is serving a request.
  const Driver& update_driver_location(const std::string& driver_id, const GeoPoint& location, double now,
                                       std::optional<NodeId> node = std::nullopt) {
    registry_->driver(driver_id);
    const NodeId snapped = node ? *node : graph_->nearest_node(location);
    auto saved = registry_->drivers_checkpoint();
    try {
      Driver d = registry_->move_driver_unlogged(driver_id, location, snapped);
      json payload{{"driver", to_json(d)}};
      if (d.active_request) {
        const Request& r = request(*d.active_request);
        if (r.state == RequestState::Confirmed || r.state == RequestState::EnRoute ||
            (r.state == RequestState::Transporting && r.facility)) {
          payload["eta"] = {{"request_id", r.request_id}, {"eta_s", eta(r.request_id, now)}};
        }
      }
      log().append("location_update", std::move(payload), now);
    } catch (...) {
      registry_->rollback_drivers(std::move(saved));
      throw;
    }
    return registry_->driver(driver_id);
  }

  /// Driver-initiated status change. A Proposed driver going Offline loses the
  /// proposal; the next-nearest Available driver is proposed with a fresh window.
  const Driver& set_driver_status(const std::string& driver_id, DriverStatus to, double now) {
    const Driver& d = registry_->driver(driver_id);
    if (d.status == DriverStatus::Proposed && to == DriverStatus::Offline) {
      Request& r = mutable_request(*d.active_request);
      transaction([&]() -> const Request& {
        json drivers = json::array();
        drivers.push_back(to_json(registry_->transition_driver_unlogged(driver_id, DriverStatus::Offline, std::nullopt)));
        timers_.erase({r.window_deadline.value_or(0.0), r.request_id});
        r.proposed_driver.reset();
        auto ranked = rank_available_drivers(*graph_, *profile_, registry_->state().drivers, r.origin_node, route_time(now));
        if (ranked.empty()) {
          r.state = RequestState::EscalatedToEMS;
          r.escalation_reason = "no_driver";
          r.call_open = false;
          r.window_deadline.reset();
          r.history.push_back({RequestState::EscalatedToEMS, now});
          return commit(r, "escalated",
                        json{{"reason", "no_driver"}, {"actor", "system"}, {"dropped_driver", driver_id}, {"drivers", drivers}},
                        now);
        }
        propose(r, ranked, now, drivers);
        return commit(r, "driver_proposed", json{{"dropped_driver", driver_id}, {"drivers", drivers}}, now);
      });
      return registry_->driver(driver_id);
    }
    return registry_->set_driver_status(driver_id, to, now);
  }

  // ------------------------------------------------------------ checks

  /// Cross-entity invariants; empty when the system is consistent.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> bad;
    std::map<std::string, int> holders;
    for (const auto& [id, r] : requests_) {
      if (has_assignment(r.state) != r.assigned_driver.has_value()) {
        bad.push_back(id + ": assigned_driver presence disagrees with state " + std::string(to_string(r.state)));
      }
      if (r.state >= RequestState::Confirmed && !is_terminal(r.state) && !r.facility && !r.facility_requires_dispatcher) {
        bad.push_back(id + ": no facility and no dispatcher-choice flag");
      }
      if (r.state == RequestState::DriverProposed) {
        if (!r.proposed_driver) bad.push_back(id + ": proposed without driver");
        if (!r.window_deadline || !r.proposed_at ||
            *r.window_deadline != *r.proposed_at + config_.confirmation_window_s) {
          bad.push_back(id + ": window deadline inconsistent");
        }
      }
      std::optional<std::string> holder;
      if (r.state == RequestState::DriverProposed) holder = r.proposed_driver;
      if (!is_terminal(r.state) && has_assignment(r.state)) holder = r.assigned_driver;
      if (holder) {
        ++holders[*holder];
        const auto& drv = registry_->state().drivers;
        auto it = drv.find(*holder);
        if (it == drv.end() || it->second.active_request != id) {
          bad.push_back(id + ": driver " + *holder + " does not reference the request");
        }
      }
    }
    for (const auto& [id, n] : holders) {
      if (n > 1) bad.push_back("driver " + id + " holds " + std::to_string(n) + " requests");
    }
    for (const auto& [id, d] : registry_->state().drivers) {
      if (d.status == DriverStatus::Available && !(d.screened && d.trained)) {
        bad.push_back("driver " + id + " available without screening");
      }
      if (holds_request(d.status) != d.active_request.has_value()) {
        bad.push_back("driver " + id + " active_request disagrees with status");
      }
      if (d.active_request) {
        auto it = requests_.find(*d.active_request);
        if (it == requests_.end() || is_terminal(it->second.state)) {
          bad.push_back("driver " + id + " holds a missing or finished request");
        }
      }
    }
    for (const auto& [id, d] : registry_->state().dispatchers) {
      if (d.on_duty && !d.screened) bad.push_back("dispatcher " + id + " on duty without screening");
    }
    return bad;
  }

  // ------------------------------------------------------------ persistence

  static SystemState replay(const EventLog& log) {
    SystemState s;
    for (const auto& e : log.events()) s.apply(e);
    return s;
  }

  json snapshot() const {
    json reqs = json::array();
    for (const auto& [_, r] : requests_) reqs.push_back(to_json(r));
    return json{{"last_seq", registry_->log().last_seq()},
                {"registry", to_json(registry_->state())},
                {"requests", reqs}};
  }

  /// Rebuilds registry and request state from a snapshot (may be null) and the
  /// log events after it. Pending window timers are re-armed.
  void restore(const json& snapshot, const EventLog& tail) {
    RegistryState reg;
    requests_.clear();
    if (!snapshot.is_null()) {
      reg = registry_state_from_json(snapshot.at("registry"));
      for (const auto& rj : snapshot.at("requests")) {
        auto r = request_from_json(rj);
        requests_[r.request_id] = r;
      }
    }
    SystemState s{std::move(reg), std::move(requests_)};
    for (const auto& e : tail.events()) s.apply(e);
    registry_->restore(std::move(s.registry), EventLog{});
    requests_ = std::move(s.requests);
    timers_.clear();
    for (const auto& [id, r] : requests_) {
      if (r.state == RequestState::DriverProposed && r.window_deadline) timers_.insert({*r.window_deadline, id});
    }
  }

 private:
  double route_time(double now) const { return now + config_.clock_offset_s; }

  std::string next_request_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "R%06zu", requests_.size() + 1);
    return buf;
  }

  Request& mutable_request(const std::string& id) {
    auto it = requests_.find(id);
    if (it == requests_.end()) fail(ErrorCode::NotFound, "unknown request " + id);
    return it->second;
  }

  void fire_if_due(const std::string& id, double now) {
    const Request& r = request(id);
    if (r.state == RequestState::DriverProposed && r.window_deadline && now > *r.window_deadline) {
      on_window_expire(id, *r.window_deadline);
      timers_.erase({*r.window_deadline, id});
    }
  }

  void require_open_window(const Request& r) const {
    if (r.state == RequestState::DriverProposed) return;
    if (r.auto_dispatched && !is_terminal(r.state)) {
      fail(ErrorCode::WindowExpired, "confirmation window for " + r.request_id + " expired; auto-dispatched");
    }
    fail(ErrorCode::WrongState, "request " + r.request_id + " is " + std::string(to_string(r.state)));
  }

  void assign_initial_facility(Request& r, double now) {
    r.facility = assign_facility(*graph_, *profile_, registry_->state().facilities, r.origin_node, route_time(now));
    r.facility_requires_dispatcher = !r.facility.has_value();
  }

  void propose(Request& r, const std::vector<RankedDriver>& ranked, double now, json& drivers) {
    const std::string& pick = ranked.front().driver_id;
    drivers.push_back(to_json(registry_->transition_driver_unlogged(pick, DriverStatus::Proposed, r.request_id)));
    r.proposed_driver = pick;
    r.state = RequestState::DriverProposed;
    r.proposed_at = now;
    r.window_deadline = now + config_.confirmation_window_s;
    r.history.push_back({RequestState::DriverProposed, now});
    r.candidates.clear();
    const auto k = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(config_.nearest_k_considered));
    for (std::size_t i = 0; i < k; ++i) r.candidates.push_back(ranked[i].driver_id);
    timers_.insert({*r.window_deadline, r.request_id});
  }

  // DriverProposed -> Confirmed -> EnRoute (the driver departs on assignment).
  void confirm(Request& r, const std::optional<std::string>& by, bool automatic, double now, json& drivers) {
    const std::string driver = *r.proposed_driver;
    registry_->transition_driver_unlogged(driver, DriverStatus::Assigned, r.request_id);
    drivers.push_back(to_json(registry_->transition_driver_unlogged(driver, DriverStatus::EnRoute, r.request_id)));
    timers_.erase({*r.window_deadline, r.request_id});
    r.assigned_driver = driver;
    r.confirmed_by = by;
    r.auto_dispatched = automatic;
    if (by && !r.dispatcher) r.dispatcher = by;
    r.state = RequestState::Confirmed;
    r.history.push_back({RequestState::Confirmed, now});
    r.state = RequestState::EnRoute;
    r.history.push_back({RequestState::EnRoute, now});
  }

  void release_driver(Request& r, json& drivers) {
    std::optional<std::string> held;
    if (r.state == RequestState::DriverProposed) held = r.proposed_driver;
    if (has_assignment(r.state)) held = r.assigned_driver;
    if (!held) return;
    const Driver& d = registry_->driver(*held);
    if (d.active_request == r.request_id) {
      drivers.push_back(to_json(registry_->transition_driver_unlogged(*held, DriverStatus::Available, std::nullopt)));
    }
    r.assigned_driver.reset();
  }

  const Request& commit(Request& r, const char* kind, json payload, double now) {
    payload["request"] = to_json(r);
    log().append(kind, std::move(payload), now);
    return r;
  }

  // Runs `body`; on exception restores drivers, requests, and timers.
  template <typename F>
  const Request& transaction(F&& body) {
    auto drivers = registry_->drivers_checkpoint();
    auto requests = requests_;
    auto timers = timers_;
    try {
      return body();
    } catch (...) {
      registry_->rollback_drivers(std::move(drivers));
      requests_ = std::move(requests);
      timers_ = std::move(timers);
      throw;
    }
  }

  std::shared_ptr<const RoadGraph> graph_;
  std::shared_ptr<const CongestionProfile> profile_;
  Registry* registry_;
  DispatchConfig config_;
  std::map<std::string, Request> requests_;
  std::set<std::pair<double, std::string>> timers_;
};

}  // namespace motorlance

#endif
