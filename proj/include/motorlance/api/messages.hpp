#ifndef MOTORLANCE_API_MESSAGES_HPP
#define MOTORLANCE_API_MESSAGES_HPP

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "motorlance/event_log.hpp"
#include "motorlance/time_format.hpp"

namespace motorlance::api {

using json = nlohmann::json;

inline constexpr const char* kEscalationAdvice =
    "A motorlance is not available for this request. Please call your local emergency services.";

/// One push message. A log event expands to one or more messages that share
/// its seq and are numbered by `part`.
struct ApiMessage {
  Seq seq = 0;
  int part = 0;
  std::string kind;
  std::optional<std::string> request_id;
  std::optional<std::string> rider_id;
  std::vector<std::string> driver_ids;
  double at = 0.0;  // event time
  json payload = json::object();
};

inline json to_json(const ApiMessage& m, double server_time) {
  return json{{"seq", m.seq},
              {"part", m.part},
              {"kind", m.kind},
              {"request_id", m.request_id ? json(*m.request_id) : json(nullptr)},
              {"driver_id", m.driver_ids.empty() ? json(nullptr) : json(m.driver_ids.front())},
              {"at", format_iso8601(m.at)},
              {"server_time", format_iso8601(server_time)},
              {"payload", m.payload}};
}

/// SSE event id; "seq:part" lets a client resume in the middle of an event.
inline std::string stream_id(const ApiMessage& m) { return std::to_string(m.seq) + ":" + std::to_string(m.part); }

/// Resume cursor: everything after (seq, part). A bare "seq" means the whole
/// event was seen.
struct Cursor {
  Seq seq = 0;
  int part = -1;  // last part of `seq` already seen

  bool covers(const ApiMessage& m) const { return m.seq < seq || (m.seq == seq && m.part <= part); }
};

inline std::optional<Cursor> parse_cursor(const std::string& s) {
  try {
    auto colon = s.find(':');
    std::size_t used = 0;
    if (colon == std::string::npos) {
      Seq seq = std::stoull(s, &used);
      if (used != s.size()) return std::nullopt;
      return Cursor{seq, 1 << 30};
    }
    Seq seq = std::stoull(s.substr(0, colon), &used);
    if (used != colon) return std::nullopt;
    const std::string p = s.substr(colon + 1);
    int part = std::stoi(p, &used);
    if (used != p.size() || part < 0) return std::nullopt;
    return Cursor{seq, part};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

namespace detail {

inline std::vector<std::string> drivers_in(const json& p) {
  std::set<std::string> ids;
  if (p.contains("driver")) ids.insert(p.at("driver").at("driver_id").get<std::string>());
  if (p.contains("drivers")) {
    for (const auto& d : p.at("drivers")) ids.insert(d.at("driver_id").get<std::string>());
  }
  return {ids.begin(), ids.end()};
}

}  // namespace detail

/// Expands one log event into the messages pushed to stream subscribers.
inline std::vector<ApiMessage> messages_for(const Event& e) {
  const json& p = e.payload;
  std::vector<ApiMessage> out;
  ApiMessage base;
  base.seq = e.seq;
  base.at = e.ts;
  base.driver_ids = detail::drivers_in(p);
  if (p.contains("request")) {
    base.request_id = p.at("request").at("request_id").get<std::string>();
    if (!p.at("request").at("anonymous").get<bool>()) base.rider_id = p.at("request").at("rider_id").get<std::string>();
  }
  auto add = [&](std::string kind, json payload) {
    ApiMessage m = base;
    m.part = static_cast<int>(out.size());
    m.kind = std::move(kind);
    m.payload = std::move(payload);
    out.push_back(std::move(m));
  };
  auto with_request = [&](json j) {
    j["request"] = p.at("request");
    return j;
  };
  auto escalation = [&](const json& esc) {
    return with_request(json{{"reason", esc.at("reason")}, {"actor", esc.at("actor")}, {"advice", kEscalationAdvice}});
  };
  auto proposal = [&](json j) {
    const json& r = p.at("request");
    j["driver_id"] = r.at("proposed_driver");
    j["window_deadline"] = r.at("window_deadline");
    j["candidates"] = r.at("candidates");
    return with_request(std::move(j));
  };

  const std::string& k = e.kind;
  if (k == "app_open_alert") {
    if (!p.at("anonymous").get<bool>()) base.rider_id = p.at("rider_id").get<std::string>();
    add("app_open_alert", p);
  } else if (k == "request_created") {
    const json& r = p.at("request");
    add("request_created", with_request(json::object()));
    add("call_opened", json{{"dispatcher", p.at("call").at("dispatcher")}});
    for (const auto& c : p.at("contacts_notified")) add("contact_notified", c);
    if (r.at("state") == "driver_proposed") add("driver_proposed", proposal(json::object()));
    if (p.contains("escalated")) add("escalated", escalation(p.at("escalated")));
  } else if (k == "driver_proposed") {
    add("driver_proposed", proposal(json{{"dropped_driver", p.at("dropped_driver")}}));
  } else if (k == "confirmed") {
    add("confirmed", with_request(json{{"by", p.at("by")}, {"auto", p.at("auto")}}));
  } else if (k == "reassigned") {
    add("reassigned", with_request(json{{"from", p.at("from")}, {"to", p.at("to")}, {"by", p.at("by")}}));
  } else if (k == "facility_changed") {
    add("facility_changed", with_request(json{{"from", p.at("from")},
                                              {"to", p.at("to")},
                                              {"by", p.at("by")},
                                              {"driver_notified", p.at("driver_notified")}}));
  } else if (k == "escalated") {
    add("escalated", escalation(p));
  } else if (k == "cancelled") {
    add("cancelled", with_request(json{{"actor", p.at("actor")}}));
  } else if (k == "state_changed") {
    add("state_changed", with_request(json{{"transition", p.at("transition")},
                                           {"from", p.at("from")},
                                           {"to", p.at("request").at("state")}}));
  } else if (k == "completed") {
    add("completed", with_request(json{{"transition", p.at("transition")}, {"from", p.at("from")}}));
  } else if (k == "location_update") {
    const json& d = p.at("driver");
    if (p.contains("eta")) {
      base.request_id = p.at("eta").at("request_id").get<std::string>();
    } else if (!d.at("active_request").is_null()) {
      base.request_id = d.at("active_request").get<std::string>();
    }
    add("location_update", json{{"driver_id", d.at("driver_id")}, {"location", d.at("location")}, {"node", d.at("node")},
                                {"status", d.at("status")}});
    if (p.contains("eta")) {
      const double eta_s = p.at("eta").at("eta_s").get<double>();
      add("eta_update", json{{"request_id", p.at("eta").at("request_id")},
                             {"driver_id", d.at("driver_id")},
                             {"eta_s", eta_s},
                             {"eta", format_iso8601(e.ts + eta_s)}});
    }
  } else if (k == "driver_added" || k == "driver_status" || k == "driver_screening") {
    add("driver_status", json{{"driver", p.at("driver")}});
  } else if (k.rfind("dispatcher_", 0) == 0) {
    add("dispatcher_status", json{{"dispatcher", p.at("dispatcher")}});
  } else if (k == "facility_added") {
    add("facility_added", json{{"facility", p.at("facility_record")}});
  } else if (k == "rider_registered") {
    base.rider_id = p.at("rider").at("rider_id").get<std::string>();
    add("rider_registered", json{{"rider_id", p.at("rider").at("rider_id")}});
  } else {
    add(k, p);
  }
  return out;
}

/// Which messages a subscriber sees.
struct StreamFilter {
  enum class Scope { All, Request, Driver } scope = Scope::All;
  std::string id;

  bool accepts(const ApiMessage& m) const {
    switch (scope) {
      case Scope::All: return true;
      case Scope::Request: return m.request_id == id;
      case Scope::Driver:
        return std::find(m.driver_ids.begin(), m.driver_ids.end(), id) != m.driver_ids.end();
    }
    return false;
  }
};

}  // namespace motorlance::api

#endif
