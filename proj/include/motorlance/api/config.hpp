#ifndef MOTORLANCE_API_CONFIG_HPP
#define MOTORLANCE_API_CONFIG_HPP

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "motorlance/dispatch.hpp"
#include "motorlance/error.hpp"
#include "motorlance/graph_io.hpp"
#include "motorlance/registry.hpp"

namespace motorlance::api {

using json = nlohmann::json;

enum class Role { Rider, Driver, Dispatcher };

inline constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::Rider: return "rider";
    case Role::Driver: return "driver";
    case Role::Dispatcher: return "dispatcher";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view s) {
  for (auto r : {Role::Rider, Role::Driver, Role::Dispatcher}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

/// A static bearer token. `subject` pins the token to one rider, driver, or
/// dispatcher id; without it the token may act for any id of its role.
struct Token {
  std::string token;
  Role role = Role::Rider;
  std::optional<std::string> subject;
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<Token> tokens;
  /// Scenario file supplying graph, profile, fleet, and facilities.
  std::string scenario;
  DispatchConfig dispatch{15.0, true, 3, 8 * 3600.0};
  std::vector<Dispatcher> dispatchers;
  std::vector<RiderRegistration> riders;
  /// Directory for events.ndjson and snapshot.json; empty keeps state in memory.
  std::string data_dir;
  std::size_t snapshot_every = 1000;

  void validate() const {
    if (port < 0 || port > 65535) fail(ErrorCode::Config, "listen.port: out of range");
    if (scenario.empty()) fail(ErrorCode::Config, "scenario: missing");
    if (snapshot_every == 0) fail(ErrorCode::Config, "snapshot_every: must be > 0");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].token.empty()) fail(ErrorCode::Config, "tokens[" + std::to_string(i) + "].token: empty");
    }
    // Checked here so a bad rider fails before the world is seeded.
    for (std::size_t i = 0; i < riders.size(); ++i) {
      const std::string path = "riders[" + std::to_string(i) + "]";
      if (riders[i].rider_id.empty()) fail(ErrorCode::Config, path + ".rider_id: empty");
      for (std::size_t k = 0; k < riders[i].emergency_contacts.size(); ++k) {
        if (!valid_phone(riders[i].emergency_contacts[k].phone)) {
          fail(ErrorCode::Config, path + ".emergency_contacts[" + std::to_string(k) + "].phone: digits and + only");
        }
      }
    }
    dispatch.validate();
  }
};

namespace detail {

inline ServerConfig parse_server_config(const json& j, const std::filesystem::path& base_dir) {
  using motorlance::detail::field;
  ServerConfig c;
  if (!j.is_object()) fail(ErrorCode::Config, "config: expected an object");
  if (j.contains("listen")) {
    c.host = j.at("listen").value("host", c.host);
    c.port = j.at("listen").value("port", c.port);
  }
  if (j.contains("tokens")) {
    for (std::size_t i = 0; i < j.at("tokens").size(); ++i) {
      const auto& t = j.at("tokens")[i];
      const std::string path = "tokens[" + std::to_string(i) + "]";
      auto role = parse_role(field<std::string>(t, "role", path));
      if (!role) fail(ErrorCode::Config, path + ".role: expected rider, driver or dispatcher");
      c.tokens.push_back({field<std::string>(t, "token", path), *role, opt_string(t, "subject")});
    }
  }
  c.scenario = j.value("scenario", std::string{});
  if (!c.scenario.empty() && std::filesystem::path(c.scenario).is_relative() && !base_dir.empty()) {
    c.scenario = (base_dir / c.scenario).string();
  }
  if (j.contains("dispatch")) {
    const auto& d = j.at("dispatch");
    c.dispatch.confirmation_window_s = d.value("confirmation_window_s", c.dispatch.confirmation_window_s);
    c.dispatch.notify_contacts = d.value("notify_contacts", c.dispatch.notify_contacts);
    c.dispatch.nearest_k_considered = d.value("nearest_k_considered", c.dispatch.nearest_k_considered);
    c.dispatch.clock_offset_s = d.value("clock_offset_s", c.dispatch.clock_offset_s);
  }
  if (j.contains("dispatchers")) {
    for (std::size_t i = 0; i < j.at("dispatchers").size(); ++i) {
      const auto& d = j.at("dispatchers")[i];
      c.dispatchers.push_back({field<std::string>(d, "dispatcher_id", "dispatchers[" + std::to_string(i) + "]"),
                               d.value("on_duty", true), d.value("screened", true)});
    }
  }
  if (j.contains("riders")) {
    for (std::size_t i = 0; i < j.at("riders").size(); ++i) {
      const auto& r = j.at("riders")[i];
      RiderRegistration reg;
      reg.rider_id = field<std::string>(r, "rider_id", "riders[" + std::to_string(i) + "]");
      reg.name = opt_string(r, "name");
      reg.home_region = opt_string(r, "home_region");
      reg.medical_history = r.value("medical_history", std::vector<std::string>{});
      for (const auto& ec : r.value("emergency_contacts", json::array())) {
        reg.emergency_contacts.push_back({ec.value("name", ""), ec.value("phone", "")});
      }
      c.riders.push_back(std::move(reg));
    }
  }
  c.data_dir = j.value("data_dir", std::string{});
  if (!c.data_dir.empty() && std::filesystem::path(c.data_dir).is_relative() && !base_dir.empty()) {
    c.data_dir = (base_dir / c.data_dir).string();
  }
  c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
  return c;
}

}  // namespace detail

/// Parses a server config document. Relative paths resolve against `base_dir`.
inline ServerConfig server_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  try {
    return detail::parse_server_config(j, base_dir);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config: ") + e.what());
  }
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::string(v);
}

namespace detail {

inline double env_number(const std::string& name, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(ErrorCode::Config, name + ": expected a number, got '" + v + "'");
  }
}

}  // namespace detail

/// Applies MOTORLANCE_* overrides. Token variables add an unpinned token for
/// their role.
inline void apply_env(ServerConfig& c, const EnvLookup& env = process_env) {
  auto get = [&](const char* name) { return env(name); };
  if (auto v = get("MOTORLANCE_HOST")) c.host = *v;
  if (auto v = get("MOTORLANCE_PORT")) c.port = static_cast<int>(detail::env_number("MOTORLANCE_PORT", *v));
  if (auto v = get("MOTORLANCE_SCENARIO")) c.scenario = *v;
  if (auto v = get("MOTORLANCE_DATA_DIR")) c.data_dir = *v;
  if (auto v = get("MOTORLANCE_CONFIRMATION_WINDOW_S")) {
    c.dispatch.confirmation_window_s = detail::env_number("MOTORLANCE_CONFIRMATION_WINDOW_S", *v);
  }
  if (auto v = get("MOTORLANCE_CLOCK_OFFSET_S")) {
    c.dispatch.clock_offset_s = detail::env_number("MOTORLANCE_CLOCK_OFFSET_S", *v);
  }
  if (auto v = get("MOTORLANCE_SNAPSHOT_EVERY")) {
    c.snapshot_every = static_cast<std::size_t>(detail::env_number("MOTORLANCE_SNAPSHOT_EVERY", *v));
  }
  if (auto v = get("MOTORLANCE_TOKEN_RIDER")) c.tokens.push_back({*v, Role::Rider, std::nullopt});
  if (auto v = get("MOTORLANCE_TOKEN_DRIVER")) c.tokens.push_back({*v, Role::Driver, std::nullopt});
  if (auto v = get("MOTORLANCE_TOKEN_DISPATCHER")) c.tokens.push_back({*v, Role::Dispatcher, std::nullopt});
}

inline ServerConfig load_server_config(const std::string& path, const EnvLookup& env = process_env) {
  ServerConfig c = server_config_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
  apply_env(c, env);
  c.validate();
  return c;
}

}  // namespace motorlance::api

#endif
