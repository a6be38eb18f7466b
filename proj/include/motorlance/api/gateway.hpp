#ifndef MOTORLANCE_API_GATEWAY_HPP
#define MOTORLANCE_API_GATEWAY_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "motorlance/api/config.hpp"
#include "motorlance/api/messages.hpp"
#include "motorlance/dispatch.hpp"
#include "motorlance/error.hpp"
#include "motorlance/event_log.hpp"
#include "motorlance/registry.hpp"
#include "motorlance/sim.hpp"
#include "motorlance/time_format.hpp"

namespace motorlance::api {

inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::Validation:
    case ErrorCode::Parse:
    case ErrorCode::Domain: return 400;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::Forbidden: return 403;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownFacility: return 404;
    case ErrorCode::Conflict:
    case ErrorCode::Unreachable:
    case ErrorCode::IllegalTransition:
    case ErrorCode::ScreeningIncomplete:
    case ErrorCode::NoAvailableDriver:
    case ErrorCode::WindowExpired:
    case ErrorCode::WrongState:
    case ErrorCode::DriverUnavailable:
    case ErrorCode::WrongDriver: return 409;
    case ErrorCode::Config:
    case ErrorCode::CorruptLog:
    case ErrorCode::Persistence: return 500;
  }
  return 500;
}

inline json error_body(std::string_view code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

/// HTTP + server-sent-events front end. Every command and timer expiry runs
/// under one mutex, so the event log order is the order clients observe.
class Gateway {
 public:
  using Clock = std::function<double()>;

  struct Options {
    Clock clock = system_now;
    /// Fire window expiries from a background thread. Tests turn this off
    /// and call tick() with a manual clock.
    bool timer_thread = true;
    double keepalive_s = 1.0;
  };

  explicit Gateway(ServerConfig config) : Gateway(std::move(config), Options{}) {}

  Gateway(ServerConfig config, Options options) : config_(std::move(config)), opts_(std::move(options)) {
    config_.validate();
    scenario_ = sim::load_scenario(config_.scenario);
    open_world();
    log_->on_append([this](const Event&) { stream_cv_.notify_all(); });
    install_routes();
    if (opts_.timer_thread) timer_ = std::thread([this] { timer_loop(); });
  }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  ~Gateway() { stop(); }

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  int bind() {
    if (config_.port == 0) {
      port_ = server_.bind_to_any_port(config_.host);
    } else {
      port_ = server_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (port_ < 0) fail(ErrorCode::Config, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    return port_;
  }

  /// Serves on the calling thread until stop().
  void serve() { server_.listen_after_bind(); }

  /// bind() and serve on a background thread.
  int start() {
    const int p = bind();
    listener_ = std::thread([this] { serve(); });
    server_.wait_until_ready();
    return p;
  }

  void stop() {
    {
      std::lock_guard lk(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    stream_cv_.notify_all();
    timer_cv_.notify_all();
    server_.stop();
    if (listener_.joinable()) listener_.join();
    if (timer_.joinable()) timer_.join();
  }

  int port() const noexcept { return port_; }

  /// Fires window expiries due at the current clock. Returns fired request ids.
  std::vector<std::string> tick() {
    std::lock_guard lk(mu_);
    auto fired = core_->advance_timers(opts_.clock());
    maybe_snapshot();
    return fired;
  }

  json state() const {
    std::lock_guard lk(mu_);
    return state_unlocked();
  }

  std::vector<Event> events() const {
    std::lock_guard lk(mu_);
    return log_->events();
  }

  /// Runs `f` with the core under the command lock (tests and tooling).
  template <typename F>
  auto with_core(F&& f) {
    std::lock_guard lk(mu_);
    return f(*core_);
  }

 private:
  struct Caller {
    Role role = Role::Rider;
    std::optional<std::string> subject;
    bool anonymous = false;
  };

  struct Reply {
    int status = 200;
    json body;
  };

  using Handler = std::function<Reply(const httplib::Request&, const Caller&, const json& body)>;

  // ------------------------------------------------------------ world

  std::filesystem::path log_path() const { return std::filesystem::path(config_.data_dir) / "events.ndjson"; }
  std::filesystem::path snapshot_path() const { return std::filesystem::path(config_.data_dir) / "snapshot.json"; }

  void open_world() {
    json snap;
    if (!config_.data_dir.empty()) {
      std::filesystem::create_directories(config_.data_dir);
      log_ = std::filesystem::exists(log_path()) ? EventLog::load(log_path().string()) : std::make_unique<EventLog>();
      if (std::filesystem::exists(snapshot_path())) snap = read_json_file(snapshot_path().string());
    } else {
      log_ = std::make_unique<EventLog>();
    }
    registry_ = std::make_unique<Registry>(*log_, scenario_.graph.get());
    core_ = std::make_unique<DispatchCore>(scenario_.graph, scenario_.profile, *registry_, config_.dispatch);

    if (log_->size() > 0) {
      Seq from = 0;
      if (!snap.is_null()) {
        from = snap.at("last_seq").get<Seq>();
        if (from > log_->last_seq()) fail(ErrorCode::CorruptLog, "snapshot is ahead of the event log");
      }
      auto tail = EventLog::from_events(log_->events_after(from), from);
      core_->restore(snap, *tail);
      snapshot_seq_ = from;
    }
    if (!config_.data_dir.empty()) log_->attach_file(log_path().string());
    if (log_->size() == 0) seed_world();
  }

  // Facilities and fleet from the scenario, dispatchers and riders from config.
  void seed_world() {
    const double now = opts_.clock();
    const RoadGraph& g = *scenario_.graph;
    for (const auto& f : scenario_.facilities) registry_->add_facility({f.id, g.node(f.node).location, f.node, f.name}, now);
    int serial = 0;
    for (const auto& entry : scenario_.fleet) {
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
        registry_->add_driver(d, now);
      }
    }
    for (const auto& d : config_.dispatchers) registry_->add_dispatcher(d, now);
    for (const auto& r : config_.riders) registry_->register_rider(r, now);
  }

  void maybe_snapshot() {
    if (config_.data_dir.empty() || log_->last_seq() - snapshot_seq_ < config_.snapshot_every) return;
    const auto tmp = snapshot_path().string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << core_->snapshot().dump() << '\n';
      if (!out) fail(ErrorCode::Persistence, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, snapshot_path());
    snapshot_seq_ = log_->last_seq();
  }

  json state_unlocked() const {
    json s = core_->snapshot();
    s["server_time"] = format_iso8601(opts_.clock());
    s["confirmation_window_s"] = config_.dispatch.confirmation_window_s;
    return s;
  }

  void timer_loop() {
    std::unique_lock lk(mu_);
    while (!stopping_) {
      const auto next = core_->next_deadline();
      double wait = 1.0;
      if (next) wait = std::min(wait, std::max(0.0, *next - opts_.clock()));
      if (wait > 0.0) timer_cv_.wait_for(lk, std::chrono::duration<double>(wait));
      if (stopping_) break;
      try {
        core_->advance_timers(opts_.clock());
        maybe_snapshot();
      } catch (const std::exception&) {
        // leave the deadline armed; the next pass retries
      }
    }
  }

  // ------------------------------------------------------------ auth

  Caller authenticate(const httplib::Request& req, const std::vector<Role>& roles, bool anonymous_ok) const {
    const auto header = req.get_header_value("Authorization");
    if (header.empty()) {
      if (anonymous_ok) return Caller{Role::Rider, std::nullopt, true};
      fail(ErrorCode::Unauthorized, "missing bearer token");
    }
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0) fail(ErrorCode::Unauthorized, "expected a bearer token");
    const std::string token = header.substr(prefix.size());
    for (const auto& t : config_.tokens) {
      if (t.token != token) continue;
      for (auto r : roles) {
        if (r == t.role) return Caller{t.role, t.subject, false};
      }
      fail(ErrorCode::Forbidden, "role " + std::string(to_string(t.role)) + " may not call " + req.path);
    }
    fail(ErrorCode::Unauthorized, "unknown token");
  }

  // The acting id: pinned by the token or named in the body.
  static std::string actor_id(const Caller& c, const json& body, const char* key) {
    auto named = opt_string(body, key);
    if (c.subject) {
      if (named && *named != *c.subject) fail(ErrorCode::Forbidden, std::string(key) + " does not match the token");
      return *c.subject;
    }
    if (!named) fail(ErrorCode::Validation, std::string(key) + " is required");
    return *named;
  }

  void require_driver_subject(const Caller& c, const std::string& driver_id) const {
    if (c.subject && *c.subject != driver_id) fail(ErrorCode::Forbidden, "token is not bound to driver " + driver_id);
  }

  void require_rider_access(const Caller& c, const Request& r) const {
    if (c.role == Role::Rider && c.subject && r.rider != c.subject) {
      fail(ErrorCode::Forbidden, "request " + r.request_id + " belongs to another rider");
    }
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json b;
    try {
      b = json::parse(req.body);
    } catch (const json::exception&) {
      fail(ErrorCode::Validation, "request body is not valid JSON");
    }
    if (!b.is_object()) fail(ErrorCode::Validation, "request body must be a JSON object");
    return b;
  }

  template <typename T>
  static T body_field(const json& b, const char* key) {
    if (!b.contains(key)) fail(ErrorCode::Validation, std::string(key) + " is required");
    try {
      return b.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::Validation, std::string(key) + " has the wrong type");
    }
  }

  static GeoPoint body_point(const json& b) {
    return GeoPoint(body_field<double>(b, "lat"), body_field<double>(b, "lon"));
  }

  // ------------------------------------------------------------ routing

  void route(const char* method, const std::string& pattern, std::initializer_list<Role> roles, bool anonymous_ok,
             Handler h) {
    std::vector<Role> allowed(roles);
    auto wrapped = [this, allowed, anonymous_ok, h = std::move(h)](const httplib::Request& req,
                                                                    httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      try {
        std::lock_guard lk(mu_);
        const Caller caller = authenticate(req, allowed, anonymous_ok);
        const json body = parse_body(req);
        const Seq before = log_->last_seq();
        Reply reply = h(req, caller, body);
        if (log_->last_seq() != before) {
          res.set_header("X-Event-Seq", std::to_string(log_->last_seq()));
          maybe_snapshot();
          timer_cv_.notify_all();
        }
        res.set_header("X-Server-Time", format_iso8601(opts_.clock()));
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(error_body(to_string(e.code()), e.what()).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_body("internal", e.what()).dump(), "application/json");
      }
    };
    const std::string m(method);
    if (m == "GET") {
      server_.Get(pattern, wrapped);
    } else {
      server_.Post(pattern, wrapped);
    }
  }

  void install_routes() {
    using R = Role;
    const auto any = {R::Rider, R::Driver, R::Dispatcher};
    server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type, Last-Event-ID");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.status = 204;
    });

    route("POST", "/v1/app-open", {R::Rider}, true, [this](const auto&, const Caller& c, const json& b) {
      std::optional<std::string> rider = opt_string(b, "rider_id");
      if (c.subject) rider = actor_id(c, b, "rider_id");
      const Seq seq = core_->on_app_open(rider, opts_.clock());
      return Reply{200, json{{"seq", seq}, {"delivered_to", log_->events().back().payload.at("delivered_to")}}};
    });

    route("POST", "/v1/requests", {R::Rider}, true, [this](const auto&, const Caller& c, const json& b) {
      std::optional<std::string> rider = opt_string(b, "rider_id");
      if (c.subject) rider = actor_id(c, b, "rider_id");
      if (!b.contains("origin")) fail(ErrorCode::Validation, "origin is required");
      const GeoPoint origin = body_point(b.at("origin"));
      const std::string details = b.contains("details") ? body_field<std::string>(b, "details") : std::string{};
      return Reply{201, to_json(core_->create_request(rider, origin, details, opts_.clock()))};
    });

    route("GET", "/v1/requests/:id", any, true, [this](const httplib::Request& req, const Caller& c, const json&) {
      const Request& r = core_->request(req.path_params.at("id"));
      require_rider_access(c, r);
      return Reply{200, to_json(r)};
    });

    route("GET", "/v1/requests/:id/eta", any, true, [this](const httplib::Request& req, const Caller& c, const json&) {
      const Request& r = core_->request(req.path_params.at("id"));
      require_rider_access(c, r);
      const double now = opts_.clock();
      const double eta = core_->eta(r.request_id, now);
      return Reply{200, json{{"request_id", r.request_id},
                             {"state", to_string(r.state)},
                             {"driver_id", opt_json(r.assigned_driver)},
                             {"target", r.state == RequestState::Transporting ? "facility" : "scene"},
                             {"eta_s", eta},
                             {"eta", format_iso8601(now + eta)}}};
    });

    route("POST", "/v1/requests/:id/confirm", {R::Dispatcher}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            return Reply{200, to_json(core_->dispatcher_confirm(req.path_params.at("id"), actor_id(c, b, "dispatcher_id"),
                                                                opts_.clock()))};
          });

    route("POST", "/v1/requests/:id/reassign", {R::Dispatcher}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            return Reply{200, to_json(core_->dispatcher_reassign(req.path_params.at("id"),
                                                                 body_field<std::string>(b, "driver_id"),
                                                                 actor_id(c, b, "dispatcher_id"), opts_.clock()))};
          });

    route("POST", "/v1/requests/:id/facility", {R::Dispatcher}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            return Reply{200, to_json(core_->dispatcher_change_facility(req.path_params.at("id"),
                                                                        body_field<std::string>(b, "facility_id"),
                                                                        actor_id(c, b, "dispatcher_id"), opts_.clock()))};
          });

    route("POST", "/v1/requests/:id/escalate", {R::Dispatcher, R::Driver}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            const std::string id = req.path_params.at("id");
            std::string actor;
            if (c.role == Role::Dispatcher) {
              actor = "dispatcher:" + actor_id(c, b, "dispatcher_id");
            } else {
              const std::string driver = actor_id(c, b, "driver_id");
              const Request& r = core_->request(id);
              if (r.assigned_driver != driver && r.proposed_driver != driver) {
                fail(ErrorCode::Forbidden, "driver " + driver + " is not serving " + id);
              }
              actor = "driver:" + driver;
            }
            const std::string reason = b.contains("reason") ? body_field<std::string>(b, "reason") : "manual";
            return Reply{200, to_json(core_->escalate_to_ems(id, reason, actor, opts_.clock()))};
          });

    route("POST", "/v1/requests/:id/progress", {R::Driver}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            auto step = parse_progress(body_field<std::string>(b, "transition"));
            if (!step) fail(ErrorCode::Validation, "transition must be arrive_scene, begin_transport or complete");
            return Reply{200, to_json(core_->progress(req.path_params.at("id"), *step, actor_id(c, b, "driver_id"),
                                                      opts_.clock()))};
          });

    route("POST", "/v1/requests/:id/cancel", {R::Rider, R::Dispatcher}, true,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            const Request& r = core_->request(req.path_params.at("id"));
            require_rider_access(c, r);
            std::string actor = "rider";
            if (c.role == Role::Dispatcher) actor = "dispatcher:" + actor_id(c, b, "dispatcher_id");
            return Reply{200, to_json(core_->cancel(r.request_id, actor, opts_.clock()))};
          });

    route("POST", "/v1/drivers/:id/location", {R::Driver}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            const std::string id = req.path_params.at("id");
            require_driver_subject(c, id);
            std::optional<NodeId> node;
            if (b.contains("node")) node = body_field<NodeId>(b, "node");
            return Reply{200, to_json(core_->update_driver_location(id, body_point(b), opts_.clock(), node))};
          });

    route("POST", "/v1/drivers/:id/status", {R::Driver}, false,
          [this](const httplib::Request& req, const Caller& c, const json& b) {
            const std::string id = req.path_params.at("id");
            require_driver_subject(c, id);
            auto to = parse_driver_status(body_field<std::string>(b, "status"));
            if (!to) fail(ErrorCode::Validation, "unknown driver status");
            return Reply{200, to_json(core_->set_driver_status(id, *to, opts_.clock()))};
          });

    route("GET", "/v1/state", {R::Dispatcher}, false,
          [this](const auto&, const Caller&, const json&) { return Reply{200, state_unlocked()}; });

    server_.Get("/v1/stream", [this](const httplib::Request& req, httplib::Response& res) { stream(req, res); });
  }

  // ------------------------------------------------------------ stream

  void stream(const httplib::Request& req, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    StreamFilter filter;
    Cursor cursor;
    try {
      std::lock_guard lk(mu_);
      const Caller c = authenticate(req, {Role::Rider, Role::Driver, Role::Dispatcher}, true);
      if (req.has_param("request_id")) {
        filter = {StreamFilter::Scope::Request, req.get_param_value("request_id")};
        require_rider_access(c, core_->request(filter.id));
      } else if (c.role == Role::Rider) {
        fail(ErrorCode::Validation, "rider streams need a request_id");
      }
      if (c.role == Role::Driver) {
        std::optional<std::string> d = c.subject;
        if (req.has_param("driver_id")) {
          d = req.get_param_value("driver_id");
          require_driver_subject(c, *d);
        }
        if (d && filter.scope == StreamFilter::Scope::All) filter = {StreamFilter::Scope::Driver, *d};
      }
      std::string from = req.get_header_value("Last-Event-ID");
      if (req.has_param("after")) from = req.get_param_value("after");
      if (!from.empty()) {
        auto parsed = parse_cursor(from);
        if (!parsed) fail(ErrorCode::Validation, "after must be a sequence number or seq:part");
        cursor = *parsed;
      } else {
        cursor = Cursor{log_->last_seq(), 1 << 30};
      }
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(to_string(e.code()), e.what()).dump(), "application/json");
      return;
    }

    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, filter, cursor](std::size_t, httplib::DataSink& sink) mutable {
          std::vector<ApiMessage> batch;
          double now = 0.0;
          {
            std::unique_lock lk(mu_);
            const Seq seen = cursor.part >= (1 << 30) ? cursor.seq : (cursor.seq == 0 ? 0 : cursor.seq - 1);
            stream_cv_.wait_for(lk, std::chrono::duration<double>(opts_.keepalive_s),
                                [&] { return stopping_ || log_->last_seq() > seen; });
            if (stopping_) {
              sink.done();
              return false;
            }
            for (const auto& e : log_->events_after(seen)) {
              for (auto& m : messages_for(e)) {
                if (!cursor.covers(m) && filter.accepts(m)) batch.push_back(std::move(m));
              }
              cursor = Cursor{e.seq, 1 << 30};
            }
            now = opts_.clock();
          }
          if (batch.empty()) {
            static const std::string keepalive = ": keepalive\n\n";
            return sink.write(keepalive.data(), keepalive.size());
          }
          std::string out;
          for (const auto& m : batch) {
            out += "id: " + stream_id(m) + "\nevent: " + m.kind + "\ndata: " + to_json(m, now).dump() + "\n\n";
          }
          return sink.write(out.data(), out.size());
        });
  }

  ServerConfig config_;
  Options opts_;
  sim::Scenario scenario_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<Registry> registry_;
  std::unique_ptr<DispatchCore> core_;
  Seq snapshot_seq_ = 0;

  mutable std::mutex mu_;
  std::condition_variable stream_cv_;
  std::condition_variable timer_cv_;
  bool stopping_ = false;

  httplib::Server server_;
  int port_ = -1;
  std::thread listener_;
  std::thread timer_;
};

}  // namespace motorlance::api

#endif
