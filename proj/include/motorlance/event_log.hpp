#ifndef MOTORLANCE_EVENT_LOG_HPP
#define MOTORLANCE_EVENT_LOG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "motorlance/error.hpp"
#include "motorlance/time_format.hpp"

namespace motorlance {

using json = nlohmann::json;
using Seq = std::uint64_t;

struct Event {
  Seq seq = 0;
  double ts = 0.0;  // epoch seconds
  std::string kind;
  json payload;
};

inline json to_json(const Event& e) {
  return json{{"seq", e.seq}, {"ts", format_iso8601(e.ts)}, {"kind", e.kind}, {"payload", e.payload}};
}

inline Event event_from_json(const json& j) {
  try {
    return Event{j.at("seq").get<Seq>(), parse_iso8601(j.at("ts").get<std::string>()),
                 j.at("kind").get<std::string>(), j.at("payload")};
  } catch (const json::exception& ex) {
    fail(ErrorCode::CorruptLog, std::string("malformed event record: ") + ex.what());
  }
}

/// Append-only, gap-free event log. Sequence numbers start at 1.
/// Optionally mirrors every append to a newline-delimited JSON file.
class EventLog {
 public:
  using Listener = std::function<void(const Event&)>;

  EventLog() = default;
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Mirror subsequent appends to `path` (opened for append).
  void attach_file(const std::string& path) {
    sink_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*sink_) fail(ErrorCode::Persistence, "cannot open event log file " + path);
  }

  Seq append(std::string kind, json payload, double ts) {
    Event e{last_seq() + 1, ts, std::move(kind), std::move(payload)};
    if (sink_) {
      *sink_ << to_json(e).dump() << '\n';
      sink_->flush();
      if (!*sink_) fail(ErrorCode::Persistence, "event log write failed at seq " + std::to_string(e.seq));
    }
    events_.push_back(std::move(e));
    for (auto& l : listeners_) l(events_.back());
    return events_.back().seq;
  }

  void on_append(Listener l) { listeners_.push_back(std::move(l)); }

  const std::vector<Event>& events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  Seq first_seq() const noexcept { return events_.empty() ? base_ + 1 : events_.front().seq; }
  Seq last_seq() const noexcept { return events_.empty() ? base_ : events_.back().seq; }

  /// Events with seq > after, in order.
  std::vector<Event> events_after(Seq after) const {
    std::vector<Event> out;
    if (after < first_seq() - 1) after = first_seq() - 1;
    for (std::size_t i = static_cast<std::size_t>(after - (first_seq() - 1)); i < events_.size(); ++i) {
      out.push_back(events_[i]);
    }
    return out;
  }

  /// Loads an NDJSON log. When `after_seq` is nonzero the file is expected to
  /// continue from a snapshot taken at that sequence number.
  static std::unique_ptr<EventLog> load(const std::string& path, Seq after_seq = 0) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Persistence, "cannot open event log file " + path);
    auto log = std::make_unique<EventLog>();
    log->base_ = after_seq;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        fail(ErrorCode::CorruptLog, "unparseable event at line " + std::to_string(line_no));
      }
      Event e = event_from_json(j);
      if (e.seq <= after_seq) continue;
      log->push_loaded(std::move(e));
    }
    return log;
  }

  /// Builds a log from already-decoded events, enforcing the gap-free invariant.
  static std::unique_ptr<EventLog> from_events(std::vector<Event> events, Seq after_seq = 0) {
    auto log = std::make_unique<EventLog>();
    log->base_ = after_seq;
    for (auto& e : events) log->push_loaded(std::move(e));
    return log;
  }

 private:
  void push_loaded(Event e) {
    const Seq expected = last_seq() + 1;
    if (e.seq != expected) {
      fail(ErrorCode::CorruptLog, "sequence gap: expected " + std::to_string(expected) + ", found " +
                                      std::to_string(e.seq));
    }
    events_.push_back(std::move(e));
  }

  std::vector<Event> events_;
  std::vector<Listener> listeners_;
  std::unique_ptr<std::ofstream> sink_;
  Seq base_ = 0;
};

}  // namespace motorlance

#endif
