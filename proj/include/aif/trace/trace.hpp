#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"

namespace aif {

struct TraceEvent {
  std::uint64_t tick = 0;
  std::uint64_t seq = 0;
  std::string agent_id;
  std::string event_type;
  nlohmann::json payload = nlohmann::json::object();
  std::string source = "system";
};

inline nlohmann::json to_json(const TraceEvent& e) {
  return {{"tick", e.tick},         {"seq", e.seq},         {"agent_id", e.agent_id},
          {"event_type", e.event_type}, {"payload", e.payload}, {"source", e.source}};
}

inline TraceEvent event_from_json(const nlohmann::json& j) {
  auto bad = [](const std::string& what) { fail(ErrorCode::MalformedTrace, what); };
  if (!j.is_object()) bad("trace record is not an object");
  for (const char* key : {"tick", "seq"}) {
    if (!j.contains(key) || !j.at(key).is_number_unsigned()) {
      bad(std::string("trace record field '") + key + "' must be a non-negative integer");
    }
  }
  for (const char* key : {"agent_id", "event_type"}) {
    if (!j.contains(key) || !j.at(key).is_string()) {
      bad(std::string("trace record field '") + key + "' must be a string");
    }
  }
  if (!j.contains("payload") || !j.at("payload").is_object()) bad("trace record payload must be an object");
  TraceEvent e;
  e.tick = j.at("tick").get<std::uint64_t>();
  e.seq = j.at("seq").get<std::uint64_t>();
  e.agent_id = j.at("agent_id").get<std::string>();
  e.event_type = j.at("event_type").get<std::string>();
  e.payload = j.at("payload");
  e.source = j.value("source", std::string("system"));
  return e;
}

/// Append-only event log. Sequence numbers are global and strictly increasing; ticks are
/// non-decreasing. Safe for concurrent emitters.
class TraceSink {
 public:
  using Listener = std::function<void(const TraceEvent&)>;

  TraceSink() = default;

  /// Streams every event to `path` as JSONL. When `keep_in_memory` is false only the
  /// file holds the log.
  explicit TraceSink(const std::string& path, bool keep_in_memory = false)
      : file_(std::make_unique<std::ofstream>(path, std::ios::trunc)), keep_(keep_in_memory) {
    if (!*file_) fail(ErrorCode::ConfigError, "cannot open trace file '" + path + "'");
  }

  TraceSink(const TraceSink&) = delete;
  TraceSink& operator=(const TraceSink&) = delete;

  ~TraceSink() { flush(); }

  void set_tick(std::uint64_t tick) {
    std::lock_guard lock(mu_);
    tick_ = tick;
  }

  std::uint64_t tick() const {
    std::lock_guard lock(mu_);
    return tick_;
  }

  TraceEvent emit(std::string agent_id, std::string event_type, nlohmann::json payload,
                  std::string source = "system") {
    std::vector<Listener> listeners;
    TraceEvent e;
    {
      std::lock_guard lock(mu_);
      e = TraceEvent{tick_, next_seq_++, std::move(agent_id), std::move(event_type),
                     std::move(payload), std::move(source)};
      if (file_) *file_ << to_json(e).dump() << '\n';
      if (keep_) events_.push_back(e);
      ++counts_[e.event_type];
      listeners = listeners_;
    }
    for (const auto& l : listeners) l(e);
    return e;
  }

  void flush() {
    std::lock_guard lock(mu_);
    if (file_) file_->flush();
  }

  /// Called after every emit, outside the lock.
  void add_listener(Listener l) {
    std::lock_guard lock(mu_);
    listeners_.push_back(std::move(l));
  }

  std::vector<TraceEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  /// Events with seq >= `from`, when kept in memory.
  std::vector<TraceEvent> events_from(std::uint64_t from) const {
    std::lock_guard lock(mu_);
    auto it = std::lower_bound(events_.begin(), events_.end(), from,
                               [](const TraceEvent& e, std::uint64_t s) { return e.seq < s; });
    return {it, events_.end()};
  }

  std::uint64_t size() const {
    std::lock_guard lock(mu_);
    return next_seq_;
  }

  std::uint64_t count(const std::string& event_type) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(event_type);
    return it == counts_.end() ? 0 : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::unique_ptr<std::ofstream> file_;
  bool keep_ = true;
  std::uint64_t tick_ = 0;
  std::uint64_t next_seq_ = 0;
  std::vector<TraceEvent> events_;
  std::map<std::string, std::uint64_t> counts_;
  std::vector<Listener> listeners_;
};

/// Streams a JSONL trace without holding it in memory.
inline void for_each_event(const std::string& path, const std::function<void(const TraceEvent&)>& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MalformedTrace, "cannot open trace '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::MalformedTrace, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(event_from_json(j));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MalformedTrace) throw;
      fail(ErrorCode::MalformedTrace, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::vector<TraceEvent> read_trace(const std::string& path) {
  std::vector<TraceEvent> out;
  for_each_event(path, [&](const TraceEvent& e) { out.push_back(e); });
  return out;
}

inline void write_trace(const std::string& path, const std::vector<TraceEvent>& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::ConfigError, "cannot write trace '" + path + "'");
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

}  // namespace aif
