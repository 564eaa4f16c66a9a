#pragma once

// Corrupted-trace fixtures built from clean traces. Each injects exactly one fault.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/trace/trace.hpp"

namespace aif::fixture {

struct Injected {
  std::vector<TraceEvent> events;
  std::uint64_t seq = 0;
};

/// Inserts a delivery between two agents that share no blanket, halfway through the trace,
/// claiming a parent-child authorization. Later sequence numbers shift by one.
inline Injected forge_delivery(std::vector<TraceEvent> events, const std::string& sender, const std::string& receiver) {
  const std::size_t at = events.size() / 2;
  const TraceEvent& before = events[at - 1];
  TraceEvent forged{before.tick,
                    before.seq + 1,
                    sender,
                    "MessageDelivered",
                    {{"message_id", std::uint64_t{900000}},
                     {"kind", "TaskAssign"},
                     {"sender", sender},
                     {"receiver", receiver},
                     {"topic", nullptr},
                     {"provenance", nlohmann::json::array()},
                     {"authorization", "parent-child"},
                     {"payload", {{"task_id", "forged"}, {"action", "test_color_map"}, {"share", 1.0}}}},
                    "system"};
  for (std::size_t i = at; i < events.size(); ++i) ++events[i].seq;
  events.insert(events.begin() + static_cast<std::ptrdiff_t>(at), forged);
  return {std::move(events), forged.seq};
}

/// Rewrites one agent's layer-0 hash in the middle Tick.
inline Injected tamper_layer0(std::vector<TraceEvent> events, const std::string& agent) {
  std::vector<std::size_t> ticks;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].event_type == "Tick") ticks.push_back(i);
  }
  require(!ticks.empty(), ErrorCode::MalformedTrace, "trace has no Tick events");
  TraceEvent& e = events[ticks[ticks.size() / 2]];
  e.payload.at("layer0")[agent] = std::string(64, 'f');
  return {events, e.seq};
}

}  // namespace aif::fixture
