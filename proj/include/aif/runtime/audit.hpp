#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/hierarchy/reputation.hpp"
#include "aif/hierarchy/topology.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

inline constexpr double kEwmaTolerance = 1e-12;

struct Violation {
  /// blanket, immutability, budget, reputation or topology.
  std::string kind;
  std::uint64_t seq = 0;
  std::uint64_t tick = 0;
  std::string agent;
  std::string detail;
};

struct AuditReport {
  std::vector<Violation> violations;
  std::uint64_t events = 0;
  std::uint64_t deliveries_checked = 0;
  std::uint64_t layer0_checks = 0;
  std::uint64_t budget_cycles_checked = 0;
  std::uint64_t reputation_updates_checked = 0;

  bool clean() const noexcept { return violations.empty(); }
  std::size_t count(const std::string& kind) const {
    std::size_t n = 0;
    for (const auto& v : violations) n += v.kind == kind;
    return n;
  }
};

inline nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : r.violations) {
    v.push_back({{"kind", x.kind}, {"seq", x.seq}, {"tick", x.tick}, {"agent", x.agent}, {"detail", x.detail}});
  }
  return {{"clean", r.clean()},
          {"violations", std::move(v)},
          {"checked",
           {{"events", r.events},
            {"deliveries", r.deliveries_checked},
            {"layer0", r.layer0_checks},
            {"budget_cycles", r.budget_cycles_checked},
            {"reputation_updates", r.reputation_updates_checked}}}};
}

/// Replays the topology, the layer-0 hashes, the budget ledger and the reputation recurrence
/// from the events alone. Ordering or schema faults raise MalformedTrace.
class TraceAuditor {
 public:
  void feed(const TraceEvent& e) {
    if (last_ && (e.tick < last_->first || e.seq <= last_->second)) {
      malformed(e, "events are not strictly ordered by (tick, seq)");
    }
    last_ = {e.tick, e.seq};
    ++report_.events;
    const auto& p = e.payload;
    const std::string& type = e.event_type;
    if (type == "AgentSpawned") {
      const auto id = str(e, "id");
      const auto parent = p.contains("parent") && p.at("parent").is_string()
                              ? std::optional<std::string>(p.at("parent").get<std::string>())
                              : std::nullopt;
      topology_op(e, [&] { topology_.add_agent(id, parent); });
      spawn_hash_[id] = str(e, "layer0_hash");
    } else if (type == "AgentRetired") {
      const auto successor = p.contains("successor") && p.at("successor").is_string()
                                 ? std::optional<std::string>(p.at("successor").get<std::string>())
                                 : std::nullopt;
      topology_op(e, [&] { topology_.retire(str(e, "id"), successor); });
    } else if (type == "TopicCreated") {
      topology_op(e, [&] { topology_.create_topic(str(e, "topic"), str(e, "owner")); });
    } else if (type == "TopicSubscribed") {
      topology_op(e, [&] { topology_.subscribe(str(e, "topic"), str(e, "agent")); });
    } else if (type == "ApprovalGranted") {
      topology_.record_approval({uint(e, "message_id"), str(e, "approver"), str(e, "sender"), str(e, "receiver")});
    } else if (type == "MessageDelivered") {
      check_delivery(e);
    } else if (type == "Tick") {
      if (!p.contains("layer0") || !p.at("layer0").is_object()) malformed(e, "missing layer0 hashes");
      for (const auto& [agent, hash] : p.at("layer0").items()) {
        if (!hash.is_string()) malformed(e, "layer0 hash is not a string");
        check_layer0(e, agent, hash.get<std::string>());
      }
    } else if (type == "PreferenceChanged" || type == "PreferenceWriteRejected") {
      if (p.contains("layer0_hash")) check_layer0(e, e.agent_id, str(e, "layer0_hash"));
    } else if (type == "EfeEvaluated") {
      ++evaluations_[{e.agent_id, uint(e, "cycle")}];
    } else if (type == "BudgetCharged") {
      check_budget(e);
    } else if (type == "ReputationUpdated") {
      check_reputation(e);
    }
  }

  AuditReport finish() {
    for (const auto& [key, n] : evaluations_) {
      if (!charged_.count(key)) {
        add("budget", 0, 0, key.first,
            fmt::format("cycle {}: {} evaluations were never charged", key.second, n));
      }
    }
    std::stable_sort(report_.violations.begin(), report_.violations.end(),
                     [](const Violation& a, const Violation& b) { return a.seq < b.seq; });
    return std::move(report_);
  }

 private:
  [[noreturn]] static void malformed(const TraceEvent& e, const std::string& what) {
    fail(ErrorCode::MalformedTrace, fmt::format("event seq {} ({}): {}", e.seq, e.event_type, what));
  }

  static std::string str(const TraceEvent& e, const char* key) {
    if (!e.payload.contains(key) || !e.payload.at(key).is_string()) malformed(e, std::string("missing string '") + key + "'");
    return e.payload.at(key).get<std::string>();
  }

  static std::uint64_t uint(const TraceEvent& e, const char* key) {
    if (!e.payload.contains(key) || !e.payload.at(key).is_number_unsigned()) {
      malformed(e, std::string("missing unsigned '") + key + "'");
    }
    return e.payload.at(key).get<std::uint64_t>();
  }

  static double number(const TraceEvent& e, const char* key) {
    if (!e.payload.contains(key) || !e.payload.at(key).is_number()) malformed(e, std::string("missing number '") + key + "'");
    return e.payload.at(key).get<double>();
  }

  void add(std::string kind, std::uint64_t seq, std::uint64_t tick, std::string agent, std::string detail) {
    report_.violations.push_back({std::move(kind), seq, tick, std::move(agent), std::move(detail)});
  }

  template <class F>
  void topology_op(const TraceEvent& e, F&& op) {
    try {
      op();
    } catch (const Error& err) {
      add("topology", e.seq, e.tick, e.agent_id, err.what());
    }
  }

  void check_delivery(const TraceEvent& e) {
    ++report_.deliveries_checked;
    const auto& p = e.payload;
    const std::string sender = str(e, "sender");
    const std::string receiver = str(e, "receiver");
    std::optional<std::string> topic;
    if (p.contains("topic") && p.at("topic").is_string()) topic = p.at("topic").get<std::string>();
    std::vector<std::uint64_t> provenance;
    if (p.contains("provenance")) {
      if (!p.at("provenance").is_array()) malformed(e, "provenance is not a list");
      for (const auto& v : p.at("provenance")) {
        if (!v.is_number_unsigned()) malformed(e, "provenance entries must be message ids");
        provenance.push_back(v.get<std::uint64_t>());
      }
    }
    const auto why = topology_.authorize(sender, receiver, topic, provenance);
    const std::string recorded = p.value("authorization", "");
    if (!why) {
      add("blanket", e.seq, e.tick, sender,
          fmt::format("message {} from '{}' to '{}' crosses a blanket without approval", uint(e, "message_id"), sender,
                      receiver));
    } else if (*why != recorded) {
      add("blanket", e.seq, e.tick, sender,
          fmt::format("message {} recorded authorization '{}' but replay gives '{}'", uint(e, "message_id"), recorded, *why));
    }
  }

  void check_layer0(const TraceEvent& e, const std::string& agent, const std::string& hash) {
    ++report_.layer0_checks;
    auto it = spawn_hash_.find(agent);
    if (it == spawn_hash_.end()) {
      add("immutability", e.seq, e.tick, agent, "layer-0 hash for an agent that was never spawned");
    } else if (it->second != hash) {
      add("immutability", e.seq, e.tick, agent,
          fmt::format("layer-0 hash {} differs from the spawn hash {}", hash, it->second));
    }
  }

  void check_budget(const TraceEvent& e) {
    ++report_.budget_cycles_checked;
    const std::pair<std::string, std::uint64_t> key{e.agent_id, uint(e, "cycle")};
    const std::uint64_t units = uint(e, "units");
    const std::uint64_t consumed = uint(e, "consumed");
    const std::uint64_t max = uint(e, "max");
    charged_[key] += units;
    const auto seen = evaluations_.count(key) ? evaluations_.at(key) : 0;
    if (charged_[key] != seen) {
      add("budget", e.seq, e.tick, e.agent_id,
          fmt::format("cycle {}: charged {} units for {} evaluations", key.second, charged_[key], seen));
    }
    if (consumed > max) {
      add("budget", e.seq, e.tick, e.agent_id, fmt::format("cycle {}: consumed {} exceeds the cap {}", key.second, consumed, max));
    }
  }

  void check_reputation(const TraceEvent& e) {
    ++report_.reputation_updates_checked;
    const std::string agent = str(e, "agent");
    const double f = number(e, "f");
    const double decay = number(e, "decay");
    const double recorded = number(e, "ewma");
    auto it = ewma_.find(agent);
    const double expected =
        ReputationLedger::step(it == ewma_.end() ? std::nullopt : std::optional<double>(it->second), f, decay);
    if (!(std::abs(expected - recorded) <= kEwmaTolerance)) {
      add("reputation", e.seq, e.tick, agent, fmt::format("recorded ewma {} but the recurrence gives {}", recorded, expected));
    }
    // The replayed value seeds the next step so one bad record is one violation.
    ewma_[agent] = expected;
  }

  AuditReport report_;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> last_;
  BlanketTopology topology_;
  std::map<std::string, std::string> spawn_hash_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> evaluations_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> charged_;
  std::map<std::string, double> ewma_;
};

inline AuditReport audit(const std::vector<TraceEvent>& events) {
  TraceAuditor a;
  for (const auto& e : events) a.feed(e);
  return a.finish();
}

/// Streams the file, so arbitrarily long traces audit in constant memory per agent.
inline AuditReport audit(const std::string& trace_path) {
  TraceAuditor a;
  for_each_event(trace_path, [&](const TraceEvent& e) { a.feed(e); });
  return a.finish();
}

inline std::string audit_table(const AuditReport& r) {
  std::string out = fmt::format("events checked       {}\ndeliveries checked   {}\nlayer-0 checks       {}\n"
                                "budget cycles        {}\nreputation updates   {}\nviolations           {}\n",
                                r.events, r.deliveries_checked, r.layer0_checks, r.budget_cycles_checked,
                                r.reputation_updates_checked, r.violations.size());
  for (const auto& v : r.violations) {
    out += fmt::format("  [{}] seq {} tick {} agent {}: {}\n", v.kind, v.seq, v.tick, v.agent, v.detail);
  }
  return out;
}

}  // namespace aif
