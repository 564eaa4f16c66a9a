#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/hierarchy/topology.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

enum class MessageKind { ErrorReport, PreferenceFlow, TaskOffer, TaskBid, TaskAssign, OutcomeReport, Approval, Trace };

constexpr std::string_view to_string(MessageKind k) noexcept {
  switch (k) {
    case MessageKind::ErrorReport: return "ErrorReport";
    case MessageKind::PreferenceFlow: return "PreferenceFlow";
    case MessageKind::TaskOffer: return "TaskOffer";
    case MessageKind::TaskBid: return "TaskBid";
    case MessageKind::TaskAssign: return "TaskAssign";
    case MessageKind::OutcomeReport: return "OutcomeReport";
    case MessageKind::Approval: return "Approval";
    case MessageKind::Trace: return "Trace";
  }
  return "Trace";
}

inline MessageKind message_kind_from(std::string_view s) {
  for (auto k : {MessageKind::ErrorReport, MessageKind::PreferenceFlow, MessageKind::TaskOffer,
                 MessageKind::TaskBid, MessageKind::TaskAssign, MessageKind::OutcomeReport,
                 MessageKind::Approval, MessageKind::Trace}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::SchemaViolation, "unknown message kind '" + std::string(s) + "'");
}

struct BusMessage {
  std::uint64_t id = 0;
  MessageKind kind = MessageKind::Trace;
  std::string sender;
  std::optional<std::string> receiver;
  std::optional<std::string> topic;
  nlohmann::json payload = nlohmann::json::object();
  std::uint64_t tick = 0;
  std::vector<std::uint64_t> provenance;
};

struct Receipt {
  std::uint64_t message_id = 0;
  std::string receiver;
  bool delivered = false;
  std::string reason;
};

namespace detail {

enum class FieldType { Number, NonNegative, Positive, String, Bool, Object };

inline void expect_field(const nlohmann::json& p, MessageKind kind, const char* key, FieldType type) {
  const std::string where = std::string(to_string(kind)) + ".payload." + key;
  if (!p.contains(key)) fail(ErrorCode::SchemaViolation, where + ": missing");
  const auto& v = p.at(key);
  bool ok = false;
  switch (type) {
    case FieldType::Number: ok = v.is_number(); break;
    case FieldType::NonNegative: ok = v.is_number() && v.get<double>() >= 0.0; break;
    case FieldType::Positive: ok = v.is_number() && v.get<double>() > 0.0; break;
    case FieldType::String: ok = v.is_string(); break;
    case FieldType::Bool: ok = v.is_boolean(); break;
    case FieldType::Object: ok = v.is_object(); break;
  }
  if (!ok) fail(ErrorCode::SchemaViolation, where + ": wrong type or range");
}

}  // namespace detail

/// Kind-specific payload schema.
inline void validate_message(const BusMessage& m) {
  using detail::expect_field;
  using detail::FieldType;
  if (!m.payload.is_object()) fail(ErrorCode::SchemaViolation, "payload must be an object");
  if (m.sender.empty()) fail(ErrorCode::SchemaViolation, "sender must be non-empty");
  if (!m.receiver && !m.topic) fail(ErrorCode::SchemaViolation, "message needs a receiver or a topic");
  const auto& p = m.payload;
  switch (m.kind) {
    case MessageKind::ErrorReport:
      expect_field(p, m.kind, "f", FieldType::NonNegative);
      expect_field(p, m.kind, "summary", FieldType::String);
      break;
    case MessageKind::PreferenceFlow:
      expect_field(p, m.kind, "fragment", FieldType::Object);
      expect_field(p, m.kind, "precision", FieldType::NonNegative);
      for (const auto& [label, v] : p.at("fragment").items()) {
        if (!v.is_number()) fail(ErrorCode::SchemaViolation, "PreferenceFlow.payload.fragment." + label + ": not a number");
      }
      break;
    case MessageKind::TaskOffer:
      expect_field(p, m.kind, "task_id", FieldType::String);
      expect_field(p, m.kind, "action", FieldType::String);
      expect_field(p, m.kind, "budget", FieldType::Positive);
      break;
    case MessageKind::TaskBid:
      expect_field(p, m.kind, "task_id", FieldType::String);
      if (p.contains("ewma") && !p.at("ewma").is_null()) expect_field(p, m.kind, "ewma", FieldType::NonNegative);
      break;
    case MessageKind::TaskAssign:
      expect_field(p, m.kind, "task_id", FieldType::String);
      expect_field(p, m.kind, "action", FieldType::String);
      expect_field(p, m.kind, "share", FieldType::NonNegative);
      break;
    case MessageKind::OutcomeReport:
      expect_field(p, m.kind, "task_id", FieldType::String);
      expect_field(p, m.kind, "f", FieldType::NonNegative);
      expect_field(p, m.kind, "success", FieldType::Bool);
      break;
    case MessageKind::Approval:
      expect_field(p, m.kind, "sender", FieldType::String);
      expect_field(p, m.kind, "receiver", FieldType::String);
      break;
    case MessageKind::Trace:
      expect_field(p, m.kind, "event", FieldType::Object);
      break;
  }
}

inline nlohmann::json to_json(const BusMessage& m) {
  return {{"id", m.id},
          {"kind", to_string(m.kind)},
          {"sender", m.sender},
          {"receiver", m.receiver ? nlohmann::json(*m.receiver) : nlohmann::json(nullptr)},
          {"topic", m.topic ? nlohmann::json(*m.topic) : nlohmann::json(nullptr)},
          {"payload", m.payload},
          {"tick", m.tick},
          {"provenance", m.provenance}};
}

/// Single sequencer: ids are assigned in publish order and every delivery decision is traced.
class MessageBus {
 public:
  MessageBus(BlanketTopology& topology, TraceSink& trace) : topology_(&topology), trace_(&trace) {}

  std::vector<Receipt> publish(BusMessage m) {
    validate_message(m);
    m.id = next_id_;
    for (auto p : m.provenance) {
      require(p < m.id, ErrorCode::SchemaViolation,
              "provenance may only reference earlier messages (" + std::to_string(p) + ")");
    }
    ++next_id_;
    m.tick = trace_->tick();

    std::vector<std::string> recipients;
    if (m.receiver) {
      recipients.push_back(*m.receiver);
    } else if (const Topic* t = topology_->topic(*m.topic)) {
      if (t->owner != m.sender) recipients.push_back(t->owner);
      for (const auto& s : t->subscribers) {
        if (s != m.sender && s != t->owner) recipients.push_back(s);
      }
    }

    std::vector<Receipt> receipts;
    for (const auto& r : recipients) {
      Receipt receipt{m.id, r, false, ""};
      auto why = topology_->authorize(m.sender, r, m.topic, m.provenance);
      if (why) {
        receipt.delivered = true;
        receipt.reason = *why;
        BusMessage copy = m;
        copy.receiver = r;
        inbox_[r].push_back(copy);
        trace_->emit(m.sender, "MessageDelivered",
                     {{"message_id", m.id},
                      {"kind", to_string(m.kind)},
                      {"sender", m.sender},
                      {"receiver", r},
                      {"topic", m.topic ? nlohmann::json(*m.topic) : nlohmann::json(nullptr)},
                      {"provenance", m.provenance},
                      {"authorization", *why},
                      {"payload", m.payload}});
        if (m.kind == MessageKind::Approval) {
          ApprovalRecord a{m.id, m.sender, m.payload.at("sender").get<std::string>(),
                           m.payload.at("receiver").get<std::string>()};
          topology_->record_approval(a);
          trace_->emit(m.sender, "ApprovalGranted",
                       {{"message_id", a.message_id}, {"approver", a.approver}, {"sender", a.sender}, {"receiver", a.receiver}});
        }
      } else {
        receipt.reason = "blanket violation";
        trace_->emit(m.sender, "BlanketViolationAttempt",
                     {{"message_id", m.id},
                      {"kind", to_string(m.kind)},
                      {"sender", m.sender},
                      {"receiver", r},
                      {"topic", m.topic ? nlohmann::json(*m.topic) : nlohmann::json(nullptr)},
                      {"provenance", m.provenance}});
      }
      receipts.push_back(std::move(receipt));
    }
    log_.push_back(std::move(m));
    return receipts;
  }

  /// Removes and returns everything queued for `agent`, in publish order.
  std::vector<BusMessage> drain(const std::string& agent) {
    auto it = inbox_.find(agent);
    if (it == inbox_.end()) return {};
    std::vector<BusMessage> out(it->second.begin(), it->second.end());
    it->second.clear();
    return out;
  }

  /// Removes queued messages of one kind, leaving the rest in place.
  std::vector<BusMessage> drain(const std::string& agent, MessageKind kind) {
    std::vector<BusMessage> out;
    auto it = inbox_.find(agent);
    if (it == inbox_.end()) return out;
    std::deque<BusMessage> keep;
    for (auto& m : it->second) {
      if (m.kind == kind) {
        out.push_back(std::move(m));
      } else {
        keep.push_back(std::move(m));
      }
    }
    it->second = std::move(keep);
    return out;
  }

  const std::vector<BusMessage>& log() const noexcept { return log_; }
  std::uint64_t next_id() const noexcept { return next_id_; }

 private:
  BlanketTopology* topology_;
  TraceSink* trace_;
  std::uint64_t next_id_ = 0;
  std::map<std::string, std::deque<BusMessage>> inbox_;
  std::vector<BusMessage> log_;
};

}  // namespace aif
