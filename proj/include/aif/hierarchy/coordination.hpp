#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/agent/preference_stack.hpp"
#include "aif/errors.hpp"

namespace aif {

inline constexpr double kCompetenceThreshold = 0.8;
inline constexpr double kAllocationTemperature = 0.5;

// ---- attention ----

struct IncomingReport {
  std::string child;
  double f = 0.0;
  std::uint64_t message_id = 0;
  nlohmann::json payload = nlohmann::json::object();
  /// Ticks spent in the retention queue.
  std::uint32_t age = 0;
};

struct AttentionResult {
  std::vector<IncomingReport> consumed;
  std::vector<IncomingReport> retained;
};

/// Descending F, ties by child id. Reports strictly above the threshold are consumed.
inline AttentionResult attention_filter(std::vector<IncomingReport> reports, double threshold) {
  std::stable_sort(reports.begin(), reports.end(), [](const IncomingReport& a, const IncomingReport& b) {
    if (a.f != b.f) return a.f > b.f;
    return a.child < b.child;
  });
  AttentionResult out;
  for (auto& r : reports) (r.f > threshold ? out.consumed : out.retained).push_back(std::move(r));
  return out;
}

// ---- preference flow ----

/// Child stack composed with a precision-weighted parent fragment. Layer-0 constraints survive
/// any precision because composition only ever unions constraint sets.
inline PreferenceModel compose_preferences(const PreferenceFlow& parent_flow, const PreferenceStack& child_stack,
                                           const std::vector<std::string>& observation_labels) {
  require(parent_flow.precision >= 0.0, ErrorCode::ConfigError, "flow precision must be non-negative");
  return child_stack.compose(observation_labels, parent_flow);
}

// ---- execution pathways ----

enum class Pathway { DirectExecution, DirectedSubcontract, ExploratoryRecruit };

constexpr const char* to_string(Pathway p) noexcept {
  switch (p) {
    case Pathway::DirectExecution: return "DirectExecution";
    case Pathway::DirectedSubcontract: return "DirectedSubcontract";
    case Pathway::ExploratoryRecruit: return "ExploratoryRecruit";
  }
  return "DirectExecution";
}

struct Candidate {
  std::string id;
  std::optional<double> ewma;
};

struct PathwayDecision {
  Pathway pathway = Pathway::DirectExecution;
  std::optional<std::string> contractor;
  std::vector<std::string> recruits;
};

/// `missing` are the policy actions the agent cannot perform itself; `candidates` are the agents
/// reachable for them. Known candidates below the competence threshold get the work directly.
inline PathwayDecision choose_pathway(const std::vector<std::string>& missing, const std::vector<Candidate>& candidates,
                                      double competence = kCompetenceThreshold) {
  PathwayDecision d;
  if (missing.empty()) return d;
  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (!c.ewma || *c.ewma >= competence) continue;
    if (!best || *c.ewma < *best->ewma || (*c.ewma == *best->ewma && c.id < best->id)) best = &c;
  }
  if (best) {
    d.pathway = Pathway::DirectedSubcontract;
    d.contractor = best->id;
    return d;
  }
  if (candidates.empty()) {
    fail(ErrorCode::NoCapablePath, "no agent can perform '" + missing.front() + "'");
  }
  d.pathway = Pathway::ExploratoryRecruit;
  for (const auto& c : candidates) d.recruits.push_back(c.id);
  std::sort(d.recruits.begin(), d.recruits.end());
  return d;
}

/// softmax(-ewma / tau) * budget when someone is below the competence threshold, uniform otherwise.
inline std::vector<double> allocate_resources(const std::vector<double>& ewmas, double budget,
                                              double tau = kAllocationTemperature,
                                              double competence = kCompetenceThreshold) {
  require(!ewmas.empty(), ErrorCode::ConfigError, "allocate_resources needs at least one candidate");
  require(budget > 0.0, ErrorCode::ConfigError, "budget must be positive");
  require(tau > 0.0, ErrorCode::ConfigError, "temperature must be positive");
  const double lowest = *std::min_element(ewmas.begin(), ewmas.end());
  std::vector<double> shares(ewmas.size(), budget / static_cast<double>(ewmas.size()));
  if (lowest >= competence) return shares;
  double z = 0.0;
  for (std::size_t i = 0; i < ewmas.size(); ++i) {
    shares[i] = std::exp(-(ewmas[i] - lowest) / tau);
    z += shares[i];
  }
  for (double& s : shares) s = budget * s / z;
  return shares;
}

}  // namespace aif
