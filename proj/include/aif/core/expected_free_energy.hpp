#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aif/core/categorical.hpp"
#include "aif/core/free_energy.hpp"
#include "aif/core/generative_model.hpp"
#include "aif/core/narrative.hpp"

namespace aif {

inline constexpr std::size_t kDefaultHorizonCap = 3;
inline constexpr std::size_t kMaxHorizonCap = 5;
inline constexpr std::size_t kPolicyEnumerationCap = 100'000;
inline constexpr std::size_t kNoopPolicyId = std::numeric_limits<std::size_t>::max();
/// A policy is forbidden once it gives a constrained observation more than this mass.
inline constexpr double kConstraintMassThreshold = 1e-6;

struct Policy {
  std::size_t id = 0;
  std::vector<std::string> actions;

  /// The designated no-op: no actions, the agent holds still.
  static Policy noop() { return {kNoopPolicyId, {}}; }
  bool is_noop() const noexcept { return id == kNoopPolicyId; }

  friend bool operator==(const Policy&, const Policy&) = default;
};

/// Every action sequence of exactly `horizon` steps, lexicographic in action label, ids in order.
inline std::vector<Policy> enumerate_policies(const GenerativeModel& model, std::size_t horizon,
                                              std::size_t horizon_cap = kDefaultHorizonCap) {
  require(horizon_cap >= 1 && horizon_cap <= kMaxHorizonCap, ErrorCode::ConfigError,
          "horizon cap must be in [1, 5]");
  require(horizon >= 1, ErrorCode::ConfigError, "horizon must be at least 1");
  require(horizon <= horizon_cap, ErrorCode::CapExceeded,
          "horizon " + std::to_string(horizon) + " exceeds cap " + std::to_string(horizon_cap));

  std::vector<std::string> labels = *model.action_labels();
  std::sort(labels.begin(), labels.end());
  const std::size_t k = labels.size();

  std::size_t count = 1;
  for (std::size_t i = 0; i < horizon; ++i) {
    count *= k;
    if (count > kPolicyEnumerationCap) {
      fail(ErrorCode::CapExceeded, std::to_string(k) + "^" + std::to_string(horizon) +
                                       " policies exceed the enumeration cap");
    }
  }

  std::vector<Policy> policies;
  policies.reserve(count);
  std::vector<std::size_t> digits(horizon, 0);
  for (std::size_t id = 0; id < count; ++id) {
    Policy p{id, {}};
    p.actions.reserve(horizon);
    for (std::size_t d : digits) p.actions.push_back(labels[d]);
    policies.push_back(std::move(p));
    for (std::size_t pos = horizon; pos-- > 0;) {
      if (++digits[pos] < k) break;
      digits[pos] = 0;
    }
  }
  return policies;
}

/// Predictive quantities and the four terms for one step of a policy.
struct EfeStep {
  CategoricalDist predicted_states;
  CategoricalDist predicted_observations;
  double info_gain = 0.0;
  double pragmatic = 0.0;
  double ambiguity = 0.0;
  double risk = 0.0;
};

/// Both decompositions of expected free energy for one policy, summed over its steps.
struct EfeReport {
  Policy policy;
  double info_gain = 0.0;
  double pragmatic = 0.0;
  double ambiguity = 0.0;
  double risk = 0.0;
  double g_form1 = 0.0;
  double g_form2 = 0.0;
  bool consensus = false;
  std::string narrative_form1;
  std::string narrative_form2;
  std::vector<EfeStep> steps;

  /// Ranking uses the ambiguity + risk form.
  double value() const noexcept { return g_form2; }
};

/// Belief pushed one step through B for `action`.
inline CategoricalDist predict_states(const GenerativeModel& model, const CategoricalDist& belief,
                                      std::size_t action) {
  const auto& matrix = model.b().rows[action];
  std::vector<double> next(model.num_states(), 0.0);
  for (std::size_t s = 0; s < belief.size(); ++s) {
    if (belief[s] <= 0.0) continue;
    const auto& row = matrix[s];
    for (std::size_t t = 0; t < next.size(); ++t) next[t] += belief[s] * row[t];
  }
  return {model.state_labels(), std::move(next)};
}

inline CategoricalDist predict_observations(const GenerativeModel& model,
                                            const CategoricalDist& states) {
  std::vector<double> obs(model.num_observations(), 0.0);
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (states[s] <= 0.0) continue;
    const auto& row = model.a().rows[s];
    for (std::size_t o = 0; o < obs.size(); ++o) obs[o] += states[s] * row[o];
  }
  return {model.observation_labels(), std::move(obs)};
}

/// Rolls the belief forward through the policy and accumulates per-step terms additively.
/// Info gain uses the exact Bayesian posterior of each step's predictive distribution.
inline EfeReport compute_efe(const Policy& policy, const GenerativeModel& model,
                             const CategoricalDist& current_belief) {
  require(!policy.is_noop() && !policy.actions.empty(), ErrorCode::InvalidModel,
          "cannot evaluate the no-op policy");
  require(same_labels(current_belief.label_set(), model.state_labels()), ErrorCode::InvalidModel,
          "belief is not over the model's states");

  const auto& pref = model.preference_distribution();
  const std::size_t n_states = model.num_states();
  const std::size_t n_obs = model.num_observations();

  EfeReport report;
  report.policy = policy;
  CategoricalDist belief = current_belief;

  for (const auto& label : policy.actions) {
    const std::size_t action = model.action_index(label);
    CategoricalDist qs = predict_states(model, belief, action);
    CategoricalDist qo = predict_observations(model, qs);

    double info_gain = 0.0;
    double pragmatic = 0.0;
    double ambiguity = 0.0;
    double risk = 0.0;

    // Information gain and pragmatic value.
    for (std::size_t o = 0; o < n_obs; ++o) {
      if (qo[o] <= 0.0) continue;
      double divergence = 0.0;
      for (std::size_t s = 0; s < n_states; ++s) {
        if (qs[s] <= 0.0) continue;
        const double post = qs[s] * model.a().probability(s, o) / qo[o];
        if (post > 0.0) divergence += post * (clamped_log(post) - clamped_log(qs[s]));
      }
      info_gain += qo[o] * divergence;
      pragmatic += qo[o] * clamped_log(pref[o]);
    }

    // Ambiguity and risk.
    for (std::size_t s = 0; s < n_states; ++s) {
      if (qs[s] > 0.0) ambiguity += qs[s] * entropy(model.a().rows[s].probs());
    }
    risk = kl_divergence(qo.probs(), pref.probs());

    if (!std::isfinite(info_gain) || !std::isfinite(pragmatic) || !std::isfinite(ambiguity) ||
        !std::isfinite(risk)) {
      fail(ErrorCode::DegenerateModel, "non-finite expected free energy term");
    }

    report.info_gain += info_gain;
    report.pragmatic += pragmatic;
    report.ambiguity += ambiguity;
    report.risk += risk;
    report.steps.push_back({qs, std::move(qo), info_gain, pragmatic, ambiguity, risk});
    belief = std::move(qs);
  }

  report.g_form1 = -report.info_gain - report.pragmatic;
  report.g_form2 = report.ambiguity + report.risk;
  report.consensus = std::abs(report.g_form1 - report.g_form2) <= kConsensusTolerance;
  report.narrative_form1 = narrative::efe_form1(report.info_gain, report.pragmatic, report.g_form1);
  report.narrative_form2 = narrative::efe_form2(report.ambiguity, report.risk, report.g_form2);
  return report;
}

struct RankEntry {
  std::size_t policy_id = 0;
  double g = 0.0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

/// Full ascending ranking on g_form2, ties to the lowest policy id.
inline std::vector<RankEntry> rank_policies(std::span<const EfeReport> reports,
                                            bool allow_without_consensus = false) {
  std::vector<RankEntry> ranking;
  ranking.reserve(reports.size());
  for (const auto& r : reports) {
    if (!r.consensus && !allow_without_consensus) {
      fail(ErrorCode::NoConsensus,
           "policy " + std::to_string(r.policy.id) + " has no cross-form consensus");
    }
    ranking.push_back({r.policy.id, r.g_form2});
  }
  std::sort(ranking.begin(), ranking.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.g != b.g) return a.g < b.g;
    return a.policy_id < b.policy_id;
  });
  return ranking;
}

struct ConstraintFilter {
  std::vector<RankEntry> ranking;
  std::vector<std::size_t> removed;
  /// Every policy was forbidden; `ranking` holds only the no-op.
  bool lockout = false;
};

inline bool violates_constraints(const EfeReport& report, const PreferenceModel& c) {
  for (const auto& step : report.steps) {
    for (const auto& forbidden : c.hard_constraints) {
      auto idx = step.predicted_observations.index_of(forbidden);
      if (idx && step.predicted_observations[*idx] > kConstraintMassThreshold) return true;
    }
  }
  return false;
}

/// Drops policies whose predicted observations put mass on a forbidden label at any step.
inline ConstraintFilter apply_hard_constraints(const std::vector<RankEntry>& ranking,
                                               const PreferenceModel& c,
                                               std::span<const EfeReport> reports) {
  ConstraintFilter out;
  for (const auto& entry : ranking) {
    auto it = std::find_if(reports.begin(), reports.end(),
                           [&](const EfeReport& r) { return r.policy.id == entry.policy_id; });
    if (it != reports.end() && violates_constraints(*it, c)) {
      out.removed.push_back(entry.policy_id);
    } else {
      out.ranking.push_back(entry);
    }
  }
  if (out.ranking.empty()) {
    out.lockout = true;
    out.ranking.push_back({kNoopPolicyId, std::numeric_limits<double>::infinity()});
  }
  return out;
}

}  // namespace aif
