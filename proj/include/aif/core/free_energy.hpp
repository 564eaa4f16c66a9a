#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "aif/core/categorical.hpp"
#include "aif/core/generative_model.hpp"
#include "aif/core/narrative.hpp"

namespace aif {

inline constexpr double kConsensusTolerance = 1e-9;
inline constexpr double kMinEvidence = 1e-300;
/// Largest free energy a single observation can carry under the clamping rule.
inline const double kSurpriseCeiling = -std::log(kProbabilityFloor);

/// Both decompositions of variational free energy for one observation.
/// `accuracy` stores the cost -E_Q[ln P(o|s)], so f_form1 = complexity + accuracy.
struct FreeEnergyReport {
  double complexity = 0.0;
  double accuracy = 0.0;
  double belief_divergence = 0.0;
  double log_evidence = 0.0;
  double f_form1 = 0.0;
  double f_form2 = 0.0;
  bool consensus = false;
  std::string narrative_form1;
  std::string narrative_form2;

  double value() const noexcept { return f_form2; }
};

/// Exact Bayesian posterior prior(s) P(o|s) / P(o).
inline CategoricalDist update_belief(const CategoricalDist& prior, const LikelihoodModel& likelihood,
                                     std::size_t observation) {
  require(likelihood.rows.size() == prior.size(), ErrorCode::InvalidModel,
          "likelihood rows do not match prior support");
  std::vector<double> joint(prior.size());
  double evidence = 0.0;
  for (std::size_t s = 0; s < prior.size(); ++s) {
    joint[s] = prior[s] * likelihood.probability(s, observation);
    evidence += joint[s];
  }
  if (!(evidence >= kMinEvidence)) {
    fail(ErrorCode::ZeroEvidence, "observation has zero evidence under the prior");
  }
  for (double& j : joint) j /= evidence;
  return {prior.label_set(), std::move(joint)};
}

inline CategoricalDist update_belief(const CategoricalDist& prior, const GenerativeModel& model,
                                     std::string_view observation) {
  return update_belief(prior, model.a(), model.observation_index(observation));
}

/// F for belief q against an explicit prior. The two forms share no intermediate:
/// form 1 never forms the posterior, form 2 never forms the complexity term.
inline FreeEnergyReport compute_vfe(const CategoricalDist& q, const CategoricalDist& prior,
                                    const LikelihoodModel& likelihood, std::size_t observation) {
  require(q.size() == prior.size() && likelihood.rows.size() == q.size(), ErrorCode::InvalidModel,
          "belief, prior and likelihood disagree on the state count");
  const std::size_t n = q.size();
  FreeEnergyReport r;

  // Complexity-accuracy.
  for (std::size_t s = 0; s < n; ++s) {
    if (q[s] <= 0.0) continue;
    r.complexity += q[s] * (clamped_log(q[s]) - clamped_log(prior[s]));
    r.accuracy -= q[s] * clamped_log(likelihood.probability(s, observation));
  }
  r.f_form1 = r.complexity + r.accuracy;

  // Divergence-evidence.
  double evidence = 0.0;
  for (std::size_t s = 0; s < n; ++s) evidence += prior[s] * likelihood.probability(s, observation);
  if (!(evidence >= kMinEvidence)) {
    fail(ErrorCode::DegenerateModel, "log of zero model evidence required");
  }
  const CategoricalDist posterior = update_belief(prior, likelihood, observation);
  for (std::size_t s = 0; s < n; ++s) {
    if (q[s] <= 0.0) continue;
    r.belief_divergence += q[s] * (clamped_log(q[s]) - clamped_log(posterior[s]));
  }
  r.log_evidence = clamped_log(evidence);
  r.f_form2 = r.belief_divergence - r.log_evidence;

  if (!std::isfinite(r.f_form1) || !std::isfinite(r.f_form2)) {
    fail(ErrorCode::DegenerateModel, "non-finite free energy");
  }
  r.consensus = std::abs(r.f_form1 - r.f_form2) <= kConsensusTolerance;
  r.narrative_form1 = narrative::vfe_form1(r.complexity, r.accuracy, r.f_form1);
  r.narrative_form2 = narrative::vfe_form2(r.belief_divergence, r.log_evidence, r.f_form2);
  return r;
}

/// F for belief q against the model's own prior D.
inline FreeEnergyReport compute_vfe(const CategoricalDist& q, const GenerativeModel& model,
                                    std::string_view observation) {
  require(same_labels(q.label_set(), model.state_labels()), ErrorCode::InvalidModel,
          "belief is not over the model's states");
  return compute_vfe(q, model.d().dist, model.a(), model.observation_index(observation));
}

}  // namespace aif
