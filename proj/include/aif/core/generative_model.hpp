#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aif/core/categorical.hpp"

namespace aif {

inline constexpr std::size_t kMaxStates = 64;
inline constexpr std::size_t kMaxObservations = 64;
inline constexpr std::size_t kMaxActions = 16;

/// Raw rows must sum to one within this before they are renormalized.
inline constexpr double kRowSumTolerance = 1e-6;

/// A: one distribution over observations per hidden state.
struct LikelihoodModel {
  std::vector<CategoricalDist> rows;
  std::vector<std::string> annotations;  // one hypothesis per state, or empty

  double probability(std::size_t state, std::size_t observation) const noexcept {
    return rows[state][observation];
  }
};

/// B: rows[action][state] is P(s' | s, action).
struct TransitionModel {
  std::vector<std::vector<CategoricalDist>> rows;
  std::vector<std::string> annotations;  // one causal narrative per action, or empty
};

/// C: log-preferences over observations plus the forbidden observation set.
struct PreferenceModel {
  std::vector<double> log_pref;
  std::vector<std::string> hard_constraints;
  std::vector<std::string> annotations;
  double precision = 1.0;

  /// P(o | C) = softmax(precision * log_pref).
  CategoricalDist distribution(const LabelSet& observation_labels) const {
    require(log_pref.size() == observation_labels->size(), ErrorCode::InvalidModel,
            "preference length does not match observation labels");
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : log_pref) peak = std::max(peak, precision * v);
    std::vector<double> w(log_pref.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(precision * log_pref[i] - peak);
    return {observation_labels, std::move(w)};
  }

  bool forbids(std::string_view label) const {
    return std::find(hard_constraints.begin(), hard_constraints.end(), label) !=
           hard_constraints.end();
  }

  friend bool operator==(const PreferenceModel&, const PreferenceModel&) = default;
};

/// D.
struct PriorBelief {
  CategoricalDist dist;
  std::vector<std::string> annotations;
};

/// Plain matrices, the form models are written in before validation.
struct ModelSpec {
  std::vector<std::string> states;
  std::vector<std::string> observations;
  std::vector<std::string> actions;
  std::vector<std::vector<double>> a;               // [state][observation]
  std::vector<std::vector<std::vector<double>>> b;  // [action][state][next state]
  PreferenceModel c;
  std::vector<double> d;
  std::vector<std::string> a_annotations;
  std::vector<std::string> b_annotations;
  std::vector<std::string> d_annotations;
};

/// The A/B/C/D bundle. Immutable once constructed; every constructor path validates.
class GenerativeModel {
 public:
  GenerativeModel(LabelSet states, LabelSet observations, LabelSet actions, LikelihoodModel a,
                  TransitionModel b, PreferenceModel c, PriorBelief d)
      : states_(std::move(states)),
        observations_(std::move(observations)),
        actions_(std::move(actions)),
        a_(std::move(a)),
        b_(std::move(b)),
        c_(std::move(c)),
        d_(std::move(d)),
        preference_dist_(CategoricalDist::uniform(observations_)) {
    std::sort(c_.hard_constraints.begin(), c_.hard_constraints.end());
    c_.hard_constraints.erase(std::unique(c_.hard_constraints.begin(), c_.hard_constraints.end()),
                              c_.hard_constraints.end());
    validate();
    preference_dist_ = c_.distribution(observations_);
  }

  const LabelSet& state_labels() const noexcept { return states_; }
  const LabelSet& observation_labels() const noexcept { return observations_; }
  const LabelSet& action_labels() const noexcept { return actions_; }
  std::size_t num_states() const noexcept { return states_->size(); }
  std::size_t num_observations() const noexcept { return observations_->size(); }
  std::size_t num_actions() const noexcept { return actions_->size(); }

  const LikelihoodModel& a() const noexcept { return a_; }
  const TransitionModel& b() const noexcept { return b_; }
  const PreferenceModel& c() const noexcept { return c_; }
  const PriorBelief& d() const noexcept { return d_; }
  const CategoricalDist& preference_distribution() const noexcept { return preference_dist_; }

  std::size_t state_index(std::string_view label) const { return lookup(*states_, label, "state"); }
  std::size_t observation_index(std::string_view label) const {
    return lookup(*observations_, label, "observation");
  }
  std::size_t action_index(std::string_view label) const {
    return lookup(*actions_, label, "action");
  }

  GenerativeModel with_preferences(PreferenceModel c) const {
    return {states_, observations_, actions_, a_, b_, std::move(c), d_};
  }

  GenerativeModel with_prior(PriorBelief d) const {
    return {states_, observations_, actions_, a_, b_, c_, std::move(d)};
  }

 private:
  static std::size_t lookup(const std::vector<std::string>& labels, std::string_view label,
                            const char* what) {
    auto i = find_label(labels, label);
    if (!i) fail(ErrorCode::UnknownLabel, std::string("unknown ") + what + " '" + std::string(label) + "'");
    return *i;
  }

  void validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorCode::InvalidModel, msg); };
    if (!states_ || !observations_ || !actions_) bad("missing label sets");
    if (states_->empty() || states_->size() > kMaxStates) bad("state count must be in [1, 64]");
    if (observations_->empty() || observations_->size() > kMaxObservations)
      bad("observation count must be in [1, 64]");
    if (actions_->empty() || actions_->size() > kMaxActions) bad("action count must be in [1, 16]");

    if (a_.rows.size() != states_->size()) bad("A needs one row per state");
    for (const auto& row : a_.rows) {
      if (!same_labels(row.label_set(), observations_)) bad("A row labels differ from observations");
    }
    if (!a_.annotations.empty() && a_.annotations.size() != states_->size())
      bad("A annotations need one entry per state");

    if (b_.rows.size() != actions_->size()) bad("B needs one matrix per action");
    for (const auto& matrix : b_.rows) {
      if (matrix.size() != states_->size()) bad("B matrix needs one row per state");
      for (const auto& row : matrix) {
        if (!same_labels(row.label_set(), states_)) bad("B row labels differ from states");
      }
    }
    if (!b_.annotations.empty() && b_.annotations.size() != actions_->size())
      bad("B annotations need one entry per action");

    if (c_.log_pref.size() != observations_->size()) bad("C needs one log-preference per observation");
    for (double v : c_.log_pref) {
      if (!std::isfinite(v)) bad("C log-preferences must be finite");
    }
    if (!(c_.precision > 0.0) || !std::isfinite(c_.precision)) bad("C precision must be positive");
    for (const auto& h : c_.hard_constraints) {
      if (!find_label(*observations_, h)) bad("hard constraint '" + h + "' is not an observation");
    }

    if (!same_labels(d_.dist.label_set(), states_)) bad("D labels differ from states");
  }

  LabelSet states_;
  LabelSet observations_;
  LabelSet actions_;
  LikelihoodModel a_;
  TransitionModel b_;
  PreferenceModel c_;
  PriorBelief d_;
  CategoricalDist preference_dist_;
};

namespace detail {

inline CategoricalDist checked_row(const LabelSet& labels, const std::vector<double>& row,
                                   const std::string& where) {
  if (row.size() != labels->size()) {
    fail(ErrorCode::InvalidModel, where + ": expected " + std::to_string(labels->size()) +
                                      " entries, got " + std::to_string(row.size()));
  }
  double total = 0.0;
  for (double v : row) {
    if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::InvalidModel, where + ": invalid probability");
    total += v;
  }
  if (std::abs(total - 1.0) > kRowSumTolerance) {
    fail(ErrorCode::InvalidModel, where + ": row sums to " + std::to_string(total));
  }
  return {labels, row};
}

}  // namespace detail

inline GenerativeModel build_model(const ModelSpec& spec) {
  auto states = make_labels(spec.states);
  auto observations = make_labels(spec.observations);
  auto actions = make_labels(spec.actions);

  LikelihoodModel a;
  require(spec.a.size() == states->size(), ErrorCode::InvalidModel, "A needs one row per state");
  for (std::size_t s = 0; s < spec.a.size(); ++s) {
    a.rows.push_back(detail::checked_row(observations, spec.a[s], "A[" + spec.states[s] + "]"));
  }
  a.annotations = spec.a_annotations;

  TransitionModel b;
  require(spec.b.size() == actions->size(), ErrorCode::InvalidModel, "B needs one matrix per action");
  for (std::size_t k = 0; k < spec.b.size(); ++k) {
    require(spec.b[k].size() == states->size(), ErrorCode::InvalidModel,
            "B[" + spec.actions[k] + "] needs one row per state");
    std::vector<CategoricalDist> matrix;
    for (std::size_t s = 0; s < spec.b[k].size(); ++s) {
      matrix.push_back(detail::checked_row(states, spec.b[k][s],
                                           "B[" + spec.actions[k] + "][" + spec.states[s] + "]"));
    }
    b.rows.push_back(std::move(matrix));
  }
  b.annotations = spec.b_annotations;

  PriorBelief d{detail::checked_row(states, spec.d, "D"), spec.d_annotations};
  return {states, observations, actions, std::move(a), std::move(b), spec.c, std::move(d)};
}

}  // namespace aif
