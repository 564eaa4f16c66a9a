#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aif/core/generative_model.hpp"
#include "aif/core/random.hpp"

namespace aif::tmaze {

inline const std::array<std::string, 4> kLocations = {"start", "cue", "left", "right"};
inline const std::array<std::string, 2> kContexts = {"reward_left", "reward_right"};
inline const std::vector<std::string> kObservations = {"start", "cue_left", "cue_right", "reward",
                                                       "no_reward"};
inline const std::vector<std::string> kActions = {"start", "cue", "left", "right"};

struct Params {
  double cue_accuracy = 0.98;
  /// Probability the rewarded arm pays out (and the other arm does not). Kept below the cue
  /// accuracy so that the cue is the more informative location.
  double reward_reliability = 0.9;
  double reward_pref = 3.0;
  double punishment_pref = -6.0;
  double prior_left = 0.5;
};

inline std::string state_label(std::size_t location, std::size_t context) {
  return kLocations[location] + "|" + kContexts[context];
}

inline std::size_t state_index(std::size_t location, std::size_t context) {
  return location * kContexts.size() + context;
}

/// Emission row for (location, context) over kObservations.
inline std::vector<double> emission(const Params& p, std::size_t location, std::size_t context) {
  std::vector<double> row(kObservations.size(), 0.0);
  switch (location) {
    case 0:
      row[0] = 1.0;
      break;
    case 1:
      row[1] = context == 0 ? p.cue_accuracy : 1.0 - p.cue_accuracy;
      row[2] = 1.0 - row[1];
      break;
    default: {
      const bool rewarded_arm = (location == 2) == (context == 0);
      row[3] = rewarded_arm ? p.reward_reliability : 1.0 - p.reward_reliability;
      row[4] = 1.0 - row[3];
    }
  }
  return row;
}

inline PreferenceModel preferences(const Params& p) {
  PreferenceModel c;
  c.log_pref = {0.0, 0.0, 0.0, p.reward_pref, p.punishment_pref};
  c.annotations = {"Prefer finding the reward.", "Strongly avoid arms that pay nothing."};
  return c;
}

/// Preferences with reward and punishment swapped: the agent now seeks the empty arm.
inline PreferenceModel flipped_preferences(const Params& p) {
  PreferenceModel c;
  c.log_pref = {0.0, 0.0, 0.0, p.punishment_pref, p.reward_pref};
  c.annotations = {"Seek the arm that pays nothing.", "Avoid the reward."};
  return c;
}

inline ModelSpec model_spec(const Params& p = {}) {
  ModelSpec spec;
  for (std::size_t l = 0; l < kLocations.size(); ++l) {
    for (std::size_t c = 0; c < kContexts.size(); ++c) spec.states.push_back(state_label(l, c));
  }
  spec.observations = kObservations;
  spec.actions = kActions;

  for (std::size_t l = 0; l < kLocations.size(); ++l) {
    for (std::size_t c = 0; c < kContexts.size(); ++c) {
      spec.a.push_back(emission(p, l, c));
      std::string text;
      switch (l) {
        case 0: text = "At the start nothing about the reward side is visible."; break;
        case 1:
          text = "The cue points toward " + std::string(c == 0 ? "left" : "right") +
                 " most of the time.";
          break;
        default:
          text = "The " + kLocations[l] + " arm pays out when it is the rewarded side.";
      }
      spec.a_annotations.push_back(std::move(text));
    }
  }

  const std::size_t n = spec.states.size();
  for (std::size_t target = 0; target < kActions.size(); ++target) {
    std::vector<std::vector<double>> matrix(n, std::vector<double>(n, 0.0));
    for (std::size_t l = 0; l < kLocations.size(); ++l) {
      for (std::size_t c = 0; c < kContexts.size(); ++c) {
        // Arms are absorbing; the reward side never changes within an episode.
        const std::size_t next_location = l >= 2 ? l : target;
        matrix[state_index(l, c)][state_index(next_location, c)] = 1.0;
      }
    }
    spec.b.push_back(std::move(matrix));
    spec.b_annotations.push_back("Moving to " + kActions[target] +
                                 " relocates the agent unless it already committed to an arm.");
  }

  spec.c = preferences(p);
  spec.d.assign(n, 0.0);
  spec.d[state_index(0, 0)] = p.prior_left;
  spec.d[state_index(0, 1)] = 1.0 - p.prior_left;
  spec.d_annotations = {"Every episode begins at the start location.",
                        "The reward side is fixed for the whole episode."};
  return spec;
}

inline GenerativeModel make_model(const Params& p = {}) { return build_model(model_spec(p)); }

/// The world: a hidden reward side and the agent's current location.
class Environment {
 public:
  Environment(Params params, std::uint64_t seed) : params_(params), rng_(seed) {}

  /// Starts an episode; `left_probability` is the chance the reward sits on the left.
  void reset(double left_probability = 0.5) {
    context_ = unit_draw(rng_) < left_probability ? 0 : 1;
    location_ = 0;
  }

  void move(const std::string& action) {
    if (location_ >= 2) return;
    for (std::size_t i = 0; i < kActions.size(); ++i) {
      if (kActions[i] == action) location_ = i;
    }
  }

  std::string observe() {
    const auto row = emission(params_, location_, context_);
    const double u = unit_draw(rng_);
    double acc = 0.0;
    for (std::size_t o = 0; o < row.size(); ++o) {
      acc += row[o];
      if (u < acc) return kObservations[o];
    }
    return kObservations.back();
  }

  std::size_t location() const noexcept { return location_; }
  const std::string& reward_side() const { return kContexts[context_]; }

 private:
  Params params_;
  std::mt19937_64 rng_;
  std::size_t context_ = 0;
  std::size_t location_ = 0;
};

}  // namespace aif::tmaze
