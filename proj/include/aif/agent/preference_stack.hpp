#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aif/core/generative_model.hpp"
#include "aif/core/serialization.hpp"
#include "aif/errors.hpp"
#include "aif/trace/hash.hpp"

namespace aif {

struct PreferenceLayer {
  PreferenceModel fragment;
  std::string provenance;
};

/// Top-down preference message: a fragment over (a subset of) observation labels and the
/// sender's precision.
struct PreferenceFlow {
  std::map<std::string, double> fragment;
  double precision = 1.0;
  std::string from;
};

inline json to_json(const PreferenceFlow& f) {
  return {{"fragment", f.fragment}, {"precision", f.precision}, {"from", f.from}};
}

inline std::string preference_hash(const PreferenceModel& c) { return content_hash(to_json(c)); }

/// Subtracts log-sum-exp so that exp(values) sums to one.
inline void renormalize_log(std::vector<double>& values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  double z = 0.0;
  for (double v : values) z += std::exp(v - peak);
  const double lse = peak + std::log(z);
  for (double& v : values) v -= lse;
}

/// Layer 0 is fixed at construction and never replaced. Mutable layers contribute
/// precision * log_pref to the effective preferences.
class PreferenceStack {
 public:
  PreferenceStack(PreferenceModel layer0, std::string provenance)
      : layers_{{std::move(layer0), std::move(provenance)}} {
    spawn_hash_ = preference_hash(layers_[0].fragment);
  }

  std::size_t size() const noexcept { return layers_.size(); }
  const PreferenceLayer& layer(std::size_t i) const { return layers_.at(i); }
  const PreferenceModel& layer0() const noexcept { return layers_[0].fragment; }

  /// Hash recorded when the stack was created.
  const std::string& spawn_hash() const noexcept { return spawn_hash_; }
  /// Hash recomputed from the current layer-0 content.
  std::string layer0_hash() const { return preference_hash(layers_[0].fragment); }
  std::string layer_hash(std::size_t i) const { return preference_hash(layers_.at(i).fragment); }

  std::string stack_hash() const {
    json hashes = json::array();
    for (std::size_t i = 0; i < layers_.size(); ++i) hashes.push_back(layer_hash(i));
    return content_hash(hashes);
  }

  /// Replaces layer `index` (or appends when index == size()).
  void set_layer(std::size_t index, PreferenceModel fragment, std::string provenance) {
    if (index == 0) fail(ErrorCode::ImmutableLayer, "layer 0 is immutable");
    require(index <= layers_.size(), ErrorCode::ConfigError,
            "layer " + std::to_string(index) + " would leave a gap in the stack");
    require(fragment.log_pref.size() == layer0().log_pref.size(), ErrorCode::VocabularyMismatch,
            "fragment length does not match the observation vocabulary");
    require(fragment.precision > 0.0 && std::isfinite(fragment.precision), ErrorCode::ConfigError,
            "precision must be positive");
    for (double v : fragment.log_pref) {
      require(std::isfinite(v), ErrorCode::ConfigError, "log preferences must be finite");
    }
    if (index == layers_.size()) {
      layers_.push_back({std::move(fragment), std::move(provenance)});
    } else {
      layers_[index] = {std::move(fragment), std::move(provenance)};
    }
  }

  /// layer0 + sum of mutable layers + precision-scaled parent flow, renormalized in log space.
  /// Hard constraints are the union over layers; nothing can remove a layer-0 constraint.
  PreferenceModel compose(const std::vector<std::string>& observation_labels,
                          const std::optional<PreferenceFlow>& flow = std::nullopt) const {
    PreferenceModel out;
    out.log_pref = layer0().log_pref;
    out.precision = layer0().precision;
    out.hard_constraints = layer0().hard_constraints;
    out.annotations = layer0().annotations;
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      const auto& f = layers_[i].fragment;
      for (std::size_t o = 0; o < out.log_pref.size(); ++o) out.log_pref[o] += f.precision * f.log_pref[o];
      out.hard_constraints.insert(out.hard_constraints.end(), f.hard_constraints.begin(),
                                  f.hard_constraints.end());
      out.annotations.insert(out.annotations.end(), f.annotations.begin(), f.annotations.end());
    }
    if (flow) {
      require(flow->precision >= 0.0 && std::isfinite(flow->precision), ErrorCode::ConfigError,
              "flow precision must be non-negative");
      for (const auto& [label, value] : flow->fragment) {
        auto idx = find_label(observation_labels, label);
        if (!idx) fail(ErrorCode::VocabularyMismatch, "fragment label '" + label + "' is not observable");
        out.log_pref[*idx] += flow->precision * value;
      }
    }
    renormalize_log(out.log_pref);
    std::sort(out.hard_constraints.begin(), out.hard_constraints.end());
    out.hard_constraints.erase(std::unique(out.hard_constraints.begin(), out.hard_constraints.end()),
                               out.hard_constraints.end());
    return out;
  }

 private:
  std::vector<PreferenceLayer> layers_;
  std::string spawn_hash_;
};

}  // namespace aif
