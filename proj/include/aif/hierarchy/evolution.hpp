#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/agent/memory.hpp"
#include "aif/core/categorical.hpp"
#include "aif/errors.hpp"

namespace aif {

/// Log-preference given to observations outside a specialist's signature.
inline constexpr double kSignaturePenalty = -2.0;

/// One entry of the alternative-belief library used by paradigm shifts.
struct AlternativeBelief {
  std::string replaces;
  std::string annotation;
  std::map<std::string, double> fragment;
  double precision = 1.0;
};

inline std::vector<AlternativeBelief> default_belief_library() {
  return {{"All transformations preserve object count", "Some operations may merge or split objects", {}, 1.0}};
}

inline AlternativeBelief belief_from_json(const nlohmann::json& j) {
  AlternativeBelief b;
  b.replaces = j.value("replaces", "");
  b.annotation = j.at("annotation").get<std::string>();
  if (j.contains("fragment")) b.fragment = j.at("fragment").get<std::map<std::string, double>>();
  b.precision = j.value("precision", 1.0);
  return b;
}

/// Most frequent annotation; ties go to the lexicographically smallest.
inline std::string majority_annotation(const std::vector<std::string>& annotations) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : annotations) {
    if (!a.empty()) ++counts[a];
  }
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [a, n] : counts) {
    if (n > best_n) {
      best = a;
      best_n = n;
    }
  }
  return best;
}

/// Lower-case alphanumeric prefix of the first word, used in generated ids and topics.
inline std::string role_slug(const std::string& role) {
  std::string out;
  for (char ch : role) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!out.empty()) {
      break;
    }
  }
  return out.empty() ? "specialist" : out;
}

/// Add-one smoothed histogram of final states.
inline std::vector<double> laplace_prior(const std::vector<std::string>& states, const std::vector<const Episode*>& episodes) {
  std::vector<double> counts(states.size(), 1.0);
  for (const Episode* e : episodes) {
    if (auto i = find_label(states, e->final_state)) counts[*i] += 1.0;
  }
  double z = 0.0;
  for (double c : counts) z += c;
  for (double& c : counts) c /= z;
  return counts;
}

/// Zero on every observation the cluster produced, the penalty elsewhere.
inline std::vector<double> signature_fragment(const std::vector<std::string>& observations,
                                              const std::vector<const Episode*>& episodes,
                                              double penalty = kSignaturePenalty) {
  std::set<std::string> seen;
  for (const Episode* e : episodes) seen.insert(e->observations.begin(), e->observations.end());
  std::vector<double> out(observations.size(), penalty);
  for (std::size_t o = 0; o < observations.size(); ++o) {
    if (seen.count(observations[o])) out[o] = 0.0;
  }
  return out;
}

/// (1 - w) * d + w * uniform; full support for any w > 0.
inline std::vector<double> mix_with_uniform(const std::vector<double>& d, double w = 0.5) {
  std::vector<double> out(d.size());
  const double u = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = (1.0 - w) * d[i] + w * u;
  return out;
}

/// Library entry whose `replaces` matches one of the annotations, else the entry at `fallback`.
inline const AlternativeBelief& pick_alternative(const std::vector<AlternativeBelief>& library,
                                                const std::vector<std::string>& annotations, std::size_t fallback) {
  require(!library.empty(), ErrorCode::ConfigError, "the alternative-belief library is empty");
  for (const auto& b : library) {
    if (std::find(annotations.begin(), annotations.end(), b.replaces) != annotations.end()) return b;
  }
  return library[fallback % library.size()];
}

/// Swaps `entry.replaces` for `entry.annotation`, or appends the latter when absent.
inline std::vector<std::string> swap_annotation(std::vector<std::string> annotations, const AlternativeBelief& entry) {
  bool swapped = false;
  for (auto& a : annotations) {
    if (!entry.replaces.empty() && a == entry.replaces) {
      a = entry.annotation;
      swapped = true;
    }
  }
  if (!swapped) annotations.push_back(entry.annotation);
  return annotations;
}

}  // namespace aif
