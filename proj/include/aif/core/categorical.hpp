#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "aif/errors.hpp"

namespace aif {

/// Logarithms never see anything smaller than this. The clamped copy is not
/// renormalized.
inline constexpr double kProbabilityFloor = 1e-12;

inline double clamped_log(double p) noexcept {
  return std::log(p < kProbabilityFloor ? kProbabilityFloor : p);
}

/// Shared, immutable label vector. Distributions over the same support share one.
using LabelSet = std::shared_ptr<const std::vector<std::string>>;

inline LabelSet make_labels(std::vector<std::string> labels) {
  require(!labels.empty(), ErrorCode::InvalidDistribution, "label set must be non-empty");
  std::unordered_set<std::string_view> seen;
  for (const auto& l : labels) {
    require(seen.insert(l).second, ErrorCode::InvalidDistribution, "duplicate label '" + l + "'");
  }
  return std::make_shared<const std::vector<std::string>>(std::move(labels));
}

inline std::optional<std::size_t> find_label(const std::vector<std::string>& labels,
                                             std::string_view label) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return std::nullopt;
}

inline bool same_labels(const LabelSet& a, const LabelSet& b) {
  return a == b || (a && b && *a == *b);
}

/// Normalized probability vector over a labelled support.
class CategoricalDist {
 public:
  CategoricalDist(LabelSet labels, std::vector<double> weights)
      : labels_(std::move(labels)), probs_(std::move(weights)) {
    require(labels_ && !labels_->empty(), ErrorCode::InvalidDistribution, "empty support");
    require(labels_->size() == probs_.size(), ErrorCode::InvalidDistribution,
            "label/probability length mismatch");
    double total = 0.0;
    for (double w : probs_) {
      if (!std::isfinite(w) || w < 0.0) {
        fail(ErrorCode::InvalidDistribution, "probabilities must be finite and non-negative");
      }
      total += w;
    }
    require(total > 0.0, ErrorCode::InvalidDistribution, "probabilities sum to zero");
    for (double& w : probs_) w /= total;
  }

  CategoricalDist(std::vector<std::string> labels, std::vector<double> weights)
      : CategoricalDist(make_labels(std::move(labels)), std::move(weights)) {}

  static CategoricalDist uniform(LabelSet labels) {
    std::vector<double> w(labels ? labels->size() : 0, 1.0);
    return {std::move(labels), std::move(w)};
  }

  static CategoricalDist indicator(LabelSet labels, std::size_t index) {
    std::vector<double> w(labels ? labels->size() : 0, 0.0);
    require(index < w.size(), ErrorCode::InvalidDistribution, "indicator index out of range");
    w[index] = 1.0;
    return {std::move(labels), std::move(w)};
  }

  std::size_t size() const noexcept { return probs_.size(); }
  const std::vector<std::string>& labels() const noexcept { return *labels_; }
  const LabelSet& label_set() const noexcept { return labels_; }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }

  std::optional<std::size_t> index_of(std::string_view label) const {
    return find_label(*labels_, label);
  }

  double at(std::string_view label) const {
    auto i = index_of(label);
    if (!i) fail(ErrorCode::UnknownLabel, "unknown label '" + std::string(label) + "'");
    return probs_[*i];
  }

  /// Lowest index wins ties.
  std::size_t argmax() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs_.size(); ++i) {
      if (probs_[i] > probs_[best]) best = i;
    }
    return best;
  }

  bool same_support(const CategoricalDist& other) const {
    return same_labels(labels_, other.labels_);
  }

  friend bool operator==(const CategoricalDist& a, const CategoricalDist& b) {
    return a.same_support(b) && a.probs_ == b.probs_;
  }

 private:
  LabelSet labels_;
  std::vector<double> probs_;
};

/// D_KL[p || q] with clamped logarithms; terms with p == 0 contribute nothing.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (clamped_log(p[i]) - clamped_log(q[i]));
  }
  return kl;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * clamped_log(x);
  }
  return h;
}

}  // namespace aif
