#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "aif/core/random.hpp"
#include "aif/errors.hpp"

namespace aif {

struct Clustering {
  std::vector<std::size_t> assignment;
  std::vector<std::vector<double>> centroids;
  std::size_t iterations = 0;
};

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace detail

/// Lloyd iterations from a seeded k-means++ start. Same points and seed, same result.
inline Clustering kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                         std::size_t max_iterations = 100) {
  require(k >= 1, ErrorCode::ConfigError, "k must be at least 1");
  require(points.size() >= k, ErrorCode::InsufficientEpisodes, "fewer points than clusters");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) require(p.size() == dim, ErrorCode::ConfigError, "feature vectors differ in length");

  std::mt19937_64 rng(seed);
  Clustering c;
  c.centroids.push_back(points[index_draw(rng, points.size())]);
  std::vector<double> d2(points.size());
  while (c.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& m : c.centroids) d2[i] = std::min(d2[i], detail::squared_distance(points[i], m));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = index_draw(rng, points.size());
    } else {
      double u = unit_draw(rng) * total;
      for (pick = 0; pick + 1 < points.size(); ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
    }
    c.centroids.push_back(points[pick]);
  }

  c.assignment.assign(points.size(), 0);
  for (c.iterations = 0; c.iterations < max_iterations; ++c.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_d = detail::squared_distance(points[i], c.centroids[0]);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = detail::squared_distance(points[i], c.centroids[j]);
        if (d < best_d) {
          best = j;
          best_d = d;
        }
      }
      if (c.iterations == 0 || c.assignment[i] != best) changed = true;
      c.assignment[i] = best;
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[c.assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[c.assignment[i]][d] += points[i][d];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) c.centroids[j][d] = sums[j][d] / static_cast<double>(counts[j]);
    }
  }
  return c;
}

}  // namespace aif
