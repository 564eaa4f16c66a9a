#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace aif {

enum class PlateauTarget { Vfe, Efe };

struct PlateauDetector {
  std::size_t window = 8;
  double epsilon = 0.02;
  PlateauTarget target = PlateauTarget::Vfe;

  /// Range of the last `window` values is within epsilon of their mean magnitude.
  bool detect(std::span<const double> series) const {
    if (window == 0 || series.size() < window) return false;
    auto tail = series.subspan(series.size() - window);
    auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    double mean = 0.0;
    for (double v : tail) mean += v;
    mean /= static_cast<double>(window);
    return *hi - *lo <= epsilon * std::max(std::abs(mean), 1e-6);
  }
};

}  // namespace aif
