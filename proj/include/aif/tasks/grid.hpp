#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"

namespace aif::arc {

using Row = std::vector<int>;
using Grid = std::vector<Row>;

inline constexpr int kColors = 10;
inline constexpr int kBackground = 0;
inline constexpr std::size_t kMaxSide = 10;
/// Imported ARC grids may be larger than generated ones.
inline constexpr std::size_t kMaxImportSide = 30;

/// Maps every color to a color; index is the input color.
using ColorMap = std::array<int, kColors>;

inline ColorMap identity_map() {
  ColorMap m{};
  for (int c = 0; c < kColors; ++c) m[static_cast<std::size_t>(c)] = c;
  return m;
}

inline std::size_t height(const Grid& g) noexcept { return g.size(); }
inline std::size_t width(const Grid& g) noexcept { return g.empty() ? 0 : g.front().size(); }

/// Rectangular, non-empty, colors 0-9, at most `max_side` per side.
inline void validate_grid(const Grid& g, std::size_t max_side = kMaxSide, const std::string& where = "grid") {
  require(!g.empty() && !g.front().empty(), ErrorCode::SchemaViolation, where + " is empty");
  require(g.size() <= max_side && g.front().size() <= max_side, ErrorCode::SchemaViolation,
          where + " exceeds " + std::to_string(max_side) + " cells per side");
  for (const auto& row : g) {
    require(row.size() == g.front().size(), ErrorCode::SchemaViolation, where + " is not rectangular");
    for (int v : row) require(v >= 0 && v < kColors, ErrorCode::SchemaViolation, where + " has a color outside 0-9");
  }
}

/// Clockwise quarter turn.
inline Grid rotate90(const Grid& g) {
  const std::size_t h = height(g), w = width(g);
  Grid out(w, Row(h, kBackground));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[c][h - 1 - r] = g[r][c];
  }
  return out;
}

inline Grid rotate180(const Grid& g) {
  const std::size_t h = height(g), w = width(g);
  Grid out(h, Row(w, kBackground));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[h - 1 - r][w - 1 - c] = g[r][c];
  }
  return out;
}

/// Mirror across the vertical axis: columns reverse.
inline Grid reflect_h(const Grid& g) {
  Grid out = g;
  for (auto& row : out) std::reverse(row.begin(), row.end());
  return out;
}

/// Mirror across the horizontal axis: rows reverse.
inline Grid reflect_v(const Grid& g) { return Grid(g.rbegin(), g.rend()); }

inline Grid apply_color_map(const Grid& g, const ColorMap& m) {
  Grid out = g;
  for (auto& row : out) {
    for (int& v : row) v = m[static_cast<std::size_t>(v)];
  }
  return out;
}

inline Grid tile2x2(const Grid& g) {
  const std::size_t h = height(g), w = width(g);
  Grid out(2 * h, Row(2 * w, kBackground));
  for (std::size_t r = 0; r < 2 * h; ++r) {
    for (std::size_t c = 0; c < 2 * w; ++c) out[r][c] = g[r % h][c % w];
  }
  return out;
}

inline std::size_t foreground_cells(const Grid& g) {
  std::size_t n = 0;
  for (const auto& row : g) {
    for (int v : row) n += v != kBackground;
  }
  return n;
}

inline std::array<std::size_t, kColors> histogram(const Grid& g) {
  std::array<std::size_t, kColors> h{};
  for (const auto& row : g) {
    for (int v : row) ++h[static_cast<std::size_t>(v)];
  }
  return h;
}

inline std::set<int> colors(const Grid& g) {
  std::set<int> s;
  for (const auto& row : g) s.insert(row.begin(), row.end());
  return s;
}

struct Pair {
  Grid input;
  Grid output;

  friend bool operator==(const Pair&, const Pair&) = default;
};

/// The per-pair color function, when one input color never maps to two output colors.
inline std::optional<ColorMap> infer_color_map(const std::vector<Pair>& pairs) {
  std::array<int, kColors> seen;
  seen.fill(-1);
  for (const auto& p : pairs) {
    if (height(p.input) != height(p.output) || width(p.input) != width(p.output)) return std::nullopt;
    for (std::size_t r = 0; r < height(p.input); ++r) {
      for (std::size_t c = 0; c < width(p.input); ++c) {
        auto& slot = seen[static_cast<std::size_t>(p.input[r][c])];
        if (slot == -1) slot = p.output[r][c];
        if (slot != p.output[r][c]) return std::nullopt;
      }
    }
  }
  ColorMap m = identity_map();
  for (int c = 0; c < kColors; ++c) {
    if (seen[static_cast<std::size_t>(c)] >= 0) m[static_cast<std::size_t>(c)] = seen[static_cast<std::size_t>(c)];
  }
  return m;
}

/// Fraction of output cells a color function cannot reproduce; 1 when shapes differ.
inline double color_map_error(const std::vector<Pair>& pairs, const ColorMap& m) {
  std::size_t wrong = 0, total = 0;
  for (const auto& p : pairs) {
    if (height(p.input) != height(p.output) || width(p.input) != width(p.output)) return 1.0;
    for (std::size_t r = 0; r < height(p.input); ++r) {
      for (std::size_t c = 0; c < width(p.input); ++c) {
        wrong += m[static_cast<std::size_t>(p.input[r][c])] != p.output[r][c];
        ++total;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(total);
}

/// Majority color per input color; the best single color function for noisy pairs.
inline ColorMap fit_color_map(const std::vector<Pair>& pairs) {
  std::array<std::array<std::size_t, kColors>, kColors> votes{};
  for (const auto& p : pairs) {
    if (height(p.input) != height(p.output) || width(p.input) != width(p.output)) continue;
    for (std::size_t r = 0; r < height(p.input); ++r) {
      for (std::size_t c = 0; c < width(p.input); ++c) {
        ++votes[static_cast<std::size_t>(p.input[r][c])][static_cast<std::size_t>(p.output[r][c])];
      }
    }
  }
  ColorMap m = identity_map();
  for (std::size_t from = 0; from < kColors; ++from) {
    std::size_t best = 0;
    for (std::size_t to = 0; to < kColors; ++to) {
      if (votes[from][to] > best) {
        best = votes[from][to];
        m[from] = static_cast<int>(to);
      }
    }
  }
  return m;
}

inline nlohmann::json to_json(const ColorMap& m) {
  nlohmann::json j = nlohmann::json::object();
  for (int c = 0; c < kColors; ++c) {
    if (m[static_cast<std::size_t>(c)] != c) j[std::to_string(c)] = m[static_cast<std::size_t>(c)];
  }
  return j;
}

inline ColorMap color_map_from_json(const nlohmann::json& j) {
  ColorMap m = identity_map();
  require(j.is_object(), ErrorCode::SchemaViolation, "color map must be an object");
  for (const auto& [k, v] : j.items()) {
    const int from = std::stoi(k);
    require(from >= 0 && from < kColors && v.is_number_integer() && v.get<int>() >= 0 && v.get<int>() < kColors,
            ErrorCode::SchemaViolation, "color map entries must be colors 0-9");
    m[static_cast<std::size_t>(from)] = v.get<int>();
  }
  return m;
}

inline Grid grid_from_json(const nlohmann::json& j, std::size_t max_side, const std::string& where) {
  require(j.is_array(), ErrorCode::SchemaViolation, where + " must be an array of rows");
  Grid g;
  for (const auto& row : j) {
    require(row.is_array(), ErrorCode::SchemaViolation, where + " must be an array of rows");
    Row r;
    for (const auto& v : row) {
      require(v.is_number_integer(), ErrorCode::SchemaViolation, where + " cells must be integers");
      r.push_back(v.get<int>());
    }
    g.push_back(std::move(r));
  }
  validate_grid(g, max_side, where);
  return g;
}

/// One row per line, colors as digits, background as '.'.
inline std::string ascii(const Grid& g) {
  std::string out;
  for (const auto& row : g) {
    for (int v : row) out += v == kBackground ? '.' : static_cast<char>('0' + v);
    out += '\n';
  }
  return out;
}

}  // namespace aif::arc
