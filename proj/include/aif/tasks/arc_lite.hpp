#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/core/random.hpp"
#include "aif/errors.hpp"
#include "aif/reasoning/tabular_provider.hpp"
#include "aif/tasks/grid.hpp"

namespace aif::arc {

inline const std::vector<std::string> kFamilies = {"rotate90", "rotate180", "reflectH", "reflectV", "color_map", "tile2x2"};

/// Family left out of the default hypothesis library.
inline const std::string kWithheldFamily = "tile2x2";

inline bool is_family(const std::string& f) {
  return std::find(kFamilies.begin(), kFamilies.end(), f) != kFamilies.end();
}

struct GridTask {
  std::string id;
  std::string family;
  std::uint64_t seed = 0;
  std::vector<Pair> train;
  /// Outputs are hidden from the solver and used only for scoring.
  std::vector<Pair> test;
  /// Task-specific parameter of color_map tasks.
  std::optional<ColorMap> color_map;
};

/// Applies a geometric family. color_map needs a mapping and is handled by the caller.
inline std::optional<Grid> apply_geometric(const std::string& family, const Grid& g) {
  if (family == "rotate90") return rotate90(g);
  if (family == "rotate180") return rotate180(g);
  if (family == "reflectH") return reflect_h(g);
  if (family == "reflectV") return reflect_v(g);
  if (family == "tile2x2") return tile2x2(g);
  return std::nullopt;
}

/// Prediction of `family` for `input`, with a color_map mapping inferred from the train pairs.
inline std::optional<Grid> predict(const std::string& family, const std::vector<Pair>& train, const Grid& input) {
  if (family == "color_map") {
    auto m = infer_color_map(train);
    if (!m) return std::nullopt;
    return apply_color_map(input, *m);
  }
  return apply_geometric(family, input);
}

/// True when the family reproduces every train output.
inline bool consistent(const std::string& family, const std::vector<Pair>& train) {
  if (family == "color_map") return infer_color_map(train).has_value();
  for (const auto& p : train) {
    auto out = apply_geometric(family, p.input);
    if (!out || *out != p.output) return false;
  }
  return true;
}

/// [foreground count preserved, output/input area ratio, color histogram preserved, color set changed].
inline std::vector<double> task_features(const std::vector<Pair>& train) {
  bool cells = true, hist = true, changed = false;
  double ratio = 0.0;
  for (const auto& p : train) {
    cells = cells && foreground_cells(p.input) == foreground_cells(p.output);
    hist = hist && histogram(p.input) == histogram(p.output);
    changed = changed || colors(p.input) != colors(p.output);
    ratio += static_cast<double>(height(p.output) * width(p.output)) /
             static_cast<double>(std::max<std::size_t>(1, height(p.input) * width(p.input)));
  }
  if (!train.empty()) ratio /= static_cast<double>(train.size());
  return {cells ? 1.0 : 0.0, ratio, hist ? 1.0 : 0.0, changed ? 1.0 : 0.0};
}

/// The feature profile each family produces on generic inputs.
inline std::vector<double> family_affinity(const std::string& family) {
  if (family == "color_map") return {1.0, 1.0, 0.0, 1.0};
  if (family == "tile2x2") return {0.0, 4.0, 0.0, 0.0};
  return {1.0, 1.0, 1.0, 0.0};
}

inline std::string family_annotation(const std::string& family) {
  if (family == "rotate90") return "The output is the input turned a quarter clockwise.";
  if (family == "rotate180") return "The output is the input turned upside down.";
  if (family == "reflectH") return "The output mirrors the input left to right.";
  if (family == "reflectV") return "The output mirrors the input top to bottom.";
  if (family == "color_map") return "The output recolors each cell by a fixed color substitution.";
  return "The output repeats the input twice across and twice down.";
}

inline std::string test_action(const std::string& family) { return "test_" + family; }

/// Two-state fragment: the hypothesis holds or fails, seen through a noisy check on the train pairs.
inline nlohmann::json hypothesis_fragment(const std::string& family, double accuracy = 0.98) {
  return {{"state_labels", {"holds", "fails"}},
          {"observation_labels", {"match", "mismatch"}},
          {"action_labels", {test_action(family)}},
          {"A", {{accuracy, 1.0 - accuracy}, {1.0 - accuracy, accuracy}}},
          {"B", {{test_action(family), {{1.0, 0.0}, {0.0, 1.0}}}}},
          {"C", {{"log_pref", {1.0, -1.0}}}},
          {"D", {0.5, 0.5}},
          {"annotations", {{"A", {family_annotation(family), "Some train pair disagrees."}},
                           {"D", {"No evidence either way before the check."}}}}};
}

inline std::vector<LibraryEntry> hypothesis_library(const std::vector<std::string>& families) {
  std::vector<LibraryEntry> out;
  for (const auto& f : families) {
    require(is_family(f), ErrorCode::ConfigError, "unknown task family '" + f + "'");
    out.push_back({f, family_annotation(f), family_affinity(f), hypothesis_fragment(f)});
  }
  return out;
}

/// Every family except the withheld one.
inline std::vector<LibraryEntry> default_library() {
  std::vector<std::string> families;
  for (const auto& f : kFamilies) {
    if (f != kWithheldFamily) families.push_back(f);
  }
  return hypothesis_library(families);
}

namespace detail {

inline std::size_t draw_between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + index_draw(rng, hi - lo + 1);
}

/// Random input with 30-70% foreground cells drawn from `palette`.
inline Grid random_input(std::mt19937_64& rng, std::size_t h, std::size_t w, const std::vector<int>& palette) {
  const std::size_t area = h * w;
  const std::size_t lo = (3 * area + 9) / 10;
  const std::size_t hi = (7 * area) / 10;
  const std::size_t n = draw_between(rng, lo, std::max(lo, hi));
  std::vector<std::size_t> cells(area);
  for (std::size_t i = 0; i < area; ++i) cells[i] = i;
  for (std::size_t i = area; i > 1; --i) std::swap(cells[i - 1], cells[index_draw(rng, i)]);
  Grid g(h, Row(w, kBackground));
  for (std::size_t i = 0; i < n; ++i) g[cells[i] / w][cells[i] % w] = palette[index_draw(rng, palette.size())];
  return g;
}

inline std::vector<int> random_palette(std::mt19937_64& rng, std::size_t k) {
  std::vector<int> all = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[index_draw(rng, i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

/// Maps every palette color to a different color, keeping the background.
inline ColorMap random_recoloring(std::mt19937_64& rng, const std::vector<int>& palette) {
  for (;;) {
    std::vector<int> targets = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    for (std::size_t i = targets.size(); i > 1; --i) std::swap(targets[i - 1], targets[index_draw(rng, i)]);
    ColorMap m = identity_map();
    bool fixed_point = false;
    for (std::size_t i = 0; i < palette.size(); ++i) {
      m[static_cast<std::size_t>(palette[i])] = targets[i];
      fixed_point = fixed_point || targets[i] == palette[i];
    }
    if (!fixed_point) return m;
  }
}

/// No other family explains the train pairs, and the test colors were all seen in training.
inline bool unambiguous(const GridTask& t) {
  for (const auto& f : kFamilies) {
    if (f != t.family && consistent(f, t.train)) return false;
  }
  std::set<int> train_colors;
  for (const auto& p : t.train) {
    auto c = colors(p.input);
    train_colors.insert(c.begin(), c.end());
  }
  for (const auto& p : t.test) {
    for (int c : colors(p.input)) {
      if (!train_colors.count(c)) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Correct-by-construction tasks; identical for identical (family, count, seed).
inline std::vector<GridTask> generate_tasks(const std::string& family, std::size_t count, std::uint64_t seed) {
  require(count >= 1, ErrorCode::ConfigError, "count must be at least 1");
  require(is_family(family), ErrorCode::ConfigError, "unknown task family '" + family + "'");
  std::vector<GridTask> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t task_seed = seed * 1000003ULL + i;
    std::mt19937_64 rng(task_seed);
    for (;;) {
      GridTask t;
      t.id = fmt::format("{}-{}-{}", family, seed, i);
      t.family = family;
      t.seed = task_seed;
      const std::size_t max_side = family == "tile2x2" ? kMaxSide / 2 : 6;
      const auto palette = detail::random_palette(rng, detail::draw_between(rng, 2, 4));
      if (family == "color_map") t.color_map = detail::random_recoloring(rng, palette);
      const std::size_t n_train = detail::draw_between(rng, 2, 4);
      for (std::size_t k = 0; k < n_train + 1; ++k) {
        const std::size_t h = detail::draw_between(rng, 2, max_side);
        const std::size_t w = detail::draw_between(rng, 2, max_side);
        Pair p;
        p.input = detail::random_input(rng, h, w, palette);
        p.output = t.color_map ? apply_color_map(p.input, *t.color_map) : *apply_geometric(family, p.input);
        (k < n_train ? t.train : t.test).push_back(std::move(p));
      }
      if (detail::unambiguous(t)) {
        out.push_back(std::move(t));
        break;
      }
    }
  }
  return out;
}

/// `count` tasks from each family in turn, seeds derived from `seed`.
inline std::vector<GridTask> generate_mixed(const std::vector<std::string>& families, std::size_t count,
                                            std::uint64_t seed) {
  std::vector<GridTask> out;
  for (std::size_t i = 0; i < families.size(); ++i) {
    auto batch = generate_tasks(families[i], count, seed + 7919ULL * i);
    for (auto& t : batch) out.push_back(std::move(t));
  }
  return out;
}

inline nlohmann::json pairs_to_json(const std::vector<Pair>& pairs, bool with_outputs = true) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json j = {{"input", p.input}};
    if (with_outputs) j["output"] = p.output;
    out.push_back(std::move(j));
  }
  return out;
}

/// The public two-key ARC layout.
inline nlohmann::json to_arc_json(const GridTask& t) {
  return {{"train", pairs_to_json(t.train)}, {"test", pairs_to_json(t.test)}};
}

/// Reads the public two-key ARC layout. Test outputs are required for scoring.
inline GridTask task_from_arc_json(const nlohmann::json& j, const std::string& id) {
  require(j.is_object() && j.contains("train") && j.contains("test"), ErrorCode::SchemaViolation,
          id + ": ARC task needs 'train' and 'test' lists");
  GridTask t;
  t.id = id;
  t.family = "unknown";
  auto read = [&](const char* key, std::vector<Pair>& into) {
    const auto& list = j.at(key);
    require(list.is_array(), ErrorCode::SchemaViolation, id + ": '" + key + "' must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = fmt::format("{}: {}[{}]", id, key, i);
      require(list[i].is_object() && list[i].contains("input") && list[i].contains("output"), ErrorCode::SchemaViolation,
              where + " needs 'input' and 'output'");
      into.push_back({grid_from_json(list[i].at("input"), kMaxImportSide, where + ".input"),
                      grid_from_json(list[i].at("output"), kMaxImportSide, where + ".output")});
    }
  };
  read("train", t.train);
  read("test", t.test);
  require(t.train.size() >= 1 && !t.test.empty(), ErrorCode::SchemaViolation, id + ": needs train and test pairs");
  return t;
}

}  // namespace aif::arc
