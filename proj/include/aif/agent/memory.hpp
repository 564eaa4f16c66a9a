#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aif/core/free_energy.hpp"
#include "aif/errors.hpp"

namespace aif {

inline constexpr std::size_t kDefaultWorkingCapacity = 32;
inline constexpr std::size_t kDefaultRetrievalK = 5;

struct WorkingEntry {
  std::string observation;
  std::string action;
  FreeEnergyReport report;
};

/// Bounded FIFO of recent evidence.
class WorkingMemory {
 public:
  explicit WorkingMemory(std::size_t capacity = kDefaultWorkingCapacity) : capacity_(capacity) {
    require(capacity_ >= 1, ErrorCode::ConfigError, "working memory capacity must be positive");
  }

  void push(WorkingEntry entry) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(entry));
  }

  /// Records the action taken after the most recent observation.
  void annotate_action(const std::string& action) {
    if (!entries_.empty() && entries_.back().action.empty()) entries_.back().action = action;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::deque<WorkingEntry>& entries() const noexcept { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<WorkingEntry> entries_;
};

struct Episode {
  std::string task_id;
  std::vector<std::string> observations;
  std::vector<std::string> actions;
  std::string outcome;
  double final_f = 0.0;
  std::vector<double> features;
  /// Free-energy series over the episode, used for trend classification.
  std::vector<double> f_series;
  /// Most probable hidden state at the end of the episode.
  std::string final_state;
  /// Short description of what kind of problem this was.
  std::string annotation;
  bool avoid = false;
  bool success = false;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Retrieval {
  std::size_t index = 0;
  double similarity = 0.0;
};

/// Append-only episode store. Retrieval is ordered by descending similarity, then by age.
class EpisodicMemory {
 public:
  explicit EpisodicMemory(std::size_t k = kDefaultRetrievalK) : k_(k) {}

  std::size_t write(Episode e) {
    episodes_.push_back(std::move(e));
    return episodes_.size() - 1;
  }

  std::vector<Retrieval> retrieve(const std::vector<double>& features,
                                  std::optional<std::size_t> k = std::nullopt) const {
    std::vector<Retrieval> hits;
    for (std::size_t i = 0; i < episodes_.size(); ++i) {
      hits.push_back({i, cosine_similarity(features, episodes_[i].features)});
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const Retrieval& a, const Retrieval& b) { return a.similarity > b.similarity; });
    hits.resize(std::min(hits.size(), k.value_or(k_)));
    return hits;
  }

  const Episode& at(std::size_t i) const { return episodes_.at(i); }
  std::size_t size() const noexcept { return episodes_.size(); }
  const std::vector<Episode>& episodes() const noexcept { return episodes_; }
  std::size_t k() const noexcept { return k_; }

 private:
  std::size_t k_;
  std::vector<Episode> episodes_;
};

struct Tool {
  std::string name;
  std::string input_contract;
  std::string output_contract;
  /// The executable reference: an action macro replayed in order.
  std::vector<std::string> actions;
  std::size_t usage_count = 0;
  double mean_f_delta = 0.0;
};

/// Named action macros. Names are unique; usage counts never decrease.
class ProceduralMemory {
 public:
  bool add(Tool tool) {
    if (tools_.count(tool.name)) return false;
    auto name = tool.name;
    tools_.emplace(std::move(name), std::move(tool));
    return true;
  }

  bool has(const std::string& name) const { return tools_.count(name) > 0; }

  const Tool& at(const std::string& name) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) fail(ErrorCode::UnknownLabel, "no tool named '" + name + "'");
    return it->second;
  }

  void record_use(const std::string& name, double f_delta) {
    auto it = tools_.find(name);
    if (it == tools_.end()) fail(ErrorCode::UnknownLabel, "no tool named '" + name + "'");
    Tool& t = it->second;
    ++t.usage_count;
    t.mean_f_delta += (f_delta - t.mean_f_delta) / static_cast<double>(t.usage_count);
  }

  std::size_t size() const noexcept { return tools_.size(); }
  const std::map<std::string, Tool>& tools() const noexcept { return tools_; }

 private:
  std::map<std::string, Tool> tools_;
};

}  // namespace aif
