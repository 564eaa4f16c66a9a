#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "aif/errors.hpp"

namespace aif {

inline constexpr double kDefaultEwmaDecay = 0.9;

struct Reputation {
  double ewma = 0.0;
  std::uint64_t tasks = 0;
  std::uint64_t last_tick = 0;
};

/// Exponentially weighted VFE per agent. The first report initializes the average.
class ReputationLedger {
 public:
  explicit ReputationLedger(double decay = kDefaultEwmaDecay) : decay_(decay) {
    require(decay >= 0.0 && decay < 1.0, ErrorCode::ConfigError, "EWMA decay must lie in [0, 1)");
  }

  /// ewma' = decay * ewma + (1 - decay) * f.
  static double step(std::optional<double> previous, double f, double decay) {
    return previous ? decay * *previous + (1.0 - decay) * f : f;
  }

  const Reputation& record(const std::string& agent, double f, std::uint64_t tick) {
    require(f >= 0.0, ErrorCode::SchemaViolation, "reported free energy must be non-negative");
    auto it = entries_.find(agent);
    std::optional<double> prev;
    if (it != entries_.end()) prev = it->second.ewma;
    Reputation& r = entries_[agent];
    r.ewma = step(prev, f, decay_);
    ++r.tasks;
    r.last_tick = tick;
    return r;
  }

  bool known(const std::string& agent) const { return entries_.count(agent) > 0; }

  std::optional<double> ewma(const std::string& agent) const {
    auto it = entries_.find(agent);
    if (it == entries_.end()) return std::nullopt;
    return it->second.ewma;
  }

  const std::map<std::string, Reputation>& entries() const noexcept { return entries_; }
  double decay() const noexcept { return decay_; }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, r] : entries_) j[id] = {{"ewma", r.ewma}, {"tasks", r.tasks}, {"last_tick", r.last_tick}};
    return j;
  }

 private:
  double decay_;
  std::map<std::string, Reputation> entries_;
};

}  // namespace aif
