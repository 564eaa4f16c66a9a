#pragma once

#include <cstdint>

namespace aif {

/// Per-task thermostat. Counters never pass their limits.
struct ComplexityBudget {
  std::uint64_t max_planning_cycles = 64;
  std::uint64_t max_reasoning_units = 4096;
  std::uint64_t planning_cycles = 0;
  std::uint64_t reasoning_units = 0;
  /// Units charged across every task; never reset.
  std::uint64_t lifetime_units = 0;

  bool can_plan() const noexcept { return planning_cycles < max_planning_cycles; }

  void start_cycle() noexcept { ++planning_cycles; }

  bool try_charge(std::uint64_t units) noexcept {
    if (reasoning_units + units > max_reasoning_units) return false;
    reasoning_units += units;
    lifetime_units += units;
    return true;
  }

  void reset() noexcept {
    planning_cycles = 0;
    reasoning_units = 0;
  }
};

}  // namespace aif
