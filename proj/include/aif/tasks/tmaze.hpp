#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/agent/agent.hpp"
#include "aif/hierarchy/hierarchy.hpp"
#include "aif/tasks/tmaze_model.hpp"

namespace aif::tmaze {

inline constexpr std::size_t kMoves = 2;

struct EpisodeLog {
  std::size_t episode = 0;
  std::string reward_side;
  std::string first_move;
  std::string second_move;
  std::string outcome;
  bool rewarded = false;
};

inline nlohmann::json to_json(const EpisodeLog& e) {
  return {{"episode", e.episode},     {"reward_side", e.reward_side}, {"first_move", e.first_move},
          {"second_move", e.second_move}, {"outcome", e.outcome},         {"rewarded", e.rewarded}};
}

struct RunOptions {
  std::size_t episodes = 1;
  std::uint64_t seed = 0;
  /// Chance the environment hides the reward on the left.
  double reward_left_probability = 0.5;
  /// Called at every tick boundary, before the clock advances. Step kMoves is the final observation.
  std::function<void(Agent&, std::size_t episode, std::size_t step)> at_tick;
};

/// Agent settings for the T-maze: two-move horizon, habits off so every episode is planned.
inline AgentConfig agent_config(std::string id = "tmaze") {
  AgentConfig c;
  c.id = std::move(id);
  c.role = "forager";
  c.horizon = kMoves;
  c.thresholds.habit_similarity = 1.1;
  return c;
}

/// Episodes of perceive, plan, move. The horizon shrinks to the moves remaining.
inline std::vector<EpisodeLog> run_tmaze(Hierarchy& h, const std::string& agent_id, const RunOptions& opt) {
  Agent& agent = h.agent(agent_id);
  Environment env({}, opt.seed);
  std::vector<EpisodeLog> log;
  for (std::size_t n = 0; n < opt.episodes; ++n) {
    env.reset(opt.reward_left_probability);
    agent.reset_belief();
    agent.begin_task(fmt::format("episode-{}", n), {});
    EpisodeLog e;
    e.episode = n;
    e.reward_side = env.reward_side();
    for (std::size_t step = 0; step <= kMoves; ++step) {
      if (opt.at_tick) opt.at_tick(agent, n, step);
      h.tick();
      const std::string obs = env.observe();
      agent.perceive(obs);
      e.outcome = obs;
      if (step == kMoves) break;
      agent.set_horizon(kMoves - step);
      agent.select_mode();
      agent.plan();
      const auto action = agent.next_action();
      const std::string move = action.value_or("noop");
      (step == 0 ? e.first_move : e.second_move) = move;
      if (!action) continue;
      env.move(*action);
      agent.act(*action);
    }
    e.rewarded = e.outcome == "reward";
    agent.consolidate({e.outcome, e.rewarded, "T-maze foraging"});
    h.trace().emit(agent_id, "EpisodeCompleted", to_json(e));
    log.push_back(std::move(e));
  }
  return log;
}

/// Layer-1 fragment that turns the seed preferences into the flipped ones when composed.
inline PreferenceModel flip_fragment(const Params& p = {}) {
  PreferenceModel f;
  const auto seed = preferences(p).log_pref;
  const auto flipped = flipped_preferences(p).log_pref;
  for (std::size_t i = 0; i < seed.size(); ++i) f.log_pref.push_back(flipped[i] - seed[i]);
  f.annotations = {"Operator asks the forager to seek the empty arm."};
  return f;
}

}  // namespace aif::tmaze
