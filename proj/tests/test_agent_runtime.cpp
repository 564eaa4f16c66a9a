#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aif/agent/agent.hpp"
#include "aif/tasks/tmaze_model.hpp"
#include "support/oracles.hpp"

using namespace aif;

namespace {

GenerativeModel single_action_model() {
  ModelSpec spec;
  spec.states = {"here", "there"};
  spec.observations = {"seen_here", "seen_there"};
  spec.actions = {"go"};
  spec.a = {{1, 0}, {0, 1}};
  spec.b = {{{0, 1}, {0, 1}}};
  spec.c.log_pref = {0, 1};
  spec.d = {1, 0};
  return build_model(spec);
}

AgentConfig config_for(std::string id, std::size_t horizon = 1) {
  AgentConfig c;
  c.id = std::move(id);
  c.role = "test";
  c.horizon = horizon;
  return c;
}

std::size_t count_events(const TraceSink& t, const std::string& type) {
  std::size_t n = 0;
  for (const auto& e : t.events()) n += e.event_type == type;
  return n;
}

}  // namespace

TEST(WorkingMemory, NeverExceedsCapacityAndEvictsFifo) {
  WorkingMemory wm(4);
  for (int i = 0; i < 50; ++i) {
    wm.push({std::to_string(i), "", {}});
    ASSERT_LE(wm.size(), 4u);
  }
  ASSERT_EQ(wm.size(), 4u);
  EXPECT_EQ(wm.entries().front().observation, "46");
  EXPECT_EQ(wm.entries().back().observation, "49");
}

TEST(EpisodicMemory, RetrievalIsBoundedAndOrdered) {
  EpisodicMemory em(3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t last_size = 0;
  for (int i = 0; i < 20; ++i) {
    Episode e;
    e.task_id = std::to_string(i);
    e.features = {u(rng), u(rng), u(rng)};
    em.write(e);
    ASSERT_GT(em.size(), last_size);
    last_size = em.size();
  }
  const auto hits = em.retrieve({1, 0, 0});
  ASSERT_EQ(hits.size(), 3u);
  for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].similarity, hits[i].similarity);
  EXPECT_NEAR(cosine_similarity({1, 2}, {2, 4}), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity({0, 0}, {1, 0}), 0.0);
}

TEST(ProceduralMemory, NamesUniqueAndUsageMonotone) {
  ProceduralMemory pm;
  EXPECT_TRUE(pm.add({"macro", "in", "out", {"a", "b"}, 0, 0.0}));
  EXPECT_FALSE(pm.add({"macro", "in", "out", {"c"}, 0, 0.0}));
  pm.record_use("macro", -1.0);
  pm.record_use("macro", -3.0);
  EXPECT_EQ(pm.at("macro").usage_count, 2u);
  EXPECT_DOUBLE_EQ(pm.at("macro").mean_f_delta, -2.0);
}

// detect_plateau

TEST(Plateau, ConstantSeriesFires) {
  PlateauDetector d;
  std::vector<double> s(8, 3.5);
  EXPECT_TRUE(d.detect(s));
  s.pop_back();
  EXPECT_FALSE(d.detect(s));
}

TEST(Plateau, SustainedDeclineDoesNot) {
  PlateauDetector d;
  std::vector<double> s;
  double v = 10.0;
  for (int i = 0; i < 40; ++i, v *= 0.9) {
    s.push_back(v);
    EXPECT_FALSE(d.detect(s));
  }
}

TEST(Plateau, FlatTailAfterDrop) {
  PlateauDetector d;
  std::vector<double> s;
  for (int i = 0; i < 10; ++i) s.push_back(5.0 - 0.4 * i);
  for (int i = 0; i < 10; ++i) s.push_back(1.0);
  // Oracle: the window is flat once it covers only the tail.
  for (std::size_t n = 1; n <= s.size(); ++n) {
    const bool expected = n >= 18;  // indices 10..17 are all 1.0
    EXPECT_EQ(d.detect(std::span<const double>(s.data(), n)), expected) << "n=" << n;
  }
}

TEST(Plateau, ZeroSeriesUsesAbsoluteFloor) {
  PlateauDetector d;
  std::vector<double> s(8, 0.0);
  EXPECT_TRUE(d.detect(s));
  s.back() = 1e-6;
  EXPECT_FALSE(d.detect(s));
}

// select_mode

TEST(SelectMode, ThresholdAndPrecedenceRules) {
  ModeInputs in;
  in.last_f = 0.01;
  EXPECT_EQ(select_mode_rule(in), Mode::Perseverative);
  in.last_f = 2.0;
  EXPECT_EQ(select_mode_rule(in), Mode::Deliberative);
  in.last_f = 0.5;
  EXPECT_EQ(select_mode_rule(in), Mode::Deliberative);
  in.similarity = 0.95;
  for (double f : {0.01, 0.5, 2.0}) {
    in.last_f = f;
    EXPECT_EQ(select_mode_rule(in), Mode::Habitual);
  }
  in.preferences_dirty = true;
  EXPECT_EQ(select_mode_rule(in), Mode::Deliberative);
}

TEST(SelectMode, TraceReplayReproducesDecisions) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  tmaze::Environment env({}, 9);
  for (int episode = 0; episode < 20; ++episode) {
    env.reset();
    agent.reset_belief();
    for (int step = 0; step < 3; ++step) {
      trace.set_tick(trace.tick() + 1);
      agent.perceive(env.observe());
      if (step == 2) break;
      agent.set_horizon(2 - step);
      agent.select_mode();
      agent.plan();
      auto a = agent.next_action();
      ASSERT_TRUE(a.has_value());
      env.move(*a);
      agent.act(*a);
    }
  }
  std::size_t checked = 0;
  for (const auto& e : trace.events()) {
    if (e.event_type != "ModeSelected" || e.payload.contains("fallback")) continue;
    ModeInputs in;
    const auto& j = e.payload.at("inputs");
    in.last_f = j.at("last_f");
    in.similarity = j.at("similarity");
    in.preferences_dirty = j.at("preferences_dirty");
    in.thresholds.theta_hi = j.at("theta_hi");
    in.thresholds.theta_lo = j.at("theta_lo");
    in.thresholds.habit_similarity = j.at("habit_similarity");
    EXPECT_EQ(to_string(select_mode_rule(in)), e.payload.at("mode").get<std::string>());
    ++checked;
  }
  EXPECT_EQ(checked, 40u);
}

// perceive

TEST(Perceive, ExpectedObservationHasZeroSurprise) {
  TraceSink trace;
  Agent agent(config_for("a"), single_action_model(), trace);
  int reports = 0;
  agent.set_error_hook([&](const Agent&, const FreeEnergyReport&, bool) { ++reports; });
  trace.set_tick(1);
  const auto r = agent.perceive("seen_here");
  EXPECT_EQ(r.value(), 0.0);
  EXPECT_EQ(reports, 0);
  EXPECT_EQ(agent.working().size(), 1u);
}

TEST(Perceive, SurpriseEqualsNegativeLogEvidence) {
  ModelSpec spec;
  spec.states = {"s0", "s1"};
  spec.observations = {"o0", "o1"};
  spec.actions = {"a"};
  spec.a = {{0.2, 0.8}, {0.2, 0.8}};
  spec.b = {{{1, 0}, {0, 1}}};
  spec.c.log_pref = {0, 0};
  spec.d = {0.3, 0.7};
  TraceSink trace;
  Agent agent(config_for("a"), build_model(spec), trace);
  std::vector<double> reported;
  agent.set_error_hook([&](const Agent&, const FreeEnergyReport& r, bool) { reported.push_back(r.value()); });
  trace.set_tick(1);
  const auto r = agent.perceive("o0");
  EXPECT_NEAR(r.value(), -std::log(0.2), 1e-12);
  EXPECT_NEAR(r.value(), 1.6094379124341003, 1e-12);
  ASSERT_EQ(reported.size(), 1u);
  EXPECT_NEAR(agent.vfe_history().back().second, 1.6094379124341003, 1e-12);
}

TEST(Perceive, ZeroEvidenceKeepsBeliefAndReportsCeiling) {
  ModelSpec spec;
  spec.states = {"s0", "s1"};
  spec.observations = {"o0", "o1"};
  spec.actions = {"a"};
  spec.a = {{1, 0}, {1, 0}};
  spec.b = {{{1, 0}, {0, 1}}};
  spec.c.log_pref = {0, 0};
  spec.d = {0.4, 0.6};
  TraceSink trace;
  Agent agent(config_for("a"), build_model(spec), trace);
  bool zero = false;
  double f = 0.0;
  agent.set_error_hook([&](const Agent&, const FreeEnergyReport& r, bool z) {
    zero = z;
    f = r.value();
  });
  trace.set_tick(1);
  const auto before = agent.belief();
  const auto r = agent.perceive("o1");
  EXPECT_TRUE(zero);
  EXPECT_EQ(f, kSurpriseCeiling);
  EXPECT_EQ(r.value(), kSurpriseCeiling);
  EXPECT_TRUE(agent.belief() == before);
}

TEST(Perceive, TicksMustIncrease) {
  TraceSink trace;
  Agent agent(config_for("a"), single_action_model(), trace);
  trace.set_tick(3);
  agent.perceive("seen_here");
  EXPECT_THROW(agent.perceive("seen_here"), Error);
}

// plan

TEST(Plan, SingleOptionModel) {
  TraceSink trace;
  Agent agent(config_for("a"), single_action_model(), trace);
  trace.set_tick(1);
  agent.perceive("seen_here");
  agent.select_mode();
  const auto r = agent.plan();
  ASSERT_EQ(r.policy.actions, std::vector<std::string>{"go"});
  ASSERT_TRUE(r.predicted_observations.has_value());
  EXPECT_EQ((*r.predicted_observations)[1], 1.0);
}

TEST(Plan, TMazeSelectsCueFirst) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  trace.set_tick(1);
  agent.perceive("start");
  agent.select_mode();
  auto r = agent.plan();
  ASSERT_EQ(r.mode, Mode::Deliberative);
  EXPECT_EQ(r.policy.actions.front(), "cue");
  EXPECT_NEAR(r.ranking.front().g, 5.088411227381936, 1e-9);
}

TEST(Plan, BudgetExhaustionPostpones) {
  ModelSpec spec;
  spec.states = {"s"};
  spec.observations = {"o"};
  spec.actions = {"a", "b"};
  spec.a = {{1.0}};
  spec.b = {{{1.0}}, {{1.0}}};
  spec.c.log_pref = {0.0};
  spec.d = {1.0};
  auto cfg = config_for("a", 2);
  cfg.max_reasoning_units = 2;
  TraceSink trace;
  Agent agent(cfg, build_model(spec), trace);
  trace.set_tick(1);
  agent.perceive("o");
  agent.select_mode();
  const auto r = agent.plan();
  EXPECT_TRUE(r.postponed);
  EXPECT_TRUE(r.policy.is_noop());
  EXPECT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(count_events(trace, "EfeEvaluated"), 2u);
  EXPECT_EQ(count_events(trace, "Postponed"), 1u);
  EXPECT_EQ(agent.budget().reasoning_units, 2u);
}

TEST(Plan, BudgetChargesMatchEvaluations) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  tmaze::Environment env({}, 3);
  for (int episode = 0; episode < 10; ++episode) {
    env.reset();
    agent.reset_belief();
    agent.begin_task("ep" + std::to_string(episode), {});
    for (int step = 0; step < 2; ++step) {
      trace.set_tick(trace.tick() + 1);
      agent.perceive(env.observe());
      agent.set_horizon(2 - step);
      agent.select_mode();
      agent.plan();
      auto a = agent.next_action();
      env.move(*a);
      agent.act(*a);
    }
  }
  std::uint64_t charged = 0;
  std::uint64_t evaluated = 0;
  for (const auto& e : trace.events()) {
    if (e.event_type == "BudgetCharged") charged += e.payload.at("units").get<std::uint64_t>();
    if (e.event_type == "EfeEvaluated") ++evaluated;
  }
  EXPECT_EQ(charged, evaluated);
  EXPECT_EQ(charged, agent.budget().lifetime_units);
}

TEST(Plan, PerseverativeContinuesCommittedPlan) {
  TraceSink trace;
  Agent agent(config_for("a", 2), single_action_model(), trace);
  trace.set_tick(1);
  agent.perceive("seen_here");
  ASSERT_EQ(agent.select_mode(), Mode::Perseverative);
  auto first = agent.plan();
  ASSERT_EQ(first.mode, Mode::Deliberative);  // nothing committed yet
  agent.act(*agent.next_action());
  trace.set_tick(2);
  agent.perceive("seen_there");
  ASSERT_EQ(agent.select_mode(), Mode::Perseverative);
  auto second = agent.plan();
  EXPECT_EQ(second.mode, Mode::Perseverative);
  EXPECT_EQ(second.policy.actions, std::vector<std::string>{"go"});
}

// update_preferences

TEST(UpdatePreferences, LayerZeroIsImmutable) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  const auto stack_hash = agent.stack().stack_hash();
  const auto layer0 = agent.stack().layer0_hash();
  try {
    agent.update_preferences(0, tmaze::flipped_preferences({}), "operator", "operator");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImmutableLayer);
  }
  EXPECT_EQ(agent.stack().stack_hash(), stack_hash);
  EXPECT_EQ(agent.stack().layer0_hash(), layer0);
  EXPECT_EQ(agent.stack().spawn_hash(), layer0);
  EXPECT_EQ(count_events(trace, "PreferenceWriteRejected"), 1u);
  EXPECT_EQ(trace.events().back().source, "operator");
}

TEST(UpdatePreferences, FlipChangesArmChoice) {
  tmaze::Params p;
  p.prior_left = 0.99;
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(p), trace);
  trace.set_tick(1);
  agent.perceive("start");
  agent.select_mode();
  auto before = agent.plan();
  EXPECT_EQ(before.policy.actions.front(), "left");
  EXPECT_NEAR(before.ranking.front().g, 2.188166676342553, 1e-9);

  // Layer 1 = flipped - seed, so the composed preferences equal the flipped C.
  PreferenceModel fragment;
  const auto seed = tmaze::preferences(p).log_pref;
  const auto flipped = tmaze::flipped_preferences(p).log_pref;
  for (std::size_t i = 0; i < seed.size(); ++i) fragment.log_pref.push_back(flipped[i] - seed[i]);
  agent.update_preferences(1, fragment, "operator flip", "operator");
  agent.reset_belief();
  trace.set_tick(2);
  agent.perceive("start");
  EXPECT_EQ(agent.select_mode(), Mode::Deliberative);
  auto after = agent.plan();
  EXPECT_EQ(after.policy.actions.front(), "right");
  EXPECT_NEAR(after.ranking.front().g, 2.188166676342553, 1e-9);
}

TEST(UpdatePreferences, IdenticalRewriteStillLogged) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  PreferenceModel fragment;
  fragment.log_pref = {0, 0, 0, 1, -1};
  agent.update_preferences(1, fragment, "op");
  const auto c1 = agent.model().c().log_pref;
  const auto h1 = agent.stack().stack_hash();
  agent.update_preferences(1, fragment, "op");
  EXPECT_EQ(agent.model().c().log_pref, c1);
  EXPECT_EQ(agent.stack().stack_hash(), h1);
  EXPECT_EQ(count_events(trace, "PreferenceChanged"), 2u);
}

TEST(UpdatePreferences, WrongLengthFragmentRejected) {
  TraceSink trace;
  Agent agent(config_for("a", 2), tmaze::make_model(), trace);
  PreferenceModel fragment;
  fragment.log_pref = {1.0};
  EXPECT_THROW(agent.update_preferences(1, fragment, "op"), Error);
}

// consolidate

TEST(Consolidate, RecurringSubsequenceBecomesTool) {
  ModelSpec spec;
  spec.states = {"s"};
  spec.observations = {"o"};
  spec.actions = {"rotate", "verify", "wait"};
  spec.a = {{1.0}};
  spec.b = {{{1.0}}, {{1.0}}, {{1.0}}};
  spec.c.log_pref = {0.0};
  spec.d = {1.0};
  TraceSink trace;
  Agent agent(config_for("a"), build_model(spec), trace);
  const std::vector<std::vector<std::string>> runs = {
      {"wait", "rotate", "verify"}, {"rotate", "verify"}, {"rotate", "verify", "wait"}};
  std::uint64_t tick = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    agent.begin_task("t" + std::to_string(i), {1.0});
    trace.set_tick(++tick);
    agent.perceive("o");
    for (const auto& a : runs[i]) agent.act(a);
    const auto r = agent.consolidate({"solved", true, ""});
    if (i < 2) EXPECT_TRUE(r.tools_registered.empty());
    if (i == 2) EXPECT_EQ(r.tools_registered, std::vector<std::string>{"macro:rotate>verify"});
  }
  EXPECT_EQ(agent.procedural().at("macro:rotate>verify").usage_count, 0u);
  EXPECT_TRUE(agent.is_native("macro:rotate>verify"));
}

TEST(Consolidate, RisingFreeEnergyFlagsAvoidance) {
  ModelSpec spec;
  spec.states = {"s0", "s1"};
  spec.observations = {"o0", "o1"};
  spec.actions = {"a"};
  spec.a = {{0.9, 0.1}, {0.1, 0.9}};
  spec.b = {{{0.5, 0.5}, {0.5, 0.5}}};
  spec.c.log_pref = {0, 0};
  spec.d = {0.9, 0.1};
  TraceSink trace;
  Agent agent(config_for("a"), build_model(spec), trace);
  agent.begin_task("rising", {1.0});
  trace.set_tick(1);
  agent.perceive("o0");
  agent.act("a");
  trace.set_tick(2);
  agent.perceive("o1");
  const auto slope_input = std::vector<double>{agent.vfe_history()[0].second, agent.vfe_history()[1].second};
  ASSERT_LT(slope_input[0], slope_input[1]);
  const auto r = agent.consolidate({"failed", false, ""});
  EXPECT_TRUE(r.written);
  EXPECT_TRUE(r.avoid);
  EXPECT_TRUE(agent.episodic().at(0).avoid);
}

TEST(Consolidate, EmptyEpisodeWritesNothing) {
  TraceSink trace;
  Agent agent(config_for("a"), single_action_model(), trace);
  agent.begin_task("empty", {});
  const auto r = agent.consolidate({"none", false, ""});
  EXPECT_FALSE(r.written);
  EXPECT_EQ(agent.episodic().size(), 0u);
}

TEST(Habit, ReplaysMatchingEpisodeOncePerTask) {
  ModelSpec spec;
  spec.states = {"s"};
  spec.observations = {"o"};
  spec.actions = {"x", "y"};
  spec.a = {{1.0}};
  spec.b = {{{1.0}}, {{1.0}}};
  spec.c.log_pref = {0.0};
  spec.d = {1.0};
  TraceSink trace;
  Agent agent(config_for("a"), build_model(spec), trace);
  agent.begin_task("first", {1.0, 0.0});
  trace.set_tick(1);
  agent.perceive("o");
  agent.act("y");
  agent.act("x");
  agent.consolidate({"solved", true, ""});

  agent.begin_task("second", {0.99, 0.05});
  trace.set_tick(2);
  agent.perceive("o");
  ASSERT_EQ(agent.select_mode(), Mode::Habitual);
  auto r = agent.plan();
  EXPECT_EQ(r.mode, Mode::Habitual);
  EXPECT_EQ(r.policy.actions, (std::vector<std::string>{"y", "x"}));
  agent.next_action();
  agent.next_action();
  trace.set_tick(3);
  agent.perceive("o");
  EXPECT_NE(agent.select_mode(), Mode::Habitual);
}

// preference stack

TEST(PreferenceStack, LayerZeroHashStableUnderMutableWrites) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3, 3);
  PreferenceModel seed;
  seed.log_pref = {0, 1, 2};
  seed.hard_constraints = {"c"};
  PreferenceStack stack(seed, "seed");
  const auto h = stack.layer0_hash();
  for (int i = 0; i < 1000; ++i) {
    PreferenceModel f;
    f.log_pref = {u(rng), u(rng), u(rng)};
    stack.set_layer(1 + i % 3 > stack.size() ? stack.size() : 1 + i % 3, f, "p");
    ASSERT_EQ(stack.layer0_hash(), h);
    const auto composed = stack.compose({"a", "b", "c"});
    ASSERT_TRUE(composed.forbids("c"));
    double z = 0.0;
    for (double v : composed.log_pref) z += std::exp(v);
    ASSERT_NEAR(z, 1.0, 1e-12);
  }
  EXPECT_THROW(stack.set_layer(0, seed, "x"), Error);
  EXPECT_EQ(stack.layer0_hash(), h);
}
