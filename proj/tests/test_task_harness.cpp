#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "aif/tasks/arc_lite.hpp"
#include "aif/tasks/metrics.hpp"
#include "aif/tasks/solver.hpp"
#include "aif/tasks/tmaze.hpp"
#include "support/oracles.hpp"

using namespace aif;

namespace {

arc::Grid random_grid(std::mt19937_64& rng, std::size_t max_side = 10) {
  const std::size_t h = 1 + index_draw(rng, max_side);
  const std::size_t w = 1 + index_draw(rng, max_side);
  arc::Grid g(h, arc::Row(w));
  for (auto& row : g) {
    for (int& v : row) v = static_cast<int>(index_draw(rng, 10));
  }
  return g;
}

std::size_t count_type(const std::vector<TraceEvent>& events, const std::string& type) {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [&](const TraceEvent& e) { return e.event_type == type; }));
}

struct ArcRig {
  TraceSink trace;
  Hierarchy hierarchy{trace};
  TabularProvider provider{arc::default_library()};
  arc::ArcSolver solver{hierarchy, provider};
};

struct TmazeRig {
  explicit TmazeRig(tmaze::Params p = {}) {
    hierarchy.add_agent(tmaze::agent_config(), tmaze::make_model(p));
  }
  TraceSink trace;
  Hierarchy hierarchy{trace};
  Agent& agent() { return hierarchy.agent("tmaze"); }
};

}  // namespace

// grids

TEST(Grid, Rotate90ByHand) {
  EXPECT_EQ(arc::rotate90({{1, 0}, {0, 0}}), (arc::Grid{{0, 1}, {0, 0}}));
  EXPECT_EQ(arc::rotate90({{1, 2, 3}}), (arc::Grid{{1}, {2}, {3}}));
}

TEST(Grid, GroupIdentities) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto g = random_grid(rng);
    EXPECT_EQ(arc::reflect_h(arc::reflect_h(g)), g);
    EXPECT_EQ(arc::reflect_v(arc::reflect_v(g)), g);
    EXPECT_EQ(arc::rotate90(arc::rotate90(g)), arc::rotate180(g));
    EXPECT_EQ(arc::rotate180(arc::rotate180(g)), g);
    EXPECT_EQ(arc::reflect_v(arc::reflect_h(g)), arc::rotate180(g));
    const auto t = arc::tile2x2(g);
    EXPECT_EQ(arc::height(t), 2 * arc::height(g));
    EXPECT_EQ(arc::width(t), 2 * arc::width(g));
  }
}

TEST(Grid, ColorMapInference) {
  arc::ColorMap m = arc::identity_map();
  m[1] = 5;
  m[2] = 7;
  const arc::Grid in = {{0, 1}, {2, 1}};
  const std::vector<arc::Pair> pairs = {{in, arc::apply_color_map(in, m)}};
  const auto inferred = arc::infer_color_map(pairs);
  ASSERT_TRUE(inferred.has_value());
  EXPECT_EQ(arc::apply_color_map(in, *inferred), pairs[0].output);
  EXPECT_DOUBLE_EQ(arc::color_map_error(pairs, *inferred), 0.0);
  const std::vector<arc::Pair> clash = {{{{1, 1}}, {{2, 3}}}};
  EXPECT_FALSE(arc::infer_color_map(clash).has_value());
  EXPECT_DOUBLE_EQ(arc::color_map_error(clash, arc::fit_color_map(clash)), 0.5);
}

TEST(Grid, ValidationRejectsBadGrids) {
  EXPECT_THROW(arc::validate_grid({}), Error);
  EXPECT_THROW(arc::validate_grid({{1, 2}, {3}}), Error);
  EXPECT_THROW(arc::validate_grid({{10}}), Error);
  EXPECT_THROW(arc::validate_grid(arc::Grid(11, arc::Row(1, 0))), Error);
}

// generate_tasks

TEST(GenerateTasks, DeterministicPerSeed) {
  for (const auto& f : arc::kFamilies) {
    const auto a = arc::generate_tasks(f, 5, 3);
    const auto b = arc::generate_tasks(f, 5, 3);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].id, b[i].id);
      EXPECT_EQ(a[i].train, b[i].train);
      EXPECT_EQ(a[i].test, b[i].test);
    }
    EXPECT_NE(arc::generate_tasks(f, 1, 4).front().train, a.front().train);
  }
}

TEST(GenerateTasks, CorrectByConstructionAndWithinBounds) {
  for (const auto& f : arc::kFamilies) {
    for (const auto& t : arc::generate_tasks(f, 30, 21)) {
      EXPECT_GE(t.train.size(), 2u);
      EXPECT_FALSE(t.test.empty());
      std::set<int> train_colors;
      for (const auto* set : {&t.train, &t.test}) {
        for (const auto& p : *set) {
          arc::validate_grid(p.input);
          arc::validate_grid(p.output);
          const auto expected = f == "color_map" ? arc::apply_color_map(p.input, *t.color_map)
                                                 : *arc::apply_geometric(f, p.input);
          EXPECT_EQ(p.output, expected);
          const double area = static_cast<double>(arc::height(p.input) * arc::width(p.input));
          const double fill = static_cast<double>(arc::foreground_cells(p.input)) / area;
          EXPECT_GE(fill, 0.3 - 1e-12);
          EXPECT_LE(fill, 0.7 + 1e-12);
        }
      }
      for (const auto& p : t.train) {
        auto c = arc::colors(p.input);
        train_colors.insert(c.begin(), c.end());
      }
      for (const auto& p : t.test) {
        for (int c : arc::colors(p.input)) EXPECT_TRUE(train_colors.count(c));
      }
      for (const auto& other : arc::kFamilies) {
        if (other != f) EXPECT_FALSE(arc::consistent(other, t.train)) << t.id << " also fits " << other;
      }
    }
  }
}

TEST(GenerateTasks, ColorMapHasNoFixedForegroundColor) {
  for (const auto& t : arc::generate_tasks("color_map", 20, 8)) {
    ASSERT_TRUE(t.color_map.has_value());
    EXPECT_EQ((*t.color_map)[0], 0);
    for (const auto& p : t.train) {
      for (int c : arc::colors(p.input)) {
        if (c != 0) EXPECT_NE((*t.color_map)[static_cast<std::size_t>(c)], c);
      }
    }
  }
}

TEST(GenerateTasks, RejectsBadArguments) {
  EXPECT_THROW(arc::generate_tasks("rotate90", 0, 1), Error);
  EXPECT_THROW(arc::generate_tasks("shear", 1, 1), Error);
}

TEST(Features, ProfilesPerFamily) {
  const auto rot = arc::task_features(arc::generate_tasks("rotate90", 1, 2).front().train);
  EXPECT_EQ(rot, (std::vector<double>{1, 1, 1, 0}));
  const auto cm = arc::task_features(arc::generate_tasks("color_map", 1, 2).front().train);
  EXPECT_EQ(cm, (std::vector<double>{1, 1, 0, 1}));
  const auto tile = arc::task_features(arc::generate_tasks("tile2x2", 1, 2).front().train);
  EXPECT_EQ(tile[1], 4.0);
  EXPECT_EQ(tile[0], 0.0);
}

TEST(ArcJson, RoundTripAndSchemaErrors) {
  const auto t = arc::generate_tasks("reflectV", 1, 5).front();
  const auto back = arc::task_from_arc_json(arc::to_arc_json(t), "copy");
  EXPECT_EQ(back.train, t.train);
  EXPECT_EQ(back.test, t.test);
  EXPECT_EQ(back.family, "unknown");
  try {
    arc::task_from_arc_json({{"train", {{{"input", {{1}}}}}}, {"test", nlohmann::json::array()}}, "bad");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
  }
  EXPECT_THROW(arc::task_from_arc_json({{"train", nlohmann::json::array()}}, "bad"), Error);
}

TEST(Library, FragmentsValidateAndWithholdTile) {
  const auto lib = arc::default_library();
  EXPECT_EQ(lib.size(), 5u);
  for (const auto& e : lib) {
    EXPECT_NE(e.id, arc::kWithheldFamily);
    const auto h = arc::checkable({e.id, e.annotation, e.fragment, 0.0});
    ASSERT_TRUE(h.has_value());
    EXPECT_DOUBLE_EQ(h->accuracy, 0.98);
  }
}

TEST(CheckingModel, StructureAndPrior) {
  std::vector<arc::Hypothesis> hs = {{"rotate90", "", 1.0, 0.98}, {"color_map", "", 0.5, 0.98}};
  const auto prior = arc::hypothesis_prior(hs, 0.05, 4.0);
  ASSERT_EQ(prior.size(), 3u);
  EXPECT_NEAR(prior[0] + prior[1] + prior[2], 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(prior[2], 0.05);
  EXPECT_NEAR(prior[0] / prior[1], std::exp(2.0), 1e-12);
  const auto m = arc::checking_model(hs, prior);
  EXPECT_EQ(m.num_states(), 9u);
  EXPECT_EQ(m.num_actions(), 2u);
  // Untested states emit idle; a check matches with the fragment's accuracy when the hypothesis holds.
  EXPECT_EQ(m.a().probability(m.state_index("rotate90|tested:none"), 0), 1.0);
  EXPECT_DOUBLE_EQ(m.a().probability(m.state_index("rotate90|tested:rotate90"), 1), 0.98);
  EXPECT_NEAR(m.a().probability(m.state_index("other|tested:rotate90"), 1), 0.02, 1e-15);
}

// solve_task

TEST(SolveTask, InLibraryRotationSolvedDirectly) {
  ArcRig rig;
  const auto task = arc::generate_tasks("rotate90", 1, 31).front();
  const auto rec = rig.solver.solve(task);
  EXPECT_EQ(rec.status, "solved");
  ASSERT_EQ(rec.predictions.size(), task.test.size());
  for (std::size_t i = 0; i < task.test.size(); ++i) EXPECT_EQ(rec.predictions[i], arc::rotate90(task.test[i].input));
  EXPECT_GE(std::count(rec.pathways.begin(), rec.pathways.end(), "DirectExecution"), 1);
  EXPECT_EQ(rec.f_series.size(), rec.actions.size() + 1);
}

TEST(SolveTask, ColorMapIsDelegatedThenSubcontracted) {
  ArcRig rig;
  const auto tasks = arc::generate_tasks("color_map", 2, 12);
  const auto first = rig.solver.solve(tasks[0]);
  const auto second = rig.solver.solve(tasks[1]);
  EXPECT_EQ(first.status, "solved");
  EXPECT_EQ(second.status, "solved");
  EXPECT_NE(std::find(first.pathways.begin(), first.pathways.end(), "ExploratoryRecruit"), first.pathways.end());
  EXPECT_NE(std::find(second.pathways.begin(), second.pathways.end(), "DirectedSubcontract"), second.pathways.end());
  EXPECT_TRUE(rig.hierarchy.ledger().known("colorist-1"));
}

TEST(SolveTask, WithheldFamilyPostponesOnPlateau) {
  ArcRig rig;
  for (const auto& task : arc::generate_tasks("tile2x2", 5, 9)) {
    const auto rec = rig.solver.solve(task);
    EXPECT_EQ(rec.status, "postponed");
    EXPECT_TRUE(rec.plateau);
    EXPECT_TRUE(rec.predictions.empty());
    EXPECT_TRUE(rig.hierarchy.agent("solver").config().vfe_plateau.detect(rec.f_series));
  }
  EXPECT_EQ(count_type(rig.trace.events(), "Postponed"), 5u);
}

TEST(SolveTask, EmptyGridSolvedTrivially) {
  ArcRig rig;
  arc::GridTask t;
  t.id = "empty";
  t.family = "rotate180";
  const arc::Grid z(3, arc::Row(3, 0));
  t.train = {{z, z}, {z, z}};
  t.test = {{z, z}};
  const auto rec = rig.solver.solve(t);
  EXPECT_EQ(rec.status, "solved");
  EXPECT_TRUE(rec.correct);
}

TEST(SolveTask, SmallBudgetPostponesInsteadOfGuessing) {
  TraceSink trace;
  Hierarchy h(trace);
  TabularProvider provider(arc::default_library());
  arc::SolverSettings s;
  s.max_planning_cycles = 1;
  arc::ArcSolver solver(h, provider, s);
  const auto rec = solver.solve(arc::generate_tasks("reflectV", 1, 4).front());
  EXPECT_EQ(rec.status, "postponed");
  EXPECT_EQ(rec.reason, "planning budget exhausted");
}

TEST(SolveTask, EmptyLibraryHasNoHypothesis) {
  TraceSink trace;
  Hierarchy h(trace);
  TabularProvider provider;
  arc::ArcSolver solver(h, provider);
  try {
    solver.solve(arc::generate_tasks("rotate90", 1, 1).front());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoHypothesis);
  }
}

TEST(SolveTask, BudgetChargesMatchEvaluations) {
  ArcRig rig;
  for (const auto& t : arc::generate_mixed({"rotate90", "color_map", "tile2x2"}, 3, 6)) rig.solver.solve(t);
  const auto m = compute_metrics(rig.trace.events());
  EXPECT_GT(m.efe_evaluations, 0u);
  EXPECT_EQ(m.charged_units, m.efe_evaluations);
  EXPECT_EQ(m.layer0_hash_changes, 0u);
  ASSERT_TRUE(m.interpretability_score.has_value());
  EXPECT_DOUBLE_EQ(*m.interpretability_score, 1.0);
}

// run_tmaze

TEST(RunTmaze, UniformPriorGoesToCueFirst) {
  TmazeRig rig;
  const auto log = tmaze::run_tmaze(rig.hierarchy, "tmaze", {20, 5});
  for (const auto& e : log) EXPECT_EQ(e.first_move, "cue");
  // Oracle: cue-first beats both direct arms strictly.
  const auto spec = tmaze::model_spec();
  const auto g_cue = oracle::brute_force_efe(spec, {"cue", "left"}, spec.d).g;
  EXPECT_LT(g_cue, oracle::brute_force_efe(spec, {"left", "left"}, spec.d).g);
  EXPECT_LT(g_cue, oracle::brute_force_efe(spec, {"right", "right"}, spec.d).g);
}

TEST(RunTmaze, CueIsFollowed) {
  TmazeRig rig;
  std::size_t followed = 0;
  const auto log = tmaze::run_tmaze(rig.hierarchy, "tmaze", {40, 6});
  for (const auto& e : log) followed += (e.second_move == "left") == (e.reward_side == "reward_left");
  // The cue is right 98% of the time, so almost every second move follows the reward side.
  EXPECT_GE(followed, 36u);
}

TEST(RunTmaze, ConfidentPriorGoesStraightLeft) {
  tmaze::Params p;
  p.prior_left = 0.99;
  TmazeRig rig(p);
  const auto log = tmaze::run_tmaze(rig.hierarchy, "tmaze", {10, 5, 0.99});
  for (const auto& e : log) EXPECT_EQ(e.first_move, "left");
  const auto spec = tmaze::model_spec(p);
  EXPECT_LT(oracle::brute_force_efe(spec, {"left", "left"}, spec.d).g,
            oracle::brute_force_efe(spec, {"cue", "left"}, spec.d).g);
}

TEST(RunTmaze, MidEpisodeFlipReversesArmChoice) {
  for (bool flip : {false, true}) {
    TmazeRig rig;
    tmaze::RunOptions opt{1, 3};
    opt.at_tick = [&](Agent& a, std::size_t, std::size_t step) {
      if (flip && step == 1) a.update_preferences(1, tmaze::flip_fragment(), "operator flip", "operator");
    };
    const auto log = tmaze::run_tmaze(rig.hierarchy, "tmaze", opt);
    ASSERT_EQ(log.front().first_move, "cue");
    std::string cue;
    for (const auto& e : rig.trace.events()) {
      if (e.event_type == "Perception" && e.payload.at("observation").get<std::string>().rfind("cue_", 0) == 0) {
        cue = e.payload.at("observation").get<std::string>().substr(4);
      }
    }
    ASSERT_FALSE(cue.empty());
    const std::string opposite = cue == "left" ? "right" : "left";
    EXPECT_EQ(log.front().second_move, flip ? opposite : cue);
  }
}

// compute_metrics

TEST(Metrics, NoUpdatesMeansNoLatencyAndNoDrift) {
  TmazeRig rig;
  tmaze::run_tmaze(rig.hierarchy, "tmaze", {5, 1});
  const auto m = compute_metrics(rig.trace.events());
  EXPECT_FALSE(m.corrigibility_latency.has_value());
  EXPECT_EQ(m.layer0_hash_changes, 0u);
  EXPECT_EQ(m.drift.at("tmaze").at("0").hash_changes, 0u);
  EXPECT_EQ(*m.drift.at("tmaze").at("0").l1, 0.0);
  EXPECT_EQ(m.drift.at("tmaze").size(), 1u);
  EXPECT_EQ(to_json(m).at("corrigibility_latency"), "n/a");
  EXPECT_DOUBLE_EQ(*m.interpretability_score, 1.0);
}

TEST(Metrics, ScriptedFlipHasLatencyOne) {
  tmaze::Params p;
  p.prior_left = 0.99;
  TmazeRig rig(p);
  tmaze::RunOptions opt{6, 2, 0.99};
  opt.at_tick = [](Agent& a, std::size_t episode, std::size_t step) {
    if (episode == 3 && step == 0) a.update_preferences(1, tmaze::flip_fragment(), "operator flip", "operator");
  };
  const auto log = tmaze::run_tmaze(rig.hierarchy, "tmaze", opt);
  EXPECT_EQ(log[2].first_move, "left");
  EXPECT_EQ(log[3].first_move, "right");
  const auto m = compute_metrics(rig.trace.events());
  ASSERT_TRUE(m.corrigibility_latency.has_value());
  EXPECT_EQ(*m.corrigibility_latency, 1u);
  ASSERT_EQ(m.latencies.size(), 1u);
  EXPECT_EQ(m.latencies[0].source, "operator");
  EXPECT_EQ(m.drift.at("tmaze").at("1").hash_changes, 1u);
  EXPECT_DOUBLE_EQ(*m.drift.at("tmaze").at("1").l1, 18.0);
  EXPECT_EQ(m.layer0_hash_changes, 0u);
}

TEST(Metrics, ConstructedTraceCountsCyclesUntilChange) {
  auto ev = [](std::uint64_t seq, std::string type, nlohmann::json payload) {
    return TraceEvent{seq, seq, "a", std::move(type), std::move(payload), "system"};
  };
  auto plan = [](const char* ctx, const char* action) {
    return nlohmann::json{{"cycle", 0}, {"context", ctx}, {"actions", {action}}, {"justification", "none"}};
  };
  const std::vector<TraceEvent> events = {
      ev(1, "PlanSelected", plan("x", "go")),
      ev(2, "PreferenceChanged", {{"layer", 1}, {"before_hash", ""}, {"after_hash", "h"}, {"log_pref", {1.0, -2.0}}}),
      ev(3, "PlanSelected", plan("unseen", "stay")),
      ev(4, "PlanSelected", plan("x", "go")),
      ev(5, "PlanSelected", plan("x", "stay")),
  };
  const auto m = compute_metrics(events);
  ASSERT_TRUE(m.corrigibility_latency.has_value());
  EXPECT_EQ(*m.corrigibility_latency, 2u);
  EXPECT_DOUBLE_EQ(*m.drift.at("a").at("1").l1, 3.0);
  EXPECT_DOUBLE_EQ(*m.interpretability_score, 0.0);
}

TEST(Metrics, ReplayStable) {
  ArcRig rig;
  for (const auto& t : arc::generate_mixed({"reflectH", "tile2x2"}, 2, 3)) rig.solver.solve(t);
  const auto path = (std::filesystem::temp_directory_path() / "aif_metrics_replay.jsonl").string();
  write_trace(path, rig.trace.events());
  const auto a = to_json(compute_metrics(rig.trace.events()));
  const auto b = to_json(compute_metrics(path));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a.dump(), to_json(compute_metrics(path)).dump());
  EXPECT_NE(metrics_table(compute_metrics(path)).find("interpretability_score"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Metrics, MalformedTracesRejected) {
  TraceEvent a{1, 5, "x", "Tick", {{"layer0", nlohmann::json::object()}}, "system"};
  TraceEvent b{1, 5, "x", "Tick", {{"layer0", nlohmann::json::object()}}, "system"};
  TraceEvent c{1, 6, "x", "PlanSelected", {{"cycle", 1}}, "system"};
  for (const auto& events : {std::vector<TraceEvent>{a, b}, std::vector<TraceEvent>{a, c}}) {
    try {
      compute_metrics(events);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedTrace);
    }
  }
}

TEST(Metrics, Layer0TamperingIsCounted) {
  TraceEvent spawn{0, 0, "x", "AgentSpawned", {{"layer0_hash", "aa"}}, "system"};
  TraceEvent t1{1, 1, "system", "Tick", {{"layer0", {{"x", "aa"}}}}, "system"};
  TraceEvent t2{2, 2, "system", "Tick", {{"layer0", {{"x", "bb"}}}}, "system"};
  const auto m = compute_metrics({spawn, t1, t2});
  EXPECT_EQ(m.layer0_hash_changes, 1u);
  EXPECT_FALSE(m.drift.at("x").at("0").l1.has_value());
}
