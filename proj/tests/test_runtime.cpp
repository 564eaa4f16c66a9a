#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "aif/runtime/audit.hpp"
#include "aif/runtime/config.hpp"
#include "aif/runtime/experiment.hpp"
#include "aif/runtime/plot.hpp"
#include "aif/runtime/server.hpp"
#include "support/fixtures.hpp"

using namespace aif;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / "aif_runtime_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::trunc) << text;
  return p;
}

std::size_t lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += !l.empty();
  return n;
}

RunConfig config(const std::string& scenario, const fs::path& out, std::uint64_t seed = 7) {
  RunConfig c;
  c.scenario = scenario;
  c.seed = seed;
  c.output_dir = out.string();
  return c;
}

/// Message of the ConfigError raised by `f`; fails the test when nothing is raised.
template <class F>
std::string config_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected ConfigError";
  return {};
}

nlohmann::json random_json(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> kind(0, depth > 0 ? 5 : 3);
  switch (kind(rng)) {
    case 0: return static_cast<int>(rng() % 100);
    case 1: return "s" + std::to_string(rng() % 10);
    case 2: return nullptr;
    case 3: return rng() % 2 == 0;
    case 4: {
      nlohmann::json a = nlohmann::json::array();
      for (std::size_t i = 0, n = rng() % 4; i < n; ++i) a.push_back(random_json(rng, depth - 1));
      return a;
    }
    default: {
      nlohmann::json o = nlohmann::json::object();
      for (std::size_t i = 0, n = rng() % 4; i < n; ++i) o["k/" + std::to_string(rng() % 20)] = random_json(rng, depth - 1);
      return o;
    }
  }
}

void collect_pointers(const nlohmann::json& j, const std::string& at, std::vector<std::string>& out) {
  out.push_back(at);
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      std::string key;
      for (char c : k) key += c == '/' ? std::string("~1") : std::string(1, c);
      collect_pointers(v, at + "/" + key, out);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) collect_pointers(j[i], at + "/" + std::to_string(i), out);
  }
}

}  // namespace

// configuration

TEST(JsonDocument, LinesMatchPrettyPrintedPositions) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    nlohmann::json j = nlohmann::json::object();
    j["root"] = random_json(rng, 4);
    const std::string text = j.dump(2);
    const JsonDocument doc("mem", text);
    std::vector<std::string> pointers;
    collect_pointers(j, "", pointers);
    // Oracle: in the two-space dump every value after the root starts on its own line, found
    // by rendering the document with that value replaced by a unique marker.
    for (const auto& p : pointers) {
      if (p.empty()) continue;
      nlohmann::json marked = j;
      marked[nlohmann::json::json_pointer(p)] = "@@marker@@";
      const std::string m = marked.dump(2);
      const auto pos = m.find("\"@@marker@@\"");
      std::size_t line = 1;
      for (std::size_t i = 0; i < pos; ++i) line += m[i] == '\n';
      ASSERT_EQ(doc.line(p), line) << p << "\n" << text;
    }
  }
}

TEST(RunConfig, LoadsAndRejectsWithLineAndField) {
  const auto dir = scratch("config");
  const auto good = write(dir / "good.json", "{\n  \"scenario\": \"arclite\",\n  \"count\": 12,\n  \"seed\": 4\n}\n");
  const auto c = load_run_config(good.string());
  EXPECT_EQ(c.scenario, "arclite");
  EXPECT_EQ(c.count, 12u);
  EXPECT_EQ(c.seed, 4u);

  auto msg = config_error([&] { load_run_config(write(dir / "a.json", "{\n  \"seed\": 1,\n  \"sead\": 2\n}\n").string()); });
  EXPECT_NE(msg.find("a.json:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/sead"), std::string::npos) << msg;

  msg = config_error([&] { load_run_config(write(dir / "b.json", "{\n  \"seed\": -1\n}\n").string()); });
  EXPECT_NE(msg.find("b.json:2"), std::string::npos) << msg;

  msg = config_error([&] { load_run_config(write(dir / "c.json", "{\n\n  \"scenario\": \"maze\"\n}\n").string()); });
  EXPECT_NE(msg.find("c.json:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/scenario"), std::string::npos) << msg;

  msg = config_error([&] { load_run_config(write(dir / "d.json", "{\n  \"seed\": 1,\n  \"count\": }\n").string()); });
  EXPECT_NE(msg.find("d.json:3"), std::string::npos) << msg;
}

TEST(Topology, InvalidDocumentsNameLineAndField) {
  const auto dir = scratch("topology");
  const std::string agents_head = "{\n  \"agents\": [\n    {\"id\": \"root\", \"model\": \"builtin:tmaze\"},\n";
  struct Case {
    std::string body;
    std::size_t line;
    std::string field;
  };
  const std::vector<Case> cases = {
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"ghost\", \"model\": \"builtin:tmaze\"}\n  ]\n}\n", 4,
       "/agents/1/parent"},
      {agents_head + "    {\"id\": \"root\", \"parent\": \"root\", \"model\": \"builtin:tmaze\"}\n  ]\n}\n", 4,
       "/agents/1/id"},
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"root\",\n     \"model\": \"missing.json\"}\n  ]\n}\n", 5,
       "/agents/1/model"},
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"root\", \"model\": \"builtin:tmaze\", \"horizon\": 9}\n  ]\n}\n", 4,
       "/agents/1/horizon"},
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"root\", \"model\": \"builtin:tmaze\",\n"
                     "     \"native_actions\": [\"fly\"]}\n  ]\n}\n",
       5, "/agents/1/native_actions/0"},
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"root\", \"model\": \"builtin:tmaze\"}\n  ],\n"
                     "  \"topics\": [\n    {\"name\": \"t\", \"owner\": \"root\", \"subscribers\": [\"kid\", \"nobody\"]}\n  ]\n}\n",
       7, "/topics/0/subscribers/1"},
      {agents_head + "    {\"id\": \"kid\", \"parent\": \"root\", \"model\": \"builtin:tmaze\"}\n  ],\n"
                     "  \"action_topics\": {\n    \"cue\": \"nowhere\"\n  }\n}\n",
       7, "/action_topics/cue"},
      {"{\n  \"agents\": [],\n  \"extra\": 1\n}\n", 3, "/extra"},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto path = write(dir / ("t" + std::to_string(i) + ".json"), cases[i].body);
    const auto msg = config_error([&] { load_topology(path.string()); });
    EXPECT_NE(msg.find(path.string() + ":" + std::to_string(cases[i].line) + ":"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'" + cases[i].field + "'"), std::string::npos) << msg;
  }
}

TEST(Topology, BuildsTheDeclaredHierarchy) {
  const auto dir = scratch("topology_ok");
  const auto path = write(dir / "t.json", R"({
  "agents": [
    {"id": "lead", "model": "builtin:tmaze", "horizon": 2, "thresholds": {"theta_hi": 2.5}},
    {"id": "scout", "parent": "lead", "model": "builtin:tmaze", "budgets": {"max_reasoning_units": 17}}
  ],
  "topics": [{"name": "maps", "owner": "lead", "subscribers": ["scout"]}],
  "action_topics": {"cue": "maps"}
})");
  const auto t = load_topology(path.string());
  TraceSink trace;
  Hierarchy h(trace);
  build_hierarchy(h, t);
  EXPECT_EQ(h.agent("scout").parent(), "lead");
  EXPECT_EQ(h.agent("lead").config().horizon, 2u);
  EXPECT_DOUBLE_EQ(h.agent("lead").config().thresholds.theta_hi, 2.5);
  EXPECT_EQ(h.agent("scout").config().max_reasoning_units, 17u);
  EXPECT_TRUE(h.topology().same_topic("lead", "scout", "maps"));
  EXPECT_EQ(h.settings().action_topics.at("cue"), "maps");
}

// run_experiment

TEST(RunExperiment, TmazeTracesAreByteIdentical) {
  const auto a = run_experiment(config("tmaze", scratch("repro_a")));
  const auto b = run_experiment(config("tmaze", scratch("repro_b")));
  const auto c = run_experiment(config("tmaze", scratch("repro_c"), 8));
  EXPECT_EQ(a.exit_status, 0);
  EXPECT_EQ(slurp(a.trace_path), slurp(b.trace_path));
  EXPECT_NE(slurp(a.trace_path), slurp(c.trace_path));
  EXPECT_GT(lines(a.trace_path), 100u);
}

TEST(RunExperiment, ArcliteWritesOneRecordPerTask) {
  const auto out = scratch("arclite50");
  auto c = config("arclite", out);
  c.count = 50;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.exit_status, 0);
  EXPECT_EQ(lines(out / "records.jsonl"), 50u);
  for (const char* f : {"trace.jsonl", "metrics.json", "metrics.txt", "summary.json", "memory.json", "audit.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
  EXPECT_EQ(metrics.at("budget").at("charged_units"), metrics.at("budget").at("efe_evaluations"));
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary.at("results").at("tasks"), 50);
  EXPECT_EQ(summary.at("results").at("wrong"), 0);
}

TEST(RunExperiment, RoundRobinAssignsFamiliesInTurn) {
  const auto tasks = round_robin_tasks({"rotate90", "color_map", "tile2x2"}, 7, 2);
  ASSERT_EQ(tasks.size(), 7u);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    EXPECT_EQ(tasks[i].family, (std::vector<std::string>{"rotate90", "color_map", "tile2x2"})[i % 3]);
  }
}

TEST(RunExperiment, CorrigibilityScenarioHasLatencyOne) {
  const auto r = run_experiment(config("corrigibility", scratch("corrigibility")));
  ASSERT_TRUE(r.metrics.corrigibility_latency.has_value());
  EXPECT_EQ(*r.metrics.corrigibility_latency, 1u);
  EXPECT_EQ(r.metrics.layer0_hash_changes, 0u);
  EXPECT_TRUE(r.audit.clean());
}

TEST(RunExperiment, TopologyDrivenRunMatchesSamples) {
  const fs::path samples = fs::path(AIF_SOURCE_DIR) / "samples";
  auto c = load_run_config((samples / "arclite_run.json").string());
  c.output_dir = scratch("sample_arclite").string();
  c.count = 12;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.exit_status, 0);
  EXPECT_EQ(r.records, 12u);
  auto t = load_run_config((samples / "tmaze_run.json").string());
  t.output_dir = scratch("sample_tmaze").string();
  t.episodes = 4;
  EXPECT_EQ(run_experiment(t).exit_status, 0);
}

TEST(RunExperiment, UnreachableExternalProviderDegradesToTabularPerTask) {
  auto c = config("arclite", scratch("external_down"));
  c.provider = "external";
  c.provider_config = {{"endpoint", "http://127.0.0.1:9"}, {"timeout_seconds", 1}};
  c.families = {"rotate90", "reflectH"};
  c.count = 4;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.exit_status, 0);
  std::size_t fallbacks = 0;
  for (const auto& e : read_trace(r.trace_path)) fallbacks += e.event_type == "ProviderFallback";
  EXPECT_EQ(fallbacks, 4u);
  EXPECT_EQ(r.summary.at("results").at("solved"), 4);
}

// audit

TEST(Audit, CleanRunsHaveNoViolations) {
  for (const char* scenario : {"tmaze", "corrigibility", "arclite"}) {
    auto c = config(scenario, scratch(std::string("audit_") + scenario));
    c.count = 18;
    const auto r = run_experiment(c);
    EXPECT_TRUE(r.audit.clean()) << scenario << "\n" << audit_table(r.audit);
    EXPECT_TRUE(audit(read_trace(r.trace_path)).clean());
  }
}

TEST(Audit, ForgedDeliveryIsTheOnlyViolation) {
  auto c = config("arclite", scratch("audit_forged"));
  c.count = 12;
  const auto clean = read_trace(run_experiment(c).trace_path);
  const auto forged = fixture::forge_delivery(clean, "colorist-1", "colorist-2");
  const auto r = audit(forged.events);
  ASSERT_EQ(r.violations.size(), 1u) << audit_table(r);
  EXPECT_EQ(r.violations[0].kind, "blanket");
  EXPECT_EQ(r.violations[0].seq, forged.seq);
}

TEST(Audit, TamperedLayer0HashIsTheOnlyViolation) {
  auto c = config("arclite", scratch("audit_tamper"));
  c.count = 6;
  const auto clean = read_trace(run_experiment(c).trace_path);
  const auto tampered = fixture::tamper_layer0(clean, "solver");
  const auto r = audit(tampered.events);
  ASSERT_EQ(r.violations.size(), 1u) << audit_table(r);
  EXPECT_EQ(r.violations[0].kind, "immutability");
  EXPECT_EQ(r.violations[0].seq, tampered.seq);
}

TEST(Audit, BudgetAndReputationTamperingDetected) {
  auto c = config("arclite", scratch("audit_more"));
  c.count = 12;
  const auto clean = read_trace(run_experiment(c).trace_path);
  auto budget = clean;
  for (auto& e : budget) {
    if (e.event_type == "BudgetCharged") {
      e.payload["units"] = e.payload.at("units").get<std::uint64_t>() + 1;
      break;
    }
  }
  EXPECT_EQ(audit(budget).count("budget"), 1u);
  auto rep = clean;
  for (auto& e : rep) {
    if (e.event_type == "ReputationUpdated") {
      e.payload["ewma"] = e.payload.at("ewma").get<double>() + 1e-6;
      break;
    }
  }
  // Replay continues from the recomputed value, so only the edited update disagrees.
  EXPECT_EQ(audit(rep).count("reputation"), 1u);
}

TEST(Audit, DisorderedTraceIsMalformed) {
  auto c = config("tmaze", scratch("audit_order"));
  c.episodes = 2;
  auto events = read_trace(run_experiment(c).trace_path);
  std::swap(events[3], events[4]);
  try {
    audit(events);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedTrace);
  }
}

// plot

TEST(Plot, SeriesCopyTraceValuesVerbatim) {
  auto c = config("tmaze", scratch("plot"));
  c.episodes = 3;
  const auto r = run_experiment(c);
  const auto events = read_trace(r.trace_path);
  const auto series = free_energy_series(events);
  ASSERT_EQ(series.size(), 2u);
  std::vector<double> f;
  for (const auto& e : events) {
    if (e.event_type == "Perception") f.push_back(e.payload.at("f").get<double>());
  }
  EXPECT_EQ(series[0].quantity, "F");
  EXPECT_EQ(series[0].values, f);
  const auto files = plot_trace(r.trace_path, (fs::path(c.output_dir) / "plots").string());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_NE(slurp(files[0]).find("<polyline"), std::string::npos);
}

// serve

TEST(Serve, LoopbackControlAndPreferenceFlip) {
  auto c = config("tmaze", scratch("serve"));
  c.prior_left = 0.99;
  c.episodes = 4;
  ServerOptions o;
  o.port = 0;
  o.start_paused = true;
  ControlServer server(c, o);
  const int port = server.start();
  httplib::Client client("127.0.0.1", port);
  auto state = [&] { return nlohmann::json::parse(client.Get("/state")->body); };
  auto wait_for_tick = [&](std::uint64_t tick) {
    for (int i = 0; i < 400 && state().value("tick", 0) < tick; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  };
  auto post = [&](const char* path, const nlohmann::json& body) {
    return client.Post(path, body.dump(), "application/json");
  };

  wait_for_tick(0);
  const auto s0 = state();
  ASSERT_TRUE(s0.at("paused").get<bool>());
  const auto hash = s0.at("agents").at(0).at("layer0_hash");

  const auto refused = post("/preferences", {{"agent_id", "tmaze"}, {"layer", 0}, {"fragment", {0, 0, 0, 0, 0}}});
  ASSERT_TRUE(refused);
  EXPECT_EQ(refused->status, 403);
  EXPECT_EQ(nlohmann::json::parse(refused->body).at("error"), "ImmutableLayer");
  EXPECT_EQ(post("/preferences", {{"agent_id", "ghost"}, {"layer", 1}, {"fragment", {1}}})->status, 404);
  EXPECT_EQ(post("/preferences", {{"agent_id", "tmaze"}, {"layer", 1}, {"fragment", {{"treasure", 1}}}})->status, 400);

  // Paused: a step advances exactly one tick.
  EXPECT_EQ(post("/control", {{"action", "step"}})->status, 202);
  wait_for_tick(1);
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(state().at("tick"), 1);
  EXPECT_EQ(state().at("agents").at(0).at("layer0_hash"), hash);

  const auto accepted =
      post("/preferences", {{"agent_id", "tmaze"}, {"layer", 1}, {"fragment", {{"reward", -9.0}, {"no_reward", 9.0}}}});
  EXPECT_EQ(accepted->status, 202);
  EXPECT_EQ(post("/control", {{"action", "resume"}})->status, 202);
  server.wait_finished();

  const auto streamed = client.Get("/events?from=0");
  ASSERT_TRUE(streamed);
  std::vector<TraceEvent> events;
  std::istringstream in(streamed->body);
  for (std::string line; std::getline(in, line);) events.push_back(event_from_json(nlohmann::json::parse(line)));
  ASSERT_EQ(events.size(), state().at("events").get<std::size_t>());

  std::vector<std::string> first_moves;
  std::uint64_t mutation_seq = 0, change_seq = 0, rejected_seq = 0;
  for (const auto& e : events) {
    if (e.event_type == "EpisodeCompleted") first_moves.push_back(e.payload.at("first_move"));
    if (e.event_type == "OperatorMutation" && e.payload.at("kind") == "preferences") mutation_seq = e.seq;
    if (e.event_type == "PreferenceChanged" && e.source == "operator") change_seq = e.seq;
    if (e.event_type == "PreferenceWriteRejected" && e.source == "operator") rejected_seq = e.seq;
  }
  EXPECT_GT(rejected_seq, 0u);
  EXPECT_GT(mutation_seq, 0u);
  EXPECT_LT(mutation_seq, change_seq);
  EXPECT_EQ(first_moves, (std::vector<std::string>{"left", "right", "right", "right"}));
  const auto m = compute_metrics(events);
  ASSERT_TRUE(m.corrigibility_latency.has_value());
  EXPECT_EQ(*m.corrigibility_latency, 1u);
  EXPECT_EQ(state().at("agents").at(0).at("layer0_hash"), hash);
  EXPECT_EQ(server.result()->exit_status, 0);
  EXPECT_TRUE(audit(events).clean());
}

TEST(Serve, EventsResumeFromSequence) {
  auto c = config("tmaze", scratch("serve_from"));
  c.episodes = 2;
  ServerOptions o;
  o.port = 0;
  ControlServer server(c, o);
  httplib::Client client("127.0.0.1", server.start());
  server.wait_finished();
  const auto body = client.Get("/events?from=10")->body;
  EXPECT_EQ(event_from_json(nlohmann::json::parse(body.substr(0, body.find('\n')))).seq, 10u);
  EXPECT_EQ(client.Get("/events?from=x")->status, 400);
  EXPECT_EQ(client.Post("/control", R"({"action":"rewind"})", "application/json")->status, 400);
}
