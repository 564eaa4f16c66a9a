#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/hierarchy/hierarchy.hpp"
#include "aif/reasoning/external_provider.hpp"
#include "aif/reasoning/tabular_provider.hpp"
#include "aif/runtime/audit.hpp"
#include "aif/runtime/config.hpp"
#include "aif/tasks/arc_lite.hpp"
#include "aif/tasks/metrics.hpp"
#include "aif/tasks/solver.hpp"
#include "aif/tasks/tmaze.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

struct RunHooks {
  /// Called from the sequencer at every tick boundary, before the clock advances.
  std::function<void(Hierarchy&)> at_boundary;
  /// Called once the hierarchy is built, before the first tick.
  std::function<void(Hierarchy&)> on_ready;
  /// Keep every event in memory as well as on disk.
  bool keep_events = false;
};

struct RunResult {
  int exit_status = 0;
  std::string trace_path;
  std::size_t records = 0;
  SafetyMetrics metrics;
  AuditReport audit;
  nlohmann::json summary;
};

inline nlohmann::json to_json(const Episode& e) {
  return {{"task_id", e.task_id},   {"observations", e.observations}, {"actions", e.actions},
          {"outcome", e.outcome},   {"final_f", e.final_f},           {"features", e.features},
          {"f_series", e.f_series}, {"final_state", e.final_state},   {"annotation", e.annotation},
          {"avoid", e.avoid},       {"success", e.success}};
}

/// Episodic memory of every agent, active and archived.
inline nlohmann::json memory_snapshot(const Hierarchy& h) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& id : h.agent_ids()) {
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : h.agent(id).episodic().episodes()) eps.push_back(to_json(e));
    out[id] = std::move(eps);
  }
  return out;
}

/// `count` tasks, family i % n for task i, each family's batch seeded independently.
inline std::vector<arc::GridTask> round_robin_tasks(const std::vector<std::string>& families, std::size_t count,
                                                    std::uint64_t seed) {
  const std::size_t n = families.size();
  std::vector<std::vector<arc::GridTask>> batches;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = count / n + (i < count % n ? 1 : 0);
    batches.push_back(k == 0 ? std::vector<arc::GridTask>{} : arc::generate_tasks(families[i], k, seed + 7919ULL * i));
  }
  std::vector<arc::GridTask> out;
  for (std::size_t t = 0; t < count; ++t) out.push_back(std::move(batches[t % n][t / n]));
  return out;
}

/// One scenario run against a trace sink. serve() drives the same object from its sequencer.
class Experiment {
 public:
  explicit Experiment(RunConfig config, RunHooks hooks = {}) : config_(std::move(config)), hooks_(std::move(hooks)) {
    config_.validate();
    std::filesystem::create_directories(config_.output_dir);
    trace_path_ = (std::filesystem::path(config_.output_dir) / "trace.jsonl").string();
    trace_ = std::make_unique<TraceSink>(trace_path_, hooks_.keep_events);
    HierarchySettings hs;
    hs.seed = config_.seed;
    hierarchy_ = std::make_unique<Hierarchy>(*trace_, hs);
  }

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const RunConfig& config() const noexcept { return config_; }
  TraceSink& trace() noexcept { return *trace_; }
  Hierarchy& hierarchy() noexcept { return *hierarchy_; }
  const std::string& trace_path() const noexcept { return trace_path_; }

  RunResult run() {
    // Output location and pacing do not affect the run, so they stay out of the trace.
    auto recorded = to_json(config_);
    recorded.erase("output_dir");
    recorded.erase("tick_interval_ms");
    trace_->emit("system", "RunStarted", {{"config", recorded}});

    std::vector<nlohmann::json> records;
    nlohmann::json scenario_summary;
    if (config_.scenario == "arclite") {
      scenario_summary = run_arclite(records);
    } else {
      scenario_summary = run_tmaze(records);
    }
    trace_->emit("system", "RunCompleted", {{"records", records.size()}});
    trace_->flush();

    RunResult r;
    r.trace_path = trace_path_;
    r.records = records.size();
    r.metrics = compute_metrics(trace_path_);
    r.audit = audit(trace_path_);
    const bool budget_ok = r.metrics.charged_units == r.metrics.efe_evaluations;
    r.exit_status = r.audit.clean() && r.metrics.layer0_hash_changes == 0 && budget_ok ? 0 : 1;

    const std::filesystem::path dir(config_.output_dir);
    {
      std::ofstream out(dir / "records.jsonl", std::ios::trunc);
      for (const auto& j : records) out << j.dump() << '\n';
    }
    write_file(dir / "metrics.json", to_json(r.metrics).dump(2) + "\n");
    write_file(dir / "metrics.txt", metrics_table(r.metrics));
    write_file(dir / "audit.json", to_json(r.audit).dump(2) + "\n");
    write_file(dir / "memory.json", memory_snapshot(*hierarchy_).dump(2) + "\n");
    r.summary = {{"scenario", config_.scenario},
                 {"seed", config_.seed},
                 {"config", to_json(config_)},
                 {"records", records.size()},
                 {"events", r.metrics.events},
                 {"ticks", trace_->tick()},
                 {"audit_violations", r.audit.violations.size()},
                 {"layer0_hash_changes", r.metrics.layer0_hash_changes},
                 {"budget_consistent", budget_ok},
                 {"exit_status", r.exit_status},
                 {"results", scenario_summary}};
    write_file(dir / "summary.json", r.summary.dump(2) + "\n");
    return r;
  }

 private:
  static void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::ConfigError, "cannot write '" + p.string() + "'");
    out << text;
  }

  void boundary() {
    if (hooks_.at_boundary) hooks_.at_boundary(*hierarchy_);
  }

  std::string build_from_topology(const tmaze::Params& params) {
    const auto t = load_topology(config_.topology, params, config_.overrides);
    build_hierarchy(*hierarchy_, t);
    return t.agents.front().config.id;
  }

  nlohmann::json run_tmaze(std::vector<nlohmann::json>& records) {
    tmaze::Params params;
    params.prior_left = config_.effective_prior_left();
    std::string agent_id = "tmaze";
    if (!config_.topology.empty()) {
      agent_id = build_from_topology(params);
    } else {
      auto cfg = tmaze::agent_config(agent_id);
      config_.overrides.apply(cfg);
      hierarchy_->add_agent(cfg, tmaze::make_model(params));
    }
    if (hooks_.on_ready) hooks_.on_ready(*hierarchy_);

    tmaze::RunOptions opt;
    opt.episodes = config_.effective_episodes();
    opt.seed = config_.seed;
    opt.reward_left_probability = config_.effective_prior_left();
    const auto flip = config_.effective_flip_episode();
    opt.at_tick = [&](Agent& a, std::size_t episode, std::size_t step) {
      if (flip && episode == *flip && step == 0) {
        a.update_preferences(1, tmaze::flip_fragment(params), "scripted flip: seek the empty arm", "script");
      }
      boundary();
    };
    const auto log = tmaze::run_tmaze(*hierarchy_, agent_id, opt);
    std::size_t rewarded = 0, cue_first = 0;
    for (const auto& e : log) {
      records.push_back(tmaze::to_json(e));
      rewarded += e.rewarded;
      cue_first += e.first_move == "cue";
    }
    return {{"episodes", log.size()}, {"rewarded", rewarded}, {"cue_first", cue_first}};
  }

  nlohmann::json run_arclite(std::vector<nlohmann::json>& records) {
    auto tabular = std::make_shared<TabularProvider>(arc::hypothesis_library(config_.effective_library()));
    std::shared_ptr<Provider> provider = tabular;
    std::shared_ptr<FallbackProvider> fallback;
    if (config_.provider == "external") {
      fallback = std::make_shared<FallbackProvider>(
          std::make_shared<ExternalProvider>(external_config_from(config_.provider_config)), tabular,
          [this](const std::string& reason) { trace_->emit("system", "ProviderFallback", {{"to", "tabular"}, {"reason", reason}}); });
      provider = fallback;
    }
    arc::SolverSettings s;
    config_.overrides.apply(s.thresholds);
    if (config_.overrides.max_planning_cycles) s.max_planning_cycles = *config_.overrides.max_planning_cycles;
    if (config_.overrides.max_reasoning_units) s.max_reasoning_units = *config_.overrides.max_reasoning_units;
    if (!config_.topology.empty()) {
      s.root_id = build_from_topology({});
      auto it = hierarchy_->settings().action_topics.find(arc::test_action("color_map"));
      if (it != hierarchy_->settings().action_topics.end()) s.color_topic = it->second;
    }
    s.at_tick = [&](Agent&) { boundary(); };
    arc::ArcSolver solver(*hierarchy_, *provider, s);
    if (hooks_.on_ready) hooks_.on_ready(*hierarchy_);

    std::map<std::string, std::map<std::string, std::size_t>> by_family;
    for (const auto& task : round_robin_tasks(config_.families, config_.count, config_.seed)) {
      if (fallback) fallback->begin_episode();
      const auto rec = solver.solve(task);
      records.push_back(arc::to_json(rec));
      ++by_family[task.family][rec.status];
    }
    nlohmann::json families = nlohmann::json::object();
    std::size_t solved = 0, wrong = 0, postponed = 0;
    for (const auto& [f, counts] : by_family) {
      families[f] = counts;
      for (const auto& [status, n] : counts) {
        solved += status == "solved" ? n : 0;
        wrong += status == "wrong" ? n : 0;
        postponed += status == "postponed" ? n : 0;
      }
    }
    return {{"tasks", records.size()}, {"solved", solved}, {"wrong", wrong}, {"postponed", postponed}, {"families", families}};
  }

  RunConfig config_;
  RunHooks hooks_;
  std::string trace_path_;
  std::unique_ptr<TraceSink> trace_;
  std::unique_ptr<Hierarchy> hierarchy_;
};

/// Runs the scenario and writes trace.jsonl, records.jsonl, metrics.json, metrics.txt, audit.json,
/// memory.json and summary.json to the output directory.
inline RunResult run_experiment(const RunConfig& config, RunHooks hooks = {}) {
  Experiment e(config, std::move(hooks));
  return e.run();
}

}  // namespace aif
