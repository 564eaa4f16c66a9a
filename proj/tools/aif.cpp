#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "aif/runtime/audit.hpp"
#include "aif/runtime/config.hpp"
#include "aif/runtime/experiment.hpp"
#include "aif/runtime/plot.hpp"
#include "aif/runtime/server.hpp"
#include "aif/tasks/metrics.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

/// Command-line values; each one set overrides the config file.
struct RunFlags {
  std::string config;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::string> provider_config;
  std::optional<std::string> topology;
  std::vector<std::string> families;
  std::optional<std::size_t> count;
  std::vector<std::string> library;
  std::optional<std::size_t> episodes;
  std::optional<double> prior_left;
  std::optional<std::size_t> flip_episode;
  std::optional<double> theta_hi;
  std::optional<double> theta_lo;
  std::optional<double> habit_similarity;
  std::optional<double> attention;
  std::optional<std::uint64_t> max_planning_cycles;
  std::optional<std::uint64_t> max_reasoning_units;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> tick_interval_ms;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config, "Run config JSON file; flags override its fields")->check(CLI::ExistingFile);
  app->add_option("--scenario", f.scenario, "tmaze, corrigibility or arclite");
  app->add_option("--seed", f.seed, "Seed of every random draw");
  app->add_option("--provider", f.provider, "tabular or external");
  app->add_option("--provider-config", f.provider_config,
                  "JSON file with endpoint, path, model, timeout_seconds, max_in_flight, max_rounds, transcript");
  app->add_option("--topology", f.topology, "Topology document");
  app->add_option("--families", f.families, "ARC-lite task families, assigned round-robin")->delimiter(',');
  app->add_option("--count", f.count, "Number of ARC-lite tasks");
  app->add_option("--library", f.library, "Hypothesis library families")->delimiter(',');
  app->add_option("--episodes", f.episodes, "T-maze episodes");
  app->add_option("--prior-left", f.prior_left, "Prior and environment probability of the left reward");
  app->add_option("--flip-episode", f.flip_episode, "Episode at which the scripted preference flip happens");
  app->add_option("--theta-hi", f.theta_hi, "Deliberation threshold on F");
  app->add_option("--theta-lo", f.theta_lo, "Perseveration threshold on F");
  app->add_option("--habit-similarity", f.habit_similarity, "Episodic similarity that triggers habit");
  app->add_option("--attention", f.attention, "Error-report attention threshold");
  app->add_option("--max-planning-cycles", f.max_planning_cycles, "Planning cycles per task");
  app->add_option("--max-reasoning-units", f.max_reasoning_units, "Reasoning units per task");
  app->add_option("-o,--output-dir", f.output_dir, "Directory for the trace and reports");
  app->add_option("--tick-interval-ms", f.tick_interval_ms, "Pause between ticks when serving");
}

aif::RunConfig resolve(const RunFlags& f) {
  aif::RunConfig c = f.config.empty() ? aif::RunConfig{} : aif::load_run_config(f.config);
  if (f.scenario) c.scenario = *f.scenario;
  if (f.seed) c.seed = *f.seed;
  if (f.provider) c.provider = *f.provider;
  if (f.provider_config) c.provider_config = aif::read_json_file(*f.provider_config);
  if (f.topology) c.topology = *f.topology;
  if (!f.families.empty()) c.families = f.families;
  if (f.count) c.count = *f.count;
  if (!f.library.empty()) c.library = f.library;
  if (f.episodes) c.episodes = f.episodes;
  if (f.prior_left) c.prior_left = f.prior_left;
  if (f.flip_episode) c.flip_episode = f.flip_episode;
  if (f.theta_hi) c.overrides.theta_hi = f.theta_hi;
  if (f.theta_lo) c.overrides.theta_lo = f.theta_lo;
  if (f.habit_similarity) c.overrides.habit_similarity = f.habit_similarity;
  if (f.attention) c.overrides.attention = f.attention;
  if (f.max_planning_cycles) c.overrides.max_planning_cycles = f.max_planning_cycles;
  if (f.max_reasoning_units) c.overrides.max_reasoning_units = f.max_reasoning_units;
  if (f.output_dir) c.output_dir = *f.output_dir;
  if (f.tick_interval_ms) c.tick_interval_ms = *f.tick_interval_ms;
  c.validate();
  return c;
}

void print_run(const aif::RunResult& r) {
  std::cout << fmt::format("trace    {}\nrecords  {}\nresults  {}\n\n", r.trace_path, r.records, r.summary.at("results").dump());
  std::cout << aif::metrics_table(r.metrics) << "\n" << aif::audit_table(r.audit);
  std::cout << fmt::format("exit status {}\n", r.exit_status);
}

int cmd_run(const RunFlags& f) {
  const auto r = aif::run_experiment(resolve(f));
  print_run(r);
  return r.exit_status;
}

int cmd_serve(const RunFlags& f, const aif::ServerOptions& options, bool exit_when_done) {
  aif::ControlServer server(resolve(f), options);
  const int port = server.start();
  std::cout << fmt::format("serving on http://{}:{} (GET /state, GET /events, POST /preferences, POST /control)\n",
                           options.host, port)
            << std::flush;
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted) {
    if (exit_when_done && server.state().value("finished", false)) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  const auto r = server.result();
  if (!r) {
    std::cout << "run did not finish\n";
    return 1;
  }
  print_run(*r);
  return r->exit_status;
}

int cmd_audit(const std::string& trace, bool as_json) {
  const auto r = aif::audit(trace);
  std::cout << (as_json ? aif::to_json(r).dump(2) + "\n" : aif::audit_table(r));
  return r.clean() ? 0 : 1;
}

int cmd_metrics(const std::string& trace, bool as_json) {
  const auto m = aif::compute_metrics(trace);
  std::cout << (as_json ? aif::to_json(m).dump(2) + "\n" : aif::metrics_table(m));
  return 0;
}

int cmd_plot(const std::string& trace, const std::string& out) {
  for (const auto& p : aif::plot_trace(trace, out)) std::cout << p << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical active-inference agents: runs, control server, audit, metrics and plots"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a scenario and write trace, metrics and summary");
  add_run_flags(run, run_flags);

  RunFlags serve_flags;
  aif::ServerOptions options;
  bool exit_when_done = false;
  auto* serve = app.add_subcommand("serve", "Run a scenario behind the control and event endpoints");
  add_run_flags(serve, serve_flags);
  serve->add_option("--host", options.host, "Bind address")->capture_default_str();
  serve->add_option("--port", options.port, "Port, 0 for any free port")->capture_default_str();
  serve->add_flag("--paused", options.start_paused, "Hold the sequencer before the first tick");
  serve->add_flag("--exit-when-done", exit_when_done, "Stop serving once the run finishes");

  std::string trace;
  bool as_json = false;
  auto* audit = app.add_subcommand("audit", "Re-check a trace; nonzero exit on any violation");
  audit->add_option("trace", trace, "Trace JSONL")->required()->check(CLI::ExistingFile);
  audit->add_flag("--json", as_json, "Print the structured report");

  auto* metrics = app.add_subcommand("metrics", "Safety metrics of a trace");
  metrics->add_option("trace", trace, "Trace JSONL")->required()->check(CLI::ExistingFile);
  metrics->add_flag("--json", as_json, "Print JSON instead of the table");

  std::string plot_dir = "plots";
  auto* plot = app.add_subcommand("plot", "Render F and G series per agent to SVG");
  plot->add_option("trace", trace, "Trace JSONL")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--output-dir", plot_dir, "Directory for the SVG files")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (serve->parsed()) return cmd_serve(serve_flags, options, exit_when_done);
    if (audit->parsed()) return cmd_audit(trace, as_json);
    if (metrics->parsed()) return cmd_metrics(trace, as_json);
    if (plot->parsed()) return cmd_plot(trace, plot_dir);
  } catch (const aif::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
