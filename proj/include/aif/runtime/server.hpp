#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "httplib.h"
#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/runtime/experiment.hpp"

namespace aif {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 binds any free port.
  int port = 8765;
  bool start_paused = false;
};

/// Operator request validated by the HTTP thread and applied by the sequencer.
struct OperatorRequest {
  /// preferences, layer0, pause, resume or step.
  std::string kind;
  std::string agent_id;
  std::size_t layer = 0;
  PreferenceModel fragment;
  nlohmann::json body;
};

/// Reads a preference fragment given as a log-preference array or as an object keyed by observation label.
inline std::vector<double> fragment_values(const nlohmann::json& fragment, const std::vector<std::string>& labels) {
  if (fragment.is_array()) {
    require(fragment.size() == labels.size(), ErrorCode::VocabularyMismatch,
            fmt::format("fragment has {} entries but the agent has {} observations", fragment.size(), labels.size()));
    std::vector<double> out;
    for (const auto& v : fragment) {
      require(v.is_number(), ErrorCode::SchemaViolation, "fragment entries must be numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  require(fragment.is_object(), ErrorCode::SchemaViolation, "fragment must be an array or an object of label -> value");
  std::vector<double> out(labels.size(), 0.0);
  for (const auto& [label, v] : fragment.items()) {
    auto it = std::find(labels.begin(), labels.end(), label);
    require(it != labels.end(), ErrorCode::VocabularyMismatch, "unknown observation label '" + label + "'");
    require(v.is_number(), ErrorCode::SchemaViolation, "fragment value for '" + label + "' must be a number");
    out[static_cast<std::size_t>(it - labels.begin())] = v.get<double>();
  }
  return out;
}

/// Runs one experiment on a sequencer thread and exposes /state, /events, /preferences and /control.
/// Operator requests are queued and applied only at tick boundaries.
class ControlServer {
 public:
  ControlServer(RunConfig config, ServerOptions options = {}) : options_(std::move(options)) {
    paused_ = options_.start_paused;
    RunHooks hooks;
    hooks.keep_events = true;
    hooks.on_ready = [this](Hierarchy& h) { refresh(h); };
    hooks.at_boundary = [this](Hierarchy& h) { boundary(h); };
    experiment_ = std::make_unique<Experiment>(std::move(config), std::move(hooks));
    experiment_->trace().add_listener([this](const TraceEvent&) { events_cv_.notify_all(); });
    routes();
  }

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  ~ControlServer() { stop(); }

  /// Binds, then starts the HTTP and sequencer threads. Returns the bound port.
  int start() {
    port_ = options_.port == 0 ? http_.bind_to_any_port(options_.host) : options_.port;
    if (options_.port != 0) {
      require(http_.bind_to_port(options_.host, options_.port), ErrorCode::ConfigError,
              fmt::format("cannot bind {}:{}", options_.host, options_.port));
    }
    require(port_ > 0, ErrorCode::ConfigError, "cannot bind " + options_.host);
    http_thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    sequencer_ = std::thread([this] { sequence(); });
    return port_;
  }

  int port() const noexcept { return port_; }

  /// Blocks until the run has finished.
  void wait_finished() {
    std::unique_lock lock(mu_);
    state_cv_.wait(lock, [&] { return finished_; });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    state_cv_.notify_all();
    events_cv_.notify_all();
    if (sequencer_.joinable()) sequencer_.join();
    http_.stop();
    if (http_thread_.joinable()) http_thread_.join();
  }

  std::optional<RunResult> result() const {
    std::lock_guard lock(mu_);
    return result_;
  }

  nlohmann::json state() const {
    std::lock_guard lock(mu_);
    return state_locked();
  }

 private:
  struct Stopped {};

  nlohmann::json state_locked() const {
    nlohmann::json s = snapshot_.is_null() ? nlohmann::json::object() : snapshot_;
    s["paused"] = paused_;
    s["finished"] = finished_;
    s["scenario"] = experiment_->config().scenario;
    s["events"] = experiment_->trace().size();
    if (!error_.empty()) s["error"] = error_;
    if (result_) s["exit_status"] = result_->exit_status;
    return s;
  }

  void sequence() {
    try {
      auto r = experiment_->run();
      std::lock_guard lock(mu_);
      result_ = std::move(r);
    } catch (const Stopped&) {
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      error_ = e.what();
    }
    {
      std::lock_guard lock(mu_);
      refresh_locked(experiment_->hierarchy());
      finished_ = true;
    }
    state_cv_.notify_all();
    events_cv_.notify_all();
  }

  void refresh(Hierarchy& h) {
    std::lock_guard lock(mu_);
    refresh_locked(h);
  }

  void refresh_locked(Hierarchy& h) {
    snapshot_ = h.snapshot();
    for (const auto& a : snapshot_.at("agents")) labels_[a.at("id").get<std::string>()] = a.at("observation_labels");
  }

  void apply(Hierarchy& h, const OperatorRequest& r) {
    TraceSink& trace = h.trace();
    trace.emit(r.agent_id.empty() ? "system" : r.agent_id, "OperatorMutation", {{"kind", r.kind}, {"request", r.body}},
               "operator");
    if (r.kind != "preferences" && r.kind != "layer0") return;
    if (!h.has(r.agent_id)) {
      trace.emit("system", "OperatorMutationFailed", {{"kind", r.kind}, {"reason", "unknown agent '" + r.agent_id + "'"}},
                 "operator");
      return;
    }
    try {
      h.agent(r.agent_id).update_preferences(r.layer, r.fragment, "operator", "operator");
    } catch (const Error&) {
      // update_preferences has already logged the rejection.
    }
  }

  void boundary(Hierarchy& h) {
    std::unique_lock lock(mu_);
    for (;;) {
      while (!queue_.empty()) {
        auto r = std::move(queue_.front());
        queue_.pop_front();
        apply(h, r);
      }
      refresh_locked(h);
      state_cv_.notify_all();
      if (stopping_) throw Stopped{};
      if (!paused_) break;
      if (steps_ > 0) {
        --steps_;
        break;
      }
      state_cv_.wait(lock, [&] { return stopping_ || !queue_.empty() || !paused_ || steps_ > 0; });
    }
    const auto interval = experiment_->config().tick_interval_ms;
    if (interval > 0) {
      state_cv_.wait_for(lock, std::chrono::milliseconds(interval), [&] { return stopping_; });
      if (stopping_) throw Stopped{};
    }
  }

  void enqueue(OperatorRequest r) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(r));
    }
    state_cv_.notify_all();
  }

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void refuse(httplib::Response& res, int status, const std::string& error, const std::string& message) {
    reply(res, status, {{"error", error}, {"message", message}});
  }

  void routes() {
    http_.Get("/state", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, state()); });

    http_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t from = 0;
      if (req.has_param("from")) {
        try {
          from = std::stoull(req.get_param_value("from"));
        } catch (const std::exception&) {
          refuse(res, 400, "SchemaViolation", "from must be a sequence number");
          return;
        }
      }
      auto cursor = std::make_shared<std::uint64_t>(from);
      res.set_chunked_content_provider("application/x-ndjson", [this, cursor](std::size_t, httplib::DataSink& sink) {
        for (;;) {
          auto batch = experiment_->trace().events_from(*cursor);
          if (!batch.empty()) {
            std::string chunk;
            for (const auto& e : batch) chunk += to_json(e).dump() + "\n";
            *cursor = batch.back().seq + 1;
            return sink.write(chunk.data(), chunk.size());
          }
          std::unique_lock lock(mu_);
          if (stopping_ || (finished_ && *cursor >= experiment_->trace().size())) {
            sink.done();
            return true;
          }
          events_cv_.wait_for(lock, std::chrono::milliseconds(100));
          if (!sink.is_writable()) return false;
        }
      });
    });

    http_.Post("/preferences", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        refuse(res, 400, "SchemaViolation", e.what());
        return;
      }
      if (!body.is_object() || !body.contains("agent_id") || !body.at("agent_id").is_string() || !body.contains("layer") ||
          !body.at("layer").is_number_integer() || !body.contains("fragment")) {
        refuse(res, 400, "SchemaViolation", "expected {agent_id, layer, fragment, precision}");
        return;
      }
      OperatorRequest r;
      r.agent_id = body.at("agent_id").get<std::string>();
      r.body = body;
      const auto layer = body.at("layer").get<long long>();
      std::vector<std::string> labels;
      std::size_t layers = 0;
      {
        std::lock_guard lock(mu_);
        auto it = labels_.find(r.agent_id);
        if (it == labels_.end()) {
          refuse(res, 404, "ConfigError", "unknown agent '" + r.agent_id + "'");
          return;
        }
        labels = it->second.get<std::vector<std::string>>();
        for (const auto& a : snapshot_.at("agents")) {
          if (a.at("id") == r.agent_id) layers = a.at("layers").get<std::size_t>();
        }
      }
      if (layer < 0 || static_cast<std::size_t>(layer) > layers) {
        refuse(res, 400, "ConfigError", fmt::format("layer must lie in [1, {}]", layers));
        return;
      }
      r.layer = static_cast<std::size_t>(layer);
      try {
        r.fragment.log_pref = fragment_values(body.at("fragment"), labels);
      } catch (const Error& e) {
        refuse(res, 400, std::string(to_string(e.code())), e.what());
        return;
      }
      r.fragment.precision = body.value("precision", 1.0);
      if (body.contains("annotation") && body.at("annotation").is_string()) {
        r.fragment.annotations = {body.at("annotation").get<std::string>()};
      }
      if (!(r.fragment.precision > 0.0)) {
        refuse(res, 400, "ConfigError", "precision must be positive");
        return;
      }
      if (r.layer == 0) {
        r.kind = "layer0";
        enqueue(r);
        refuse(res, 403, "ImmutableLayer", "layer 0 is immutable");
        return;
      }
      r.kind = "preferences";
      enqueue(r);
      reply(res, 202, {{"status", "queued"}, {"agent_id", r.agent_id}, {"layer", r.layer}});
    });

    http_.Post("/control", [this](const httplib::Request& req, httplib::Response& res) {
      std::string action;
      try {
        const auto body = nlohmann::json::parse(req.body);
        action = body.is_object() ? body.value("action", "") : body.get<std::string>();
      } catch (const std::exception&) {
        action = req.has_param("action") ? req.get_param_value("action") : "";
      }
      if (action != "pause" && action != "resume" && action != "step") {
        refuse(res, 400, "SchemaViolation", "action must be pause, resume or step");
        return;
      }
      OperatorRequest r;
      r.kind = action;
      r.body = {{"action", action}};
      {
        std::lock_guard lock(mu_);
        if (action == "pause") paused_ = true;
        if (action == "resume") paused_ = false;
        if (action == "step" && paused_) ++steps_;
        queue_.push_back(std::move(r));
      }
      state_cv_.notify_all();
      reply(res, 202, state());
    });
  }

  ServerOptions options_;
  std::unique_ptr<Experiment> experiment_;
  httplib::Server http_;
  std::thread http_thread_;
  std::thread sequencer_;
  int port_ = 0;

  mutable std::mutex mu_;
  std::condition_variable state_cv_;
  std::condition_variable events_cv_;
  std::deque<OperatorRequest> queue_;
  nlohmann::json snapshot_;
  std::map<std::string, nlohmann::json> labels_;
  bool paused_ = false;
  std::uint64_t steps_ = 0;
  bool stopping_ = false;
  bool finished_ = false;
  std::optional<RunResult> result_;
  std::string error_;
};

}  // namespace aif
