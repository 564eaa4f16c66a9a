#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/reasoning/provider.hpp"

namespace aif {

struct ExternalProviderConfig {
  /// Base URL, for example http://127.0.0.1:8080.
  std::string endpoint;
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string token;
  double timeout_seconds = 30.0;
  std::size_t max_in_flight = 4;
  std::size_t max_rounds = 3;
  std::string transcript_path;
};

/// File values first, then AIF_PROVIDER_ENDPOINT / _MODEL / _TOKEN from the environment.
inline ExternalProviderConfig external_config_from(const nlohmann::json& j) {
  ExternalProviderConfig c;
  if (j.is_object()) {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_rounds = j.value("max_rounds", c.max_rounds);
    c.transcript_path = j.value("transcript", c.transcript_path);
  }
  if (const char* v = std::getenv("AIF_PROVIDER_ENDPOINT")) c.endpoint = v;
  if (const char* v = std::getenv("AIF_PROVIDER_MODEL")) c.model = v;
  if (const char* v = std::getenv("AIF_PROVIDER_TOKEN")) c.token = v;
  require(c.timeout_seconds > 0.0, ErrorCode::ConfigError, "provider timeout must be positive");
  require(c.max_in_flight >= 1, ErrorCode::ConfigError, "max_in_flight must be at least 1");
  require(c.max_rounds >= 1, ErrorCode::ConfigError, "max_rounds must be at least 1");
  return c;
}

/// Contents of the first ``` fence (an optional language tag is skipped), or the whole text.
inline std::string fenced_block(const std::string& text) {
  const auto open = text.find("```");
  if (open == std::string::npos) return text;
  auto start = text.find('\n', open);
  if (start == std::string::npos) return text;
  ++start;
  const auto close = text.find("```", start);
  if (close == std::string::npos) return text.substr(start);
  return text.substr(start, close - start);
}

/// Replaces every occurrence of `secret` so it never reaches a log.
inline std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "[REDACTED]");
  }
  return text;
}

/// Chat-completion client. Model output must be a fenced JSON document; anything else is a failure.
class ExternalProvider : public Provider {
 public:
  explicit ExternalProvider(ExternalProviderConfig config) : config_(std::move(config)) {
    require(config_.endpoint.rfind("http://", 0) == 0, ErrorCode::ConfigError,
            "provider endpoint must be an http:// URL");
    if (!config_.transcript_path.empty()) {
      transcript_ = std::make_unique<std::ofstream>(config_.transcript_path, std::ios::app);
      require(transcript_->good(), ErrorCode::ConfigError, "cannot open transcript '" + config_.transcript_path + "'");
    }
  }

  Capabilities capabilities() const override { return {"external:" + config_.model, false, true, true, true}; }

  using Provider::interpret_report;

  Interpretation interpret_report(const ReportView& r) override {
    const nlohmann::json request = {{"task", "interpret_report"},
                                    {"kind", r.kind},
                                    {"terms", r.terms},
                                    {"reply_schema", {{"narrative_form1", "string"}, {"narrative_form2", "string"}}}};
    const auto reply = call("interpret_report", request);
    if (!reply.contains("narrative_form1") || !reply.contains("narrative_form2") || !reply["narrative_form1"].is_string() ||
        !reply["narrative_form2"].is_string()) {
      fail(ErrorCode::ProviderUnavailable, "interpret_report reply lacks narratives");
    }
    Interpretation out;
    out.source = capabilities().name;
    out.narrative_form1 = reply["narrative_form1"];
    out.narrative_form2 = reply["narrative_form2"];
    out.agree = check_consensus(out.narrative_form1, out.narrative_form2);
    return out;
  }

  std::vector<HypothesisCandidate> propose_hypotheses(const TaskContext& context) override {
    if (context.empty()) fail(ErrorCode::NoHypothesis, "empty task context");
    const nlohmann::json request = {{"task", "propose_hypotheses"},
                                    {"task_id", context.task_id},
                                    {"examples", context.examples},
                                    {"features", context.features},
                                    {"retrieved", context.retrieved},
                                    {"reply_schema", {{"hypotheses", "[{id, annotation, fragment}]"}}}};
    for (std::size_t round = 1; round <= config_.max_rounds; ++round) {
      const auto reply = call("propose_hypotheses", request);
      std::vector<HypothesisCandidate> accepted;
      if (reply.contains("hypotheses") && reply["hypotheses"].is_array()) {
        for (const auto& h : reply["hypotheses"]) {
          try {
            HypothesisCandidate c{h.at("id").get<std::string>(), h.at("annotation").get<std::string>(), h.at("fragment"), 0.0};
            validate_fragment(c);
            accepted.push_back(std::move(c));
          } catch (const std::exception& e) {
            log({{"op", "fragment_rejected"}, {"round", round}, {"reason", e.what()}});
          }
        }
      }
      if (!accepted.empty()) return accepted;
    }
    fail(ErrorCode::NoHypothesis, "no valid fragment after " + std::to_string(config_.max_rounds) + " rounds");
  }

  bool check_consensus(const std::string& n1, const std::string& n2) override {
    const auto reply = call("check_consensus", {{"task", "check_consensus"},
                                                {"narrative_form1", n1},
                                                {"narrative_form2", n2},
                                                {"reply_schema", {{"verdict", "agree|disagree"}}}});
    const std::string verdict = reply.value("verdict", "");
    if (verdict != "agree" && verdict != "disagree") fail(ErrorCode::ProviderUnavailable, "unrecognized verdict");
    return verdict == "agree";
  }

  std::size_t calls() const noexcept { return calls_; }
  const ExternalProviderConfig& config() const noexcept { return config_; }

 private:
  class Slot {
   public:
    explicit Slot(ExternalProvider& p) : p_(p) {
      std::unique_lock lock(p_.gate_);
      p_.gate_cv_.wait(lock, [&] { return p_.in_flight_ < p_.config_.max_in_flight; });
      ++p_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard lock(p_.gate_);
        --p_.in_flight_;
      }
      p_.gate_cv_.notify_one();
    }

   private:
    ExternalProvider& p_;
  };

  nlohmann::json call(const std::string& op, const nlohmann::json& request) {
    Slot slot(*this);
    const nlohmann::json body = {
        {"model", config_.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"},
           {"content", "Reply with one fenced JSON block that matches reply_schema. No other text."}},
          {{"role", "user"}, {"content", request.dump()}}}}};
    nlohmann::json entry = {{"op", op}, {"request", {{"headers", {{"Authorization", "Bearer [REDACTED]"}}}, {"body", body}}}};
    std::uint64_t call_no = 0;
    {
      std::lock_guard lock(log_mutex_);
      call_no = ++calls_;
    }
    entry["call"] = call_no;

    httplib::Client client(config_.endpoint);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  static_cast<long>(timeout.count() % 1000000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            static_cast<long>(timeout.count() % 1000000));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                             static_cast<long>(timeout.count() % 1000000));
    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
      entry["error"] = httplib::to_string(res.error());
      log(entry);
      fail(ErrorCode::ProviderUnavailable, op + ": " + httplib::to_string(res.error()));
    }
    entry["response"] = {{"status", res->status}, {"body", res->body}};
    log(entry);
    if (res->status != 200) fail(ErrorCode::ProviderUnavailable, op + ": HTTP " + std::to_string(res->status));
    try {
      const auto envelope = nlohmann::json::parse(res->body);
      const std::string content = envelope.at("choices").at(0).at("message").at("content").get<std::string>();
      auto reply = nlohmann::json::parse(fenced_block(content));
      if (!reply.is_object()) fail(ErrorCode::ProviderUnavailable, op + ": reply is not a JSON object");
      return reply;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ProviderUnavailable, op + ": malformed reply (" + e.what() + ")");
    }
  }

  void log(const nlohmann::json& entry) {
    if (!transcript_) return;
    std::lock_guard lock(log_mutex_);
    *transcript_ << redact(entry.dump(), config_.token) << '\n';
    transcript_->flush();
  }

  ExternalProviderConfig config_;
  std::unique_ptr<std::ofstream> transcript_;
  std::mutex log_mutex_;
  std::mutex gate_;
  std::condition_variable gate_cv_;
  std::size_t in_flight_ = 0;
  std::uint64_t calls_ = 0;
};

/// Degrades to the fallback after any primary failure, for the rest of the episode.
class FallbackProvider : public Provider {
 public:
  using Listener = std::function<void(const std::string& reason)>;

  FallbackProvider(std::shared_ptr<Provider> primary, std::shared_ptr<Provider> fallback, Listener on_fallback = {})
      : primary_(std::move(primary)), fallback_(std::move(fallback)), on_fallback_(std::move(on_fallback)) {}

  Capabilities capabilities() const override { return active().capabilities(); }

  using Provider::interpret_report;

  Interpretation interpret_report(const ReportView& r) override {
    return guarded([&](Provider& p) { return p.interpret_report(r); });
  }

  std::vector<HypothesisCandidate> propose_hypotheses(const TaskContext& c) override {
    return guarded([&](Provider& p) { return p.propose_hypotheses(c); });
  }

  bool check_consensus(const std::string& a, const std::string& b) override {
    return guarded([&](Provider& p) { return p.check_consensus(a, b); });
  }

  void begin_episode() noexcept { degraded_ = false; }
  bool degraded() const noexcept { return degraded_; }

 private:
  const Provider& active() const { return degraded_ ? *fallback_ : *primary_; }

  template <class F>
  std::invoke_result_t<F&, Provider&> guarded(F&& f) {
    if (!degraded_) {
      try {
        return f(*primary_);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ProviderUnavailable) throw;
        degraded_ = true;
        if (on_fallback_) on_fallback_(e.what());
      }
    }
    return f(*fallback_);
  }

  std::shared_ptr<Provider> primary_;
  std::shared_ptr<Provider> fallback_;
  Listener on_fallback_;
  bool degraded_ = false;
};

}  // namespace aif
