#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/agent/agent.hpp"
#include "aif/core/serialization.hpp"
#include "aif/errors.hpp"
#include "aif/tasks/arc_lite.hpp"
#include "aif/tasks/solver.hpp"
#include "aif/tasks/tmaze_model.hpp"

namespace aif {

inline const std::vector<std::string> kScenarios = {"tmaze", "corrigibility", "arclite"};

/// Source text of a JSON document with the line on which every value starts.
class JsonDocument {
 public:
  JsonDocument() = default;

  JsonDocument(std::string origin, std::string text) : origin_(std::move(origin)), text_(std::move(text)) {
    try {
      value_ = nlohmann::json::parse(text_);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::ConfigError, fmt::format("{}:{}: {}", origin_, line_at(e.byte == 0 ? 0 : e.byte - 1), e.what()));
    }
    pos_ = 0;
    scan("");
  }

  static JsonDocument from_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return JsonDocument(path, buf.str());
  }

  /// A document without source text; diagnostics fall back to line 0.
  static JsonDocument from_value(std::string origin, nlohmann::json value) {
    JsonDocument d;
    d.origin_ = std::move(origin);
    d.value_ = std::move(value);
    return d;
  }

  const nlohmann::json& value() const noexcept { return value_; }
  const std::string& origin() const noexcept { return origin_; }

  /// Line of the value at `pointer`, or of its nearest ancestor that exists.
  std::size_t line(std::string pointer) const {
    for (;;) {
      auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      if (pointer.empty()) return 0;
      pointer = pointer.substr(0, pointer.rfind('/'));
    }
  }

  [[noreturn]] void error(const std::string& pointer, const std::string& what) const {
    fail(ErrorCode::ConfigError,
         fmt::format("{}:{}: field '{}': {}", origin_, line(pointer), pointer.empty() ? "/" : pointer, what));
  }

 private:
  std::size_t line_at(std::size_t byte) const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < byte && i < text_.size(); ++i) n += text_[i] == '\n';
    return n;
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') ++line_;
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') break;
      ++pos_;
    }
  }

  std::string read_string() {
    std::string raw;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') raw += text_[pos_++];
      raw += text_[pos_++];
    }
    ++pos_;
    return nlohmann::json::parse("\"" + raw + "\"").get<std::string>();
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }

  // The text is already known to be valid JSON, so the scanner only tracks structure.
  void scan(const std::string& pointer) {
    skip_ws();
    lines_[pointer] = line_;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      if (text_[pos_] == '}') {
        ++pos_;
        return;
      }
      for (;;) {
        skip_ws();
        const std::string key = read_string();
        skip_ws();
        ++pos_;  // ':'
        scan(pointer + "/" + escape(key));
        skip_ws();
        if (text_[pos_++] == '}') return;
      }
    }
    if (c == '[') {
      ++pos_;
      skip_ws();
      if (text_[pos_] == ']') {
        ++pos_;
        return;
      }
      for (std::size_t i = 0;; ++i) {
        scan(pointer + "/" + std::to_string(i));
        skip_ws();
        if (text_[pos_++] == ']') return;
      }
    }
    if (c == '"') {
      read_string();
      return;
    }
    while (pos_ < text_.size() && std::string(",]} \t\r\n").find(text_[pos_]) == std::string::npos) ++pos_;
  }

  std::string origin_;
  std::string text_;
  nlohmann::json value_;
  std::map<std::string, std::size_t> lines_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

namespace detail {

/// Typed field reads that report the offending field and its line.
class FieldReader {
 public:
  FieldReader(const JsonDocument& doc, std::string pointer, std::set<std::string> allowed)
      : doc_(doc), pointer_(std::move(pointer)), node_(&doc.value()) {
    if (!pointer_.empty()) node_ = &doc.value().at(nlohmann::json::json_pointer(pointer_));
    if (!node_->is_object()) doc_.error(pointer_, "expected an object");
    for (const auto& [k, v] : node_->items()) {
      if (!allowed.count(k)) doc_.error(at(k), "unknown field");
    }
  }

  std::string at(const std::string& key) const { return pointer_ + "/" + key; }
  bool has(const std::string& key) const { return node_->contains(key) && !node_->at(key).is_null(); }
  const nlohmann::json& raw(const std::string& key) const { return node_->at(key); }

  void read(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    if (!raw(key).is_string()) doc_.error(at(key), "expected a string");
    out = raw(key).get<std::string>();
  }

  void read(const std::string& key, double& out) const {
    if (!has(key)) return;
    if (!raw(key).is_number()) doc_.error(at(key), "expected a number");
    out = raw(key).get<double>();
  }

  template <class T>
    requires std::is_unsigned_v<T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    if (!raw(key).is_number_unsigned()) doc_.error(at(key), "expected a non-negative integer");
    out = raw(key).get<T>();
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) const {
    if (!has(key)) return;
    T v{};
    read(key, v);
    out = v;
  }

  void read(const std::string& key, std::vector<std::string>& out) const {
    if (!has(key)) return;
    const auto& j = raw(key);
    if (!j.is_array()) doc_.error(at(key), "expected an array of strings");
    out.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_string()) doc_.error(at(key) + "/" + std::to_string(i), "expected a string");
      out.push_back(j[i].get<std::string>());
    }
  }

 private:
  const JsonDocument& doc_;
  std::string pointer_;
  const nlohmann::json* node_;
};

}  // namespace detail

/// Per-agent threshold and budget overrides shared by the run config and the topology document.
struct Overrides {
  std::optional<double> theta_hi;
  std::optional<double> theta_lo;
  std::optional<double> habit_similarity;
  std::optional<double> attention;
  std::optional<std::uint64_t> max_planning_cycles;
  std::optional<std::uint64_t> max_reasoning_units;

  void apply(Thresholds& t) const {
    if (theta_hi) t.theta_hi = *theta_hi;
    if (theta_lo) t.theta_lo = *theta_lo;
    if (habit_similarity) t.habit_similarity = *habit_similarity;
    if (attention) t.attention = *attention;
  }

  void apply(AgentConfig& c) const {
    apply(c.thresholds);
    if (max_planning_cycles) c.max_planning_cycles = *max_planning_cycles;
    if (max_reasoning_units) c.max_reasoning_units = *max_reasoning_units;
  }
};

/// Everything a run depends on. Tabular runs are a pure function of this document.
struct RunConfig {
  std::string scenario = "tmaze";
  std::uint64_t seed = 0;
  std::string provider = "tabular";
  nlohmann::json provider_config = nlohmann::json::object();
  std::string topology;
  std::vector<std::string> families = arc::kFamilies;
  std::size_t count = 50;
  std::vector<std::string> library;
  std::optional<std::size_t> episodes;
  std::optional<double> prior_left;
  std::optional<std::size_t> flip_episode;
  Overrides overrides;
  std::string output_dir = "run";
  std::uint64_t tick_interval_ms = 0;

  std::size_t effective_episodes() const { return episodes.value_or(scenario == "corrigibility" ? 6 : 20); }
  double effective_prior_left() const { return prior_left.value_or(scenario == "corrigibility" ? 0.99 : 0.5); }
  std::optional<std::size_t> effective_flip_episode() const {
    if (flip_episode) return flip_episode;
    if (scenario == "corrigibility") return 3;
    return std::nullopt;
  }
  std::vector<std::string> effective_library() const {
    if (!library.empty()) return library;
    std::vector<std::string> out;
    for (const auto& f : arc::kFamilies) {
      if (f != arc::kWithheldFamily) out.push_back(f);
    }
    return out;
  }

  void validate() const {
    auto bad = [](const std::string& field, const std::string& what) {
      fail(ErrorCode::ConfigError, "field '" + field + "': " + what);
    };
    if (std::find(kScenarios.begin(), kScenarios.end(), scenario) == kScenarios.end()) {
      bad("scenario", "unknown scenario '" + scenario + "' (tmaze, corrigibility, arclite)");
    }
    if (provider != "tabular" && provider != "external") bad("provider", "must be tabular or external");
    if (families.empty()) bad("families", "needs at least one family");
    for (const auto& f : families) {
      if (!arc::is_family(f)) bad("families", "unknown family '" + f + "'");
    }
    for (const auto& f : library) {
      if (!arc::is_family(f)) bad("library", "unknown family '" + f + "'");
    }
    if (count == 0) bad("count", "must be at least 1");
    if (effective_episodes() == 0) bad("episodes", "must be at least 1");
    const double p = effective_prior_left();
    if (!(p > 0.0 && p < 1.0)) bad("prior_left", "must lie strictly between 0 and 1");
    if (auto f = effective_flip_episode(); f && *f >= effective_episodes()) bad("flip_episode", "must precede the last episode");
    if (output_dir.empty()) bad("output_dir", "must be non-empty");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"scenario", c.scenario},
          {"seed", c.seed},
          {"provider", c.provider},
          {"provider_config", c.provider_config},
          {"topology", c.topology},
          {"families", c.families},
          {"count", c.count},
          {"library", c.library},
          {"episodes", opt(c.episodes)},
          {"prior_left", opt(c.prior_left)},
          {"flip_episode", opt(c.flip_episode)},
          {"theta_hi", opt(c.overrides.theta_hi)},
          {"theta_lo", opt(c.overrides.theta_lo)},
          {"habit_similarity", opt(c.overrides.habit_similarity)},
          {"attention", opt(c.overrides.attention)},
          {"max_planning_cycles", opt(c.overrides.max_planning_cycles)},
          {"max_reasoning_units", opt(c.overrides.max_reasoning_units)},
          {"output_dir", c.output_dir},
          {"tick_interval_ms", c.tick_interval_ms}};
}

inline RunConfig run_config_from(const JsonDocument& doc) {
  const detail::FieldReader r(doc, "",
                              {"scenario", "seed", "provider", "provider_config", "topology", "families", "count",
                               "library", "episodes", "prior_left", "flip_episode", "theta_hi", "theta_lo",
                               "habit_similarity", "attention", "max_planning_cycles", "max_reasoning_units",
                               "output_dir", "tick_interval_ms"});
  RunConfig c;
  r.read("scenario", c.scenario);
  r.read("seed", c.seed);
  r.read("provider", c.provider);
  if (r.has("provider_config")) {
    if (!r.raw("provider_config").is_object()) doc.error(r.at("provider_config"), "expected an object");
    c.provider_config = r.raw("provider_config");
  }
  r.read("topology", c.topology);
  r.read("families", c.families);
  r.read("count", c.count);
  r.read("library", c.library);
  r.read("episodes", c.episodes);
  r.read("prior_left", c.prior_left);
  r.read("flip_episode", c.flip_episode);
  r.read("theta_hi", c.overrides.theta_hi);
  r.read("theta_lo", c.overrides.theta_lo);
  r.read("habit_similarity", c.overrides.habit_similarity);
  r.read("attention", c.overrides.attention);
  r.read("max_planning_cycles", c.overrides.max_planning_cycles);
  r.read("max_reasoning_units", c.overrides.max_reasoning_units);
  r.read("output_dir", c.output_dir);
  r.read("tick_interval_ms", c.tick_interval_ms);
  try {
    c.validate();
  } catch (const Error& e) {
    const std::string msg = e.what();
    const auto open = msg.find('\'');
    const auto close = msg.find('\'', open + 1);
    const std::string field = open == std::string::npos ? "" : msg.substr(open + 1, close - open - 1);
    doc.error("/" + field, msg.substr(msg.find(": ") + 2));
  }
  // A relative topology path is resolved against the config file.
  if (!c.topology.empty() && std::filesystem::path(c.topology).is_relative() && !doc.origin().empty() &&
      std::filesystem::exists(doc.origin())) {
    c.topology = (std::filesystem::path(doc.origin()).parent_path() / c.topology).lexically_normal().string();
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from(JsonDocument::from_file(path)); }

/// One agent of a topology document.
struct AgentSpec {
  AgentConfig config;
  GenerativeModel model;
};

struct TopicSpec {
  std::string name;
  std::string owner;
  std::vector<std::string> subscribers;
};

/// Declarative hierarchy: agents in spawn order, topics and the topic of each delegated action.
struct Topology {
  std::vector<AgentSpec> agents;
  std::vector<TopicSpec> topics;
  std::map<std::string, std::string> action_topics;
};

/// Builtin models: "builtin:tmaze" and "builtin:arc-checking". Anything else is a file path.
inline GenerativeModel builtin_model(const std::string& name, const tmaze::Params& tmaze_params) {
  if (name == "builtin:tmaze") return tmaze::make_model(tmaze_params);
  if (name == "builtin:arc-checking") {
    std::vector<arc::Hypothesis> all;
    for (const auto& f : arc::kFamilies) all.push_back({f, arc::family_annotation(f), 0.0, 0.98});
    return arc::checking_model(all, arc::hypothesis_prior(all, 0.05, 0.0));
  }
  fail(ErrorCode::ConfigError, "unknown builtin model '" + name + "'");
}

inline Topology topology_from(const JsonDocument& doc, const tmaze::Params& tmaze_params = {},
                              const Overrides& overrides = {}) {
  const detail::FieldReader top(doc, "", {"agents", "topics", "action_topics"});
  const auto& j = doc.value();
  if (!top.has("agents") || !j.at("agents").is_array() || j.at("agents").empty()) {
    doc.error("/agents", "expected a non-empty array of agents");
  }
  const std::filesystem::path base =
      doc.origin().empty() ? std::filesystem::path(".") : std::filesystem::path(doc.origin()).parent_path();

  Topology t;
  std::set<std::string> ids;
  bool has_root = false;
  for (std::size_t i = 0; i < j.at("agents").size(); ++i) {
    const std::string at = "/agents/" + std::to_string(i);
    const detail::FieldReader r(doc, at,
                                {"id", "role", "parent", "model", "native_actions", "horizon", "thresholds", "budgets"});
    AgentConfig cfg;
    std::optional<GenerativeModel> model;
    r.read("id", cfg.id);
    if (cfg.id.empty()) doc.error(at + "/id", "agent id must be a non-empty string");
    if (ids.count(cfg.id)) doc.error(at + "/id", "duplicate agent id '" + cfg.id + "'");
    r.read("role", cfg.role);
    if (r.has("parent")) {
      std::string parent;
      r.read("parent", parent);
      if (!ids.count(parent)) doc.error(at + "/parent", "unknown parent '" + parent + "' (parents must be listed first)");
      cfg.parent = parent;
    } else {
      if (has_root) doc.error(at + "/parent", "only one agent may omit its parent");
      has_root = true;
    }
    r.read("horizon", cfg.horizon);
    if (cfg.horizon < 1 || cfg.horizon > cfg.horizon_cap) {
      doc.error(at + "/horizon", fmt::format("must lie in [1, {}]", cfg.horizon_cap));
    }
    overrides.apply(cfg);
    if (r.has("thresholds")) {
      const detail::FieldReader th(doc, at + "/thresholds", {"theta_hi", "theta_lo", "habit_similarity", "attention"});
      th.read("theta_hi", cfg.thresholds.theta_hi);
      th.read("theta_lo", cfg.thresholds.theta_lo);
      th.read("habit_similarity", cfg.thresholds.habit_similarity);
      th.read("attention", cfg.thresholds.attention);
    }
    if (r.has("budgets")) {
      const detail::FieldReader b(doc, at + "/budgets", {"max_planning_cycles", "max_reasoning_units"});
      b.read("max_planning_cycles", cfg.max_planning_cycles);
      b.read("max_reasoning_units", cfg.max_reasoning_units);
    }
    if (!r.has("model")) doc.error(at + "/model", "missing");
    try {
      const auto& m = r.raw("model");
      if (m.is_object()) {
        model = model_from_json(m);
      } else if (m.is_string() && m.get<std::string>().rfind("builtin:", 0) == 0) {
        model = builtin_model(m.get<std::string>(), tmaze_params);
      } else if (m.is_string()) {
        std::filesystem::path p = m.get<std::string>();
        if (p.is_relative()) p = base / p;
        model = load_model(p.string());
      } else {
        doc.error(at + "/model", "expected a model object, a path or a builtin name");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError && std::string(e.what()).find(doc.origin() + ":") == 0) throw;
      doc.error(at + "/model", e.what());
    }
    r.read("native_actions", cfg.native_actions);
    for (std::size_t k = 0; k < cfg.native_actions.size(); ++k) {
      if (!find_label(*model->action_labels(), cfg.native_actions[k])) {
        doc.error(at + "/native_actions/" + std::to_string(k),
                  "action '" + cfg.native_actions[k] + "' is not in the agent's model");
      }
    }
    ids.insert(cfg.id);
    t.agents.push_back({std::move(cfg), std::move(*model)});
  }

  if (top.has("topics")) {
    if (!j.at("topics").is_array()) doc.error("/topics", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.at("topics").size(); ++i) {
      const std::string at = "/topics/" + std::to_string(i);
      const detail::FieldReader r(doc, at, {"name", "owner", "subscribers"});
      TopicSpec s;
      r.read("name", s.name);
      r.read("owner", s.owner);
      r.read("subscribers", s.subscribers);
      if (s.name.empty()) doc.error(at + "/name", "topic name must be a non-empty string");
      if (names.count(s.name)) doc.error(at + "/name", "duplicate topic '" + s.name + "'");
      if (!ids.count(s.owner)) doc.error(at + "/owner", "unknown agent '" + s.owner + "'");
      for (std::size_t k = 0; k < s.subscribers.size(); ++k) {
        if (!ids.count(s.subscribers[k])) {
          doc.error(at + "/subscribers/" + std::to_string(k), "unknown agent '" + s.subscribers[k] + "'");
        }
      }
      names.insert(s.name);
      t.topics.push_back(std::move(s));
    }
  }

  if (top.has("action_topics")) {
    const auto& at = j.at("action_topics");
    if (!at.is_object()) doc.error("/action_topics", "expected an object of action -> topic");
    for (const auto& [action, topic] : at.items()) {
      const bool known = topic.is_string() && std::any_of(t.topics.begin(), t.topics.end(), [&](const TopicSpec& s) {
                           return s.name == topic.get<std::string>();
                         });
      if (!known) doc.error("/action_topics/" + action, "must name a topic declared under /topics");
      t.action_topics[action] = topic.get<std::string>();
    }
  }
  return t;
}

inline Topology load_topology(const std::string& path, const tmaze::Params& tmaze_params = {},
                              const Overrides& overrides = {}) {
  return topology_from(JsonDocument::from_file(path), tmaze_params, overrides);
}

/// Spawns the agents and topics in document order.
inline void build_hierarchy(Hierarchy& h, const Topology& t) {
  for (const auto& a : t.agents) h.add_agent(a.config, a.model, "topology");
  for (const auto& topic : t.topics) {
    h.create_topic(topic.name, topic.owner);
    for (const auto& s : topic.subscribers) h.subscribe(topic.name, s);
  }
  for (const auto& [action, topic] : t.action_topics) h.settings().action_topics[action] = topic;
}

}  // namespace aif
