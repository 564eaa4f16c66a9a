#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "aif/agent/budget.hpp"
#include "aif/agent/memory.hpp"
#include "aif/agent/plateau.hpp"
#include "aif/agent/preference_stack.hpp"
#include "aif/core/expected_free_energy.hpp"
#include "aif/core/free_energy.hpp"
#include "aif/core/serialization.hpp"
#include "aif/trace/hash.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

enum class Mode { Deliberative, Perseverative, Habitual };

constexpr const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Deliberative: return "deliberative";
    case Mode::Perseverative: return "perseverative";
    case Mode::Habitual: return "habitual";
  }
  return "deliberative";
}

struct Thresholds {
  double theta_hi = 1.0;
  double theta_lo = 0.1;
  double habit_similarity = 0.9;
  /// Error reports above this go upward; parents consume children's reports above it.
  double attention = 0.5;
};

struct AgentConfig {
  std::string id;
  std::string role;
  std::optional<std::string> parent;
  Thresholds thresholds;
  std::uint64_t max_planning_cycles = 64;
  std::uint64_t max_reasoning_units = 4096;
  std::size_t horizon = 1;
  std::size_t horizon_cap = kDefaultHorizonCap;
  std::size_t working_capacity = kDefaultWorkingCapacity;
  std::size_t retrieval_k = kDefaultRetrievalK;
  PlateauDetector vfe_plateau{8, 0.02, PlateauTarget::Vfe};
  PlateauDetector efe_plateau{8, 0.02, PlateauTarget::Efe};
  std::size_t tool_threshold = 3;
  /// Actions the agent can carry out itself. Empty means every model action.
  std::vector<std::string> native_actions;
  std::string layer0_provenance = "seed";
  std::uint64_t generation = 0;
};

/// Everything mode selection looks at. Recorded verbatim in the trace.
struct ModeInputs {
  double last_f = 0.0;
  double similarity = 0.0;
  bool preferences_dirty = false;
  Thresholds thresholds;
};

/// A pending preference change always forces deliberation; otherwise habit takes
/// precedence, then the F thresholds.
inline Mode select_mode_rule(const ModeInputs& in) {
  if (in.preferences_dirty) return Mode::Deliberative;
  if (in.similarity >= in.thresholds.habit_similarity) return Mode::Habitual;
  if (in.last_f > in.thresholds.theta_hi) return Mode::Deliberative;
  if (in.last_f < in.thresholds.theta_lo) return Mode::Perseverative;
  return Mode::Deliberative;
}

inline json to_json(const ModeInputs& in) {
  return {{"last_f", in.last_f},
          {"similarity", in.similarity},
          {"preferences_dirty", in.preferences_dirty},
          {"theta_hi", in.thresholds.theta_hi},
          {"theta_lo", in.thresholds.theta_lo},
          {"habit_similarity", in.thresholds.habit_similarity}};
}

/// Replayed (non-enumerated) action sequences carry this id.
inline constexpr std::size_t kReplayPolicyId = kNoopPolicyId - 1;

struct PlanResult {
  Mode mode = Mode::Deliberative;
  Policy policy = Policy::noop();
  std::vector<EfeReport> reports;
  std::vector<RankEntry> ranking;
  std::vector<std::size_t> removed;
  std::optional<CategoricalDist> predicted_observations;
  bool postponed = false;
  bool lockout = false;
  std::uint64_t cycle = 0;
};

struct ConsolidationResult {
  bool written = false;
  bool avoid = false;
  std::vector<std::string> tools_registered;
};

struct TaskOutcome {
  std::string outcome;
  bool success = false;
  std::string annotation;
};

/// Least-squares slope of a series against its index.
inline double trend_slope(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += static_cast<double>(i);
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (static_cast<double>(i) - mx) * (y[i] - my);
    den += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
  }
  return num / den;
}

/// One node of the hierarchy. Owns its beliefs, memories and preference stack exclusively.
class Agent {
 public:
  using ErrorHook = std::function<void(const Agent&, const FreeEnergyReport&, bool zero_evidence)>;

  Agent(AgentConfig config, GenerativeModel model, TraceSink& trace)
      : config_(std::move(config)),
        base_model_(std::move(model)),
        model_(base_model_),
        stack_(base_model_.c(), config_.layer0_provenance),
        belief_(base_model_.d().dist),
        predicted_(base_model_.d().dist),
        working_(config_.working_capacity),
        episodic_(config_.retrieval_k),
        trace_(&trace) {
    require(!config_.id.empty(), ErrorCode::ConfigError, "agent id must be non-empty");
    require(config_.horizon >= 1 && config_.horizon <= config_.horizon_cap, ErrorCode::ConfigError,
            "horizon must lie in [1, horizon_cap]");
    budget_.max_planning_cycles = config_.max_planning_cycles;
    budget_.max_reasoning_units = config_.max_reasoning_units;
    for (const auto& a : config_.native_actions) base_model_.action_index(a);
    recompose();
  }

  const std::string& id() const noexcept { return config_.id; }
  const std::string& role() const noexcept { return config_.role; }
  const AgentConfig& config() const noexcept { return config_; }
  const std::optional<std::string>& parent() const noexcept { return config_.parent; }
  void set_parent(std::optional<std::string> p) { config_.parent = std::move(p); }

  const GenerativeModel& model() const noexcept { return model_; }
  const GenerativeModel& base_model() const noexcept { return base_model_; }
  const CategoricalDist& belief() const noexcept { return belief_; }
  const PreferenceStack& stack() const noexcept { return stack_; }
  const std::optional<PreferenceFlow>& parent_flow() const noexcept { return parent_flow_; }
  Mode mode() const noexcept { return mode_; }
  const ComplexityBudget& budget() const noexcept { return budget_; }
  const WorkingMemory& working() const noexcept { return working_; }
  const EpisodicMemory& episodic() const noexcept { return episodic_; }
  const ProceduralMemory& procedural() const noexcept { return procedural_; }
  ProceduralMemory& procedural() noexcept { return procedural_; }
  const std::vector<std::pair<std::uint64_t, double>>& vfe_history() const noexcept { return vfe_history_; }
  const std::vector<std::pair<std::uint64_t, double>>& efe_history() const noexcept { return efe_history_; }
  const std::deque<std::string>& committed() const noexcept { return committed_; }
  std::uint64_t cycles() const noexcept { return cycle_; }
  bool preferences_dirty() const noexcept { return prefs_dirty_; }
  const std::optional<FreeEnergyReport>& last_report() const noexcept { return last_report_; }
  TraceSink& trace() const noexcept { return *trace_; }

  void set_error_hook(ErrorHook hook) { error_hook_ = std::move(hook); }

  void set_horizon(std::size_t h) {
    require(h >= 1 && h <= config_.horizon_cap, ErrorCode::CapExceeded,
            "horizon " + std::to_string(h) + " outside [1, cap]");
    config_.horizon = h;
  }

  void set_generation(std::uint64_t g) noexcept { config_.generation = g; }

  /// Replaces the world model. The observation vocabulary, and with it layer 0, must not change.
  void set_model(GenerativeModel model) {
    require(*model.observation_labels() == *base_model_.observation_labels(), ErrorCode::VocabularyMismatch,
            "replacement model changes the observation vocabulary");
    base_model_ = std::move(model);
    recompose();
    reset_belief();
  }

  /// Back to the prior D; clears any committed plan.
  void reset_belief() {
    belief_ = model_.d().dist;
    predicted_ = belief_;
    committed_.clear();
  }

  bool is_native(const std::string& action) const {
    if (procedural_.has(action)) return true;
    if (config_.native_actions.empty()) return find_label(*base_model_.action_labels(), action).has_value();
    for (const auto& a : config_.native_actions) {
      if (a == action) return true;
    }
    return false;
  }

  // ---- task lifecycle ----

  void begin_task(std::string task_id, std::vector<double> features) {
    task_ = TaskState{};
    task_.id = std::move(task_id);
    task_.features = std::move(features);
    budget_.reset();
    trace_->emit(id(), "TaskStarted", {{"task_id", task_.id}, {"features", task_.features}});
  }

  const std::string& task_id() const noexcept { return task_.id; }

  // ---- perception ----

  /// Bayesian update from the predicted prior. F is reported at the posterior, so it equals the
  /// surprise -ln P(o). Impossible observations leave the belief untouched and report the ceiling.
  FreeEnergyReport perceive(const std::string& observation) {
    const std::size_t o = model_.observation_index(observation);
    const std::uint64_t tick = trace_->tick();
    require(vfe_history_.empty() || tick > vfe_history_.back().first, ErrorCode::InvalidModel,
            "perception ticks must strictly increase");

    FreeEnergyReport report;
    bool zero_evidence = false;
    try {
      CategoricalDist posterior = update_belief(predicted_, model_.a(), o);
      report = compute_vfe(posterior, predicted_, model_.a(), o);
      belief_ = std::move(posterior);
      predicted_ = belief_;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroEvidence) throw;
      zero_evidence = true;
      report = surprise_ceiling_report();
    }

    const double f = report.value();
    vfe_history_.emplace_back(tick, f);
    vfe_values_.push_back(f);
    working_.push({observation, "", report});
    task_.observations.push_back(observation);
    task_.f_series.push_back(f);
    last_report_ = report;

    trace_->emit(id(), "Perception",
                 {{"observation", observation},
                  {"f", f},
                  {"zero_evidence", zero_evidence},
                  {"report", to_json(report)},
                  {"belief", std::vector<double>(belief_.probs().begin(), belief_.probs().end())}});
    if (error_hook_ && (zero_evidence || f > config_.thresholds.attention)) {
      error_hook_(*this, report, zero_evidence);
    }
    return report;
  }

  // ---- mode selection ----

  ModeInputs mode_inputs() const {
    ModeInputs in;
    in.last_f = vfe_values_.empty() ? 0.0 : vfe_values_.back();
    in.preferences_dirty = prefs_dirty_;
    in.thresholds = config_.thresholds;
    if (auto hit = habit_candidate()) in.similarity = hit->similarity;
    return in;
  }

  Mode select_mode() {
    require(!vfe_values_.empty(), ErrorCode::InvalidModel, "mode selection needs a perception first");
    const ModeInputs in = mode_inputs();
    mode_ = select_mode_rule(in);
    json payload = {{"mode", to_string(mode_)}, {"inputs", to_json(in)}};
    if (mode_ == Mode::Habitual) payload["episode"] = habit_candidate()->index;
    trace_->emit(id(), "ModeSelected", std::move(payload));
    return mode_;
  }

  // ---- planning ----

  PlanResult plan() {
    PlanResult r;
    r.cycle = ++cycle_;
    if (!budget_.can_plan()) return postpone(r, "the planning-cycle limit was reached");
    budget_.start_cycle();

    if (mode_ == Mode::Habitual) {
      auto hit = habit_candidate();
      if (hit && !episodic_.at(hit->index).actions.empty()) {
        task_.habit_used = true;
        return commit_replay(r, episodic_.at(hit->index).actions, Mode::Habitual,
                             {{"episode", hit->index}, {"similarity", hit->similarity}});
      }
      fall_back("no replayable episode");
    }
    if (mode_ == Mode::Perseverative) {
      if (!committed_.empty()) {
        return commit_replay(r, {committed_.begin(), committed_.end()}, Mode::Perseverative, json::object());
      }
      fall_back("no committed plan to continue");
    }
    return deliberate(r);
  }

  /// Thermostat: abandons the current task with a Postponed record and a noop plan.
  PlanResult postpone_task(const std::string& issue) {
    PlanResult r;
    r.cycle = ++cycle_;
    return postpone(r, issue);
  }

  /// Pops the next action of the committed plan.
  std::optional<std::string> next_action() {
    if (committed_.empty()) return std::nullopt;
    std::string a = std::move(committed_.front());
    committed_.pop_front();
    return a;
  }

  /// Advances the predicted prior through B for an executed action.
  void act(const std::string& action) {
    predicted_ = predict_states(model_, belief_, model_.action_index(action));
    working_.annotate_action(action);
    task_.actions.push_back(action);
    trace_->emit(id(), "ActionTaken", {{"action", action}});
  }

  /// Records an action performed on the agent's behalf without moving the belief.
  void note_action(const std::string& action) { task_.actions.push_back(action); }

  // ---- preferences ----

  void update_preferences(std::size_t layer, PreferenceModel fragment, std::string provenance,
                          const std::string& source = "system") {
    const std::string before = layer < stack_.size() ? stack_.layer_hash(layer) : std::string();
    const std::string stack_before = stack_.stack_hash();
    try {
      stack_.set_layer(layer, fragment, provenance);
    } catch (const Error& e) {
      trace_->emit(id(), "PreferenceWriteRejected",
                   {{"layer", layer},
                    {"reason", std::string(to_string(e.code()))},
                    {"message", e.what()},
                    {"layer0_hash", stack_.layer0_hash()},
                    {"provenance", provenance}},
                   source);
      throw;
    }
    trace_->emit(id(), "PreferenceChanged",
                 {{"layer", layer},
                  {"before_hash", before},
                  {"after_hash", stack_.layer_hash(layer)},
                  {"stack_before", stack_before},
                  {"stack_after", stack_.stack_hash()},
                  {"layer0_hash", stack_.layer0_hash()},
                  {"log_pref", fragment.log_pref},
                  {"precision", fragment.precision},
                  {"provenance", provenance}},
                 source);
    recompose();
    prefs_dirty_ = true;
  }

  /// Top-down flow from the parent; replaces the previous flow.
  void receive_flow(PreferenceFlow flow, const std::string& source = "system") {
    stack_.compose(*base_model_.observation_labels(), flow);  // validates the vocabulary
    const std::string before = parent_flow_ ? content_hash(to_json(*parent_flow_)) : std::string();
    parent_flow_ = std::move(flow);
    recompose();
    prefs_dirty_ = true;
    trace_->emit(id(), "PreferenceChanged",
                 {{"layer", -1},
                  {"before_hash", before},
                  {"after_hash", content_hash(to_json(*parent_flow_))},
                  {"layer0_hash", stack_.layer0_hash()},
                  {"flow", to_json(*parent_flow_)},
                  {"provenance", "flow from " + parent_flow_->from}},
                 source);
  }

  // ---- plateaus ----

  bool vfe_plateau() const { return config_.vfe_plateau.detect(vfe_values_); }
  bool efe_plateau() const { return config_.efe_plateau.detect(efe_values_); }

  /// Plateau over the current task only.
  bool task_vfe_plateau() const { return config_.vfe_plateau.detect(task_.f_series); }

  double recent_vfe_level() const {
    const std::size_t w = std::min(config_.vfe_plateau.window, vfe_values_.size());
    if (w == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = vfe_values_.size() - w; i < vfe_values_.size(); ++i) s += vfe_values_[i];
    return s / static_cast<double>(w);
  }

  // ---- consolidation ----

  ConsolidationResult consolidate(const TaskOutcome& outcome) {
    ConsolidationResult result;
    if (task_.observations.empty() && task_.actions.empty()) {
      trace_->emit(id(), "EpisodeConsolidated", {{"task_id", task_.id}, {"written", false}});
      return result;
    }
    Episode e;
    e.task_id = task_.id;
    e.observations = task_.observations;
    e.actions = task_.actions;
    e.outcome = outcome.outcome;
    e.final_f = task_.f_series.empty() ? 0.0 : task_.f_series.back();
    e.features = task_.features;
    e.f_series = task_.f_series;
    e.final_state = belief_.labels()[belief_.argmax()];
    e.annotation = outcome.annotation;
    e.success = outcome.success;
    e.avoid = trend_slope(task_.f_series) > 0.0;
    episodic_.write(e);
    result.written = true;
    result.avoid = e.avoid;

    if (e.success && !e.avoid) result.tools_registered = extract_tools();
    trace_->emit(id(), "EpisodeConsolidated",
                 {{"task_id", e.task_id},
                  {"written", true},
                  {"avoid", e.avoid},
                  {"success", e.success},
                  {"outcome", e.outcome},
                  {"episodes", episodic_.size()},
                  {"tools_registered", result.tools_registered}});
    return result;
  }

  /// Writes an episode directly; used when seeding or cloning memories.
  void remember(Episode e) { episodic_.write(std::move(e)); }

  /// Status payload for snapshots.
  json snapshot() const {
    json j = {{"id", id()},
              {"role", role()},
              {"parent", config_.parent ? json(*config_.parent) : json(nullptr)},
              {"mode", to_string(mode_)},
              {"generation", config_.generation},
              {"layer0_hash", stack_.layer0_hash()},
              {"stack_hash", stack_.stack_hash()},
              {"layers", stack_.size()},
              {"observation_labels", *model_.observation_labels()},
              {"effective_log_pref", model_.c().log_pref},
              {"hard_constraints", model_.c().hard_constraints},
              {"budget",
               {{"planning_cycles", budget_.planning_cycles},
                {"max_planning_cycles", budget_.max_planning_cycles},
                {"reasoning_units", budget_.reasoning_units},
                {"max_reasoning_units", budget_.max_reasoning_units},
                {"lifetime_units", budget_.lifetime_units}}},
              {"episodes", episodic_.size()},
              {"tools", procedural_.size()}};
    j["last_f"] = vfe_values_.empty() ? json(nullptr) : json(vfe_values_.back());
    j["last_g"] = efe_values_.empty() ? json(nullptr) : json(efe_values_.back());
    return j;
  }

 private:
  struct TaskState {
    std::string id;
    std::vector<double> features;
    std::vector<std::string> observations;
    std::vector<std::string> actions;
    std::vector<double> f_series;
    bool habit_used = false;
  };

  void recompose() {
    model_ = base_model_.with_preferences(stack_.compose(*base_model_.observation_labels(), parent_flow_));
    if (!same_labels(belief_.label_set(), model_.state_labels())) {
      belief_ = model_.d().dist;
      predicted_ = belief_;
    }
  }

  std::optional<Retrieval> habit_candidate() const {
    if (task_.habit_used || task_.features.empty()) return std::nullopt;
    std::optional<Retrieval> best;
    for (const auto& hit : episodic_.retrieve(task_.features, episodic_.size())) {
      const Episode& e = episodic_.at(hit.index);
      if (!e.success || e.avoid) continue;
      best = hit;
      break;
    }
    return best;
  }

  FreeEnergyReport surprise_ceiling_report() const {
    FreeEnergyReport r;
    r.accuracy = kSurpriseCeiling;
    r.log_evidence = -kSurpriseCeiling;
    r.f_form1 = r.f_form2 = kSurpriseCeiling;
    r.consensus = true;
    r.narrative_form1 = narrative::vfe_form1(r.complexity, r.accuracy, r.f_form1);
    r.narrative_form2 = narrative::vfe_form2(r.belief_divergence, r.log_evidence, r.f_form2);
    return r;
  }

  void fall_back(const char* reason) {
    mode_ = Mode::Deliberative;
    trace_->emit(id(), "ModeSelected",
                 {{"mode", to_string(mode_)}, {"fallback", reason}, {"inputs", to_json(mode_inputs())}});
  }

  std::string context_key() const {
    return content_hash({{"belief", std::vector<double>(belief_.probs().begin(), belief_.probs().end())},
                         {"horizon", config_.horizon}});
  }

  json vfe_justification() const {
    return last_report_ ? to_json(*last_report_) : json(nullptr);
  }

  PlanResult commit_replay(PlanResult& r, std::vector<std::string> actions, Mode mode, json extra) {
    r.mode = mode;
    r.policy = Policy{kReplayPolicyId, std::move(actions)};
    committed_.assign(r.policy.actions.begin(), r.policy.actions.end());
    json payload = {{"cycle", r.cycle},
                    {"mode", to_string(mode)},
                    {"policy_id", nullptr},
                    {"actions", r.policy.actions},
                    {"justification", "vfe"},
                    {"vfe_report", vfe_justification()},
                    {"context", context_key()}};
    payload.update(extra);
    trace_->emit(id(), "PlanSelected", std::move(payload));
    return r;
  }

  PlanResult postpone(PlanResult& r, const std::string& issue) {
    r.postponed = true;
    r.policy = Policy::noop();
    committed_.clear();
    trace_->emit(id(), "Postponed",
                 {{"task_id", task_.id},
                  {"planning_cycles", budget_.planning_cycles},
                  {"reasoning_units", budget_.reasoning_units},
                  {"max_reasoning_units", budget_.max_reasoning_units},
                  {"unresolved", issue},
                  {"message",
                   fmt::format("We have spent {} planning cycles and consumed {} reasoning units attempting "
                               "this task, yet {}. To optimize resource allocation, we will postpone this "
                               "task and proceed to the next one.",
                               budget_.planning_cycles, budget_.reasoning_units, issue)}});
    trace_->emit(id(), "PlanSelected",
                 {{"cycle", r.cycle},
                  {"mode", to_string(r.mode)},
                  {"policy_id", nullptr},
                  {"actions", json::array()},
                  {"noop", true},
                  {"postponed", true},
                  {"justification", "vfe"},
                  {"vfe_report", vfe_justification()},
                  {"context", context_key()}});
    return r;
  }

  PlanResult deliberate(PlanResult& r) {
    r.mode = Mode::Deliberative;
    auto policies = enumerate_policies(model_, config_.horizon, config_.horizon_cap);
    std::uint64_t charged = 0;
    bool exhausted = false;
    r.reports.reserve(policies.size());
    for (const auto& p : policies) {
      if (!budget_.try_charge(1)) {
        exhausted = true;
        break;
      }
      ++charged;
      r.reports.push_back(compute_efe(p, model_, belief_));
      const auto& e = r.reports.back();
      trace_->emit(id(), "EfeEvaluated",
                   {{"cycle", r.cycle},
                    {"policy_id", e.policy.id},
                    {"actions", e.policy.actions},
                    {"info_gain", e.info_gain},
                    {"pragmatic", e.pragmatic},
                    {"ambiguity", e.ambiguity},
                    {"risk", e.risk},
                    {"g_form1", e.g_form1},
                    {"g_form2", e.g_form2},
                    {"consensus", e.consensus}});
    }
    trace_->emit(id(), "BudgetCharged",
                 {{"cycle", r.cycle},
                  {"units", charged},
                  {"consumed", budget_.reasoning_units},
                  {"max", budget_.max_reasoning_units},
                  {"lifetime", budget_.lifetime_units}});
    if (exhausted) return postpone(r, "the reasoning budget ran out before every plan was scored");

    bool consensus = true;
    try {
      r.ranking = rank_policies(r.reports);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConsensus) throw;
      consensus = false;
      r.ranking = rank_policies(r.reports, true);
      trace_->emit(id(), "ConsensusFailure", {{"cycle", r.cycle}, {"message", e.what()}});
    }
    auto filtered = apply_hard_constraints(r.ranking, model_.c(), r.reports);
    r.removed = filtered.removed;
    r.lockout = filtered.lockout;
    if (filtered.lockout) {
      trace_->emit(id(), "ConstraintLockout",
                   {{"cycle", r.cycle}, {"removed", filtered.removed}, {"hard_constraints", model_.c().hard_constraints}});
    }

    json ranking = json::array();
    for (std::size_t i = 0; i < r.ranking.size() && i < 16; ++i) {
      ranking.push_back({r.ranking[i].policy_id, r.ranking[i].g});
    }
    json payload = {{"cycle", r.cycle},
                    {"mode", to_string(r.mode)},
                    {"ranking", std::move(ranking)},
                    {"removed", r.removed},
                    {"consensus", consensus},
                    {"context", context_key()}};

    if (filtered.lockout) {
      r.policy = Policy::noop();
      committed_.clear();
      payload["policy_id"] = nullptr;
      payload["actions"] = json::array();
      payload["noop"] = true;
      payload["justification"] = "vfe";
      payload["vfe_report"] = vfe_justification();
    } else {
      const EfeReport& best = r.reports[filtered.ranking.front().policy_id];
      r.policy = best.policy;
      r.predicted_observations = best.steps.front().predicted_observations;
      efe_history_.emplace_back(trace_->tick(), best.value());
      efe_values_.push_back(best.value());
      committed_.assign(best.policy.actions.begin(), best.policy.actions.end());
      payload["policy_id"] = best.policy.id;
      payload["actions"] = best.policy.actions;
      payload["justification"] = "efe";
      payload["efe_report"] = to_json(best);
      payload["predicted_observations"] = to_json(*r.predicted_observations);
    }
    prefs_dirty_ = false;
    trace_->emit(id(), "PlanSelected", std::move(payload));
    return r;
  }

  /// Registers action macros seen in at least `tool_threshold` successful episodes.
  std::vector<std::string> extract_tools() {
    std::map<std::vector<std::string>, std::size_t> counts;
    for (const auto& e : episodic_.episodes()) {
      if (!e.success || e.avoid) continue;
      std::set<std::vector<std::string>> seen;
      for (std::size_t len = 2; len <= 4; ++len) {
        for (std::size_t i = 0; i + len <= e.actions.size(); ++i) {
          seen.insert({e.actions.begin() + static_cast<std::ptrdiff_t>(i),
                       e.actions.begin() + static_cast<std::ptrdiff_t>(i + len)});
        }
      }
      for (const auto& s : seen) ++counts[s];
    }
    std::vector<std::string> added;
    for (const auto& [seq, n] : counts) {
      if (n < config_.tool_threshold) continue;
      std::string name = "macro:" + fmt::format("{}", fmt::join(seq, ">"));
      Tool t{name, "state reached before " + seq.front(), "state after " + seq.back(), seq, 0, 0.0};
      if (procedural_.add(std::move(t))) added.push_back(name);
    }
    return added;
  }

  AgentConfig config_;
  GenerativeModel base_model_;
  GenerativeModel model_;
  PreferenceStack stack_;
  std::optional<PreferenceFlow> parent_flow_;
  CategoricalDist belief_;
  CategoricalDist predicted_;
  Mode mode_ = Mode::Deliberative;
  ComplexityBudget budget_;
  WorkingMemory working_;
  EpisodicMemory episodic_;
  ProceduralMemory procedural_;
  std::vector<std::pair<std::uint64_t, double>> vfe_history_;
  std::vector<std::pair<std::uint64_t, double>> efe_history_;
  std::vector<double> vfe_values_;
  std::vector<double> efe_values_;
  std::deque<std::string> committed_;
  std::optional<FreeEnergyReport> last_report_;
  bool prefs_dirty_ = false;
  std::uint64_t cycle_ = 0;
  TaskState task_;
  TraceSink* trace_;
  ErrorHook error_hook_;
};

}  // namespace aif
