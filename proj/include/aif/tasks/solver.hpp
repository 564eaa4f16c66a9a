#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "aif/agent/agent.hpp"
#include "aif/hierarchy/hierarchy.hpp"
#include "aif/reasoning/provider.hpp"
#include "aif/tasks/arc_lite.hpp"

namespace aif::arc {

inline const std::vector<std::string> kCheckObservations = {"idle", "match", "mismatch"};

struct SolverSettings {
  std::string root_id = "solver";
  std::string color_topic = "color";
  std::size_t colorists = 2;
  /// Posterior mass that must agree with the leading hypothesis before its prediction is committed.
  double commit_mass = 0.95;
  /// Prior mass on "none of the proposed hypotheses".
  double other_prior = 0.05;
  /// Prior weight per unit of feature affinity.
  double affinity_gain = 4.0;
  std::uint64_t max_planning_cycles = 40;
  std::uint64_t max_reasoning_units = 4096;
  Thresholds thresholds;
  /// Called at every tick boundary, before the clock advances.
  std::function<void(Agent& root)> at_tick;
};

struct TaskRecord {
  std::string task_id;
  std::string family;
  /// solved, wrong or postponed.
  std::string status;
  bool correct = false;
  std::optional<std::string> hypothesis;
  std::vector<Grid> predictions;
  std::vector<double> f_series;
  std::vector<double> g_series;
  std::vector<std::string> actions;
  std::vector<std::string> pathways;
  std::uint64_t planning_cycles = 0;
  std::uint64_t reasoning_units = 0;
  bool plateau = false;
  std::string reason;
};

inline nlohmann::json to_json(const TaskRecord& r) {
  return {{"task_id", r.task_id},
          {"family", r.family},
          {"status", r.status},
          {"correct", r.correct},
          {"hypothesis", r.hypothesis ? nlohmann::json(*r.hypothesis) : nlohmann::json(nullptr)},
          {"predictions", r.predictions},
          {"f_series", r.f_series},
          {"g_series", r.g_series},
          {"actions", r.actions},
          {"pathways", r.pathways},
          {"planning_cycles", r.planning_cycles},
          {"reasoning_units", r.reasoning_units},
          {"plateau", r.plateau},
          {"reason", r.reason}};
}

/// A proposed hypothesis the root can check against the train pairs.
struct Hypothesis {
  std::string family;
  std::string annotation;
  double affinity = 0.0;
  /// P(match | hypothesis holds), read from the fragment.
  double accuracy = 0.98;
};

inline std::string state_label(const std::string& h, const std::string& tested) { return h + "|tested:" + tested; }

/// States are (true hypothesis or "other") x (last hypothesis tested or "none"); a check reports
/// match or mismatch for the hypothesis it tested.
inline GenerativeModel checking_model(const std::vector<Hypothesis>& hs, const std::vector<double>& prior) {
  require(!hs.empty(), ErrorCode::NoHypothesis, "no hypothesis to check");
  require(prior.size() == hs.size() + 1, ErrorCode::InvalidModel, "prior needs one entry per hypothesis plus other");
  const std::size_t k = hs.size();
  const std::size_t n = (k + 1) * (k + 1);
  auto index = [&](std::size_t h, std::size_t t) { return h * (k + 1) + t; };
  std::vector<std::string> names;
  for (const auto& h : hs) names.push_back(h.family);
  names.push_back("other");

  ModelSpec spec;
  for (std::size_t h = 0; h <= k; ++h) {
    for (std::size_t t = 0; t <= k; ++t) spec.states.push_back(state_label(names[h], t == 0 ? "none" : names[t - 1]));
  }
  spec.observations = kCheckObservations;
  for (const auto& h : hs) spec.actions.push_back(test_action(h.family));
  spec.a.assign(n, std::vector<double>(3, 0.0));
  for (std::size_t h = 0; h <= k; ++h) {
    for (std::size_t t = 0; t <= k; ++t) {
      auto& row = spec.a[index(h, t)];
      if (t == 0) {
        row[0] = 1.0;
        continue;
      }
      const double acc = hs[t - 1].accuracy;
      row[1] = h == t - 1 ? acc : 1.0 - acc;
      row[2] = 1.0 - row[1];
    }
  }
  for (std::size_t a = 0; a < k; ++a) {
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t h = 0; h <= k; ++h) {
      for (std::size_t t = 0; t <= k; ++t) m[index(h, t)][index(h, a + 1)] = 1.0;
    }
    spec.b.push_back(std::move(m));
    spec.b_annotations.push_back("Checking " + hs[a].family + " against the train pairs leaves the task unchanged.");
  }
  spec.c.log_pref = {0.0, 1.0, -1.0};
  spec.c.annotations = {"Prefer checks that confirm a hypothesis."};
  spec.d.assign(n, 0.0);
  for (std::size_t h = 0; h <= k; ++h) spec.d[index(h, 0)] = prior[h];
  spec.d_annotations = {"Hypotheses whose feature profile fits the task are more likely.",
                        "Nothing has been checked yet."};
  return build_model(spec);
}

/// other_prior on "other"; the rest in proportion to exp(gain * affinity).
inline std::vector<double> hypothesis_prior(const std::vector<Hypothesis>& hs, double other_prior, double gain) {
  std::vector<double> w;
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& h : hs) peak = std::max(peak, gain * h.affinity);
  double z = 0.0;
  for (const auto& h : hs) {
    w.push_back(std::exp(gain * h.affinity - peak));
    z += w.back();
  }
  for (double& v : w) v = (1.0 - other_prior) * v / z;
  w.push_back(other_prior);
  return w;
}

/// Reads a candidate into a checkable hypothesis. Fragments must be the holds/fails check layout.
inline std::optional<Hypothesis> checkable(const HypothesisCandidate& c) {
  if (!is_family(c.id)) return std::nullopt;
  const GenerativeModel m = validate_fragment(c);
  const auto holds = find_label(*m.state_labels(), "holds");
  const auto match = find_label(*m.observation_labels(), "match");
  if (!holds || !match) return std::nullopt;
  return Hypothesis{c.id, c.annotation, c.affinity, m.a().probability(*holds, *match)};
}

/// Root planner plus colorist children. The root checks geometric hypotheses itself and
/// delegates color substitution checks over the color topic.
class ArcSolver {
 public:
  ArcSolver(Hierarchy& hierarchy, Provider& provider, SolverSettings settings = {})
      : h_(hierarchy), provider_(provider), settings_(std::move(settings)) {
    std::vector<Hypothesis> all;
    std::vector<std::string> native;
    for (const auto& f : kFamilies) {
      all.push_back({f, family_annotation(f), 0.0, 0.98});
      if (f != "color_map") native.push_back(test_action(f));
    }
    if (!h_.has(settings_.root_id)) {
      AgentConfig cfg;
      cfg.id = settings_.root_id;
      cfg.role = "grid transformation solver";
      cfg.thresholds = settings_.thresholds;
      cfg.max_planning_cycles = settings_.max_planning_cycles;
      cfg.max_reasoning_units = settings_.max_reasoning_units;
      cfg.native_actions = native;
      h_.add_agent(cfg, checking_model(all, hypothesis_prior(all, settings_.other_prior, 0.0)));
      h_.create_topic(settings_.color_topic, settings_.root_id);
      for (std::size_t i = 1; i <= settings_.colorists; ++i) {
        AgentConfig w;
        w.id = fmt::format("colorist-{}", i);
        w.role = "colorist";
        w.parent = settings_.root_id;
        w.thresholds = settings_.thresholds;
        w.native_actions = {test_action("color_map")};
        h_.add_agent(w, checking_model(all, hypothesis_prior(all, settings_.other_prior, 0.0)));
        h_.subscribe(settings_.color_topic, w.id);
      }
    }
    h_.settings().action_topics[test_action("color_map")] = settings_.color_topic;
  }

  Hierarchy& hierarchy() noexcept { return h_; }
  const SolverSettings& settings() const noexcept { return settings_; }

  TaskRecord solve(const GridTask& task) {
    Agent& root = h_.agent(settings_.root_id);
    TraceSink& trace = h_.trace();
    TaskRecord rec;
    rec.task_id = task.id;
    rec.family = task.family;

    TaskContext ctx;
    ctx.task_id = task.id;
    ctx.examples = pairs_to_json(task.train);
    ctx.features = task_features(task.train);
    for (const auto& hit : root.episodic().retrieve(ctx.features)) {
      ctx.retrieved.push_back(root.episodic().at(hit.index).annotation);
    }
    std::vector<Hypothesis> hs;
    for (const auto& c : provider_.propose_hypotheses(ctx)) {
      if (auto h = checkable(c)) hs.push_back(*h);
    }
    require(!hs.empty(), ErrorCode::NoHypothesis, "no checkable hypothesis for '" + task.id + "'");

    const auto prior = hypothesis_prior(hs, settings_.other_prior, settings_.affinity_gain);
    root.set_model(checking_model(hs, prior));
    root.begin_task(task.id, ctx.features);
    nlohmann::json proposed = nlohmann::json::array();
    for (std::size_t i = 0; i < hs.size(); ++i) {
      proposed.push_back({{"id", hs[i].family}, {"affinity", hs[i].affinity}, {"prior", prior[i]}});
    }
    trace.emit(root.id(), "HypothesesProposed",
               {{"task_id", task.id}, {"provider", provider_.capabilities().name}, {"hypotheses", proposed}});

    // Predictions per hypothesis on the test inputs; nullopt when the hypothesis cannot produce one.
    std::vector<std::optional<std::vector<Grid>>> predictions;
    for (const auto& h : hs) {
      std::vector<Grid> out;
      bool ok = true;
      for (const auto& p : task.test) {
        auto g = predict(h.family, task.train, p.input);
        if (!g) {
          ok = false;
          break;
        }
        out.push_back(std::move(*g));
      }
      predictions.push_back(ok ? std::optional(std::move(out)) : std::nullopt);
    }

    std::vector<bool> verified(hs.size(), false);
    std::string observation = "idle";
    for (;;) {
      if (settings_.at_tick) settings_.at_tick(root);
      h_.tick();
      rec.f_series.push_back(root.perceive(observation).value());
      if (auto pick = commit_choice(root, hs, predictions, verified)) {
        rec.hypothesis = hs[*pick].family;
        rec.predictions = *predictions[*pick];
        break;
      }
      if (root.task_vfe_plateau()) {
        rec.plateau = true;
        rec.reason = "free energy plateaued without a verified hypothesis";
        root.postpone_task(rec.reason);
        break;
      }
      root.select_mode();
      const PlanResult plan = root.plan();
      if (!plan.ranking.empty()) rec.g_series.push_back(plan.ranking.front().g);
      if (plan.postponed || plan.policy.is_noop()) {
        rec.reason = plan.postponed ? "planning budget exhausted" : "every check is ruled out";
        if (!plan.postponed) root.postpone_task(rec.reason);
        break;
      }
      const auto action = root.next_action();
      if (!action) {
        rec.reason = "empty plan";
        root.postpone_task(rec.reason);
        break;
      }
      const std::size_t k = hypothesis_of(hs, *action);
      std::optional<bool> holds;
      try {
        holds = run_check(root, hs[k].family, task, rec);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoCapablePath) throw;
        rec.reason = e.what();
        root.postpone_task(rec.reason);
        break;
      }
      root.act(*action);
      rec.actions.push_back(*action);
      verified[k] = verified[k] || *holds;
      observation = *holds ? "match" : "mismatch";
    }

    rec.planning_cycles = root.budget().planning_cycles;
    rec.reasoning_units = root.budget().reasoning_units;
    if (rec.hypothesis) {
      rec.correct = rec.predictions.size() == task.test.size();
      for (std::size_t i = 0; rec.correct && i < task.test.size(); ++i) {
        rec.correct = rec.predictions[i] == task.test[i].output;
      }
      rec.status = rec.correct ? "solved" : "wrong";
    } else {
      rec.status = "postponed";
    }
    root.consolidate({rec.status, rec.correct, rec.hypothesis ? hs[hypothesis_of_family(hs, *rec.hypothesis)].annotation : ""});
    trace.emit(root.id(), "TaskCompleted", to_json(rec));
    return rec;
  }

 private:
  static std::size_t hypothesis_of(const std::vector<Hypothesis>& hs, const std::string& action) {
    for (std::size_t i = 0; i < hs.size(); ++i) {
      if (test_action(hs[i].family) == action) return i;
    }
    fail(ErrorCode::UnknownLabel, "action '" + action + "' tests no proposed hypothesis");
  }

  static std::size_t hypothesis_of_family(const std::vector<Hypothesis>& hs, const std::string& family) {
    return hypothesis_of(hs, test_action(family));
  }

  /// Leading verified hypothesis, when the mass agreeing with its prediction clears the bar.
  std::optional<std::size_t> commit_choice(const Agent& root, const std::vector<Hypothesis>& hs,
                                           const std::vector<std::optional<std::vector<Grid>>>& predictions,
                                           const std::vector<bool>& verified) const {
    const std::size_t k = hs.size();
    std::vector<double> mass(k + 1, 0.0);
    const auto probs = root.belief().probs();
    for (std::size_t h = 0; h <= k; ++h) {
      for (std::size_t t = 0; t <= k; ++t) mass[h] += probs[h * (k + 1) + t];
    }
    const auto lead = static_cast<std::size_t>(std::max_element(mass.begin(), mass.end()) - mass.begin());
    if (lead == k || !verified[lead] || !predictions[lead]) return std::nullopt;
    double agree = 0.0;
    for (std::size_t h = 0; h < k; ++h) {
      if (predictions[h] && *predictions[h] == *predictions[lead]) agree += mass[h];
    }
    h_.trace().emit(root.id(), "CommitCheck",
                    {{"task_id", root.task_id()},
                     {"lead", hs[lead].family},
                     {"agreeing_mass", agree},
                     {"threshold", settings_.commit_mass},
                     {"committed", agree >= settings_.commit_mass}});
    if (agree < settings_.commit_mass) return std::nullopt;
    return lead;
  }

  /// Checks one hypothesis on the train pairs, delegating when the root cannot do it itself.
  bool run_check(Agent& root, const std::string& family, const GridTask& task, TaskRecord& rec) {
    const Policy step{kReplayPolicyId, {test_action(family)}};
    bool holds = false;
    auto worker = [&](Agent&, const std::string&, double) {
      const auto m = infer_color_map(task.train);
      const double err = color_map_error(task.train, m ? *m : fit_color_map(task.train));
      return WorkResult{err, m.has_value(), m ? to_json(*m) : nlohmann::json(nullptr)};
    };
    const DispatchRecord d = h_.dispatch(root.id(), step, task.id, worker);
    rec.pathways.push_back(to_string(d.pathway));
    if (d.assignments.empty()) {
      holds = consistent(family, task.train);
    } else {
      holds = d.assignments.front().result.success;
    }
    h_.trace().emit(root.id(), "HypothesisChecked", {{"task_id", task.id}, {"hypothesis", family}, {"holds", holds}});
    return holds;
  }

  Hierarchy& h_;
  Provider& provider_;
  SolverSettings settings_;
};

/// Runs one task through the full perception-planning-action loop.
inline TaskRecord solve_task(ArcSolver& solver, const GridTask& task) { return solver.solve(task); }

}  // namespace aif::arc
