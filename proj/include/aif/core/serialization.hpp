#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/core/categorical.hpp"
#include "aif/core/expected_free_energy.hpp"
#include "aif/core/free_energy.hpp"
#include "aif/core/generative_model.hpp"

namespace aif {

using json = nlohmann::json;

inline json to_json(const CategoricalDist& d) {
  return {{"labels", d.labels()}, {"probs", std::vector<double>(d.probs().begin(), d.probs().end())}};
}

inline CategoricalDist dist_from_json(const json& j) {
  return {j.at("labels").get<std::vector<std::string>>(), j.at("probs").get<std::vector<double>>()};
}

inline json to_json(const PreferenceModel& c) {
  return {{"log_pref", c.log_pref},
          {"hard_constraints", c.hard_constraints},
          {"annotations", c.annotations},
          {"precision", c.precision}};
}

inline json to_json(const FreeEnergyReport& r) {
  return {{"complexity", r.complexity},
          {"accuracy", r.accuracy},
          {"belief_divergence", r.belief_divergence},
          {"log_evidence", r.log_evidence},
          {"f_form1", r.f_form1},
          {"f_form2", r.f_form2},
          {"consensus", r.consensus},
          {"narrative_form1", r.narrative_form1},
          {"narrative_form2", r.narrative_form2}};
}

/// Terms, forms and narratives. Per-step predictions are included only when asked for.
inline json to_json(const EfeReport& r, bool with_steps = false) {
  json j = {{"policy_id", r.policy.id},
            {"actions", r.policy.actions},
            {"info_gain", r.info_gain},
            {"pragmatic", r.pragmatic},
            {"ambiguity", r.ambiguity},
            {"risk", r.risk},
            {"g_form1", r.g_form1},
            {"g_form2", r.g_form2},
            {"consensus", r.consensus},
            {"narrative_form1", r.narrative_form1},
            {"narrative_form2", r.narrative_form2}};
  if (with_steps) {
    json steps = json::array();
    for (const auto& s : r.steps) {
      steps.push_back({{"predicted_states", to_json(s.predicted_states)},
                       {"predicted_observations", to_json(s.predicted_observations)},
                       {"info_gain", s.info_gain},
                       {"pragmatic", s.pragmatic},
                       {"ambiguity", s.ambiguity},
                       {"risk", s.risk}});
    }
    j["steps"] = std::move(steps);
  }
  return j;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& field, const std::string& what) {
  fail(ErrorCode::SchemaViolation, field + ": " + what);
}

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) schema_error(path + "." + key, "missing");
  return j.at(key);
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) schema_error(path + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

inline std::vector<std::string> strings(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) schema_error(path + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

/// Accepts a flat row-major array or an array of rows.
inline std::vector<std::vector<double>> matrix(const json& j, std::size_t rows, std::size_t cols,
                                               const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected a matrix");
  std::vector<std::vector<double>> out;
  if (!j.empty() && j.front().is_array()) {
    if (j.size() != rows) schema_error(path, "expected " + std::to_string(rows) + " rows");
    for (std::size_t r = 0; r < rows; ++r) {
      out.push_back(numbers(j[r], path + "[" + std::to_string(r) + "]"));
      if (out.back().size() != cols) {
        schema_error(path + "[" + std::to_string(r) + "]", "expected " + std::to_string(cols) + " columns");
      }
    }
    return out;
  }
  auto flat = numbers(j, path);
  if (flat.size() != rows * cols) {
    schema_error(path, "expected " + std::to_string(rows * cols) + " row-major entries");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(r * cols),
                     flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  return out;
}

}  // namespace detail

/// Reads the declarative model document (schema in docs/model_schema.md).
inline ModelSpec model_spec_from_json(const json& j) {
  using namespace detail;
  ModelSpec spec;
  spec.states = strings(field(j, "state_labels", "model"), "model.state_labels");
  spec.observations = strings(field(j, "observation_labels", "model"), "model.observation_labels");
  spec.actions = strings(field(j, "action_labels", "model"), "model.action_labels");
  const std::size_t ns = spec.states.size();
  const std::size_t no = spec.observations.size();

  spec.a = matrix(field(j, "A", "model"), ns, no, "model.A");

  const json& b = field(j, "B", "model");
  if (b.is_object()) {
    for (const auto& action : spec.actions) {
      spec.b.push_back(matrix(field(b, action.c_str(), "model.B"), ns, ns, "model.B." + action));
    }
    if (b.size() != spec.actions.size()) schema_error("model.B", "unexpected action keys");
  } else if (b.is_array()) {
    if (b.size() != spec.actions.size()) schema_error("model.B", "expected one matrix per action");
    for (std::size_t k = 0; k < b.size(); ++k) {
      spec.b.push_back(matrix(b[k], ns, ns, "model.B[" + std::to_string(k) + "]"));
    }
  } else {
    schema_error("model.B", "expected an object keyed by action or an array");
  }

  const json& c = field(j, "C", "model");
  const json& lp = field(c, "log_pref", "model.C");
  if (lp.is_object()) {
    spec.c.log_pref.assign(no, 0.0);
    for (const auto& [label, value] : lp.items()) {
      auto idx = find_label(spec.observations, label);
      if (!idx) schema_error("model.C.log_pref." + label, "unknown observation");
      if (!value.is_number()) schema_error("model.C.log_pref." + label, "expected a number");
      spec.c.log_pref[*idx] = value.get<double>();
    }
  } else {
    spec.c.log_pref = numbers(lp, "model.C.log_pref");
  }
  if (c.contains("hard_constraints")) {
    spec.c.hard_constraints = strings(c.at("hard_constraints"), "model.C.hard_constraints");
  }
  if (c.contains("precision")) {
    if (!c.at("precision").is_number()) schema_error("model.C.precision", "expected a number");
    spec.c.precision = c.at("precision").get<double>();
  }

  spec.d = numbers(field(j, "D", "model"), "model.D");

  if (j.contains("annotations")) {
    const json& ann = j.at("annotations");
    if (ann.contains("A")) spec.a_annotations = strings(ann.at("A"), "model.annotations.A");
    if (ann.contains("B")) {
      const json& bn = ann.at("B");
      if (bn.is_object() && !bn.empty()) {
        for (const auto& action : spec.actions) {
          spec.b_annotations.push_back(bn.value(action, std::string{}));
        }
      } else if (!bn.is_object()) {
        spec.b_annotations = strings(bn, "model.annotations.B");
      }
    }
    if (ann.contains("C")) spec.c.annotations = strings(ann.at("C"), "model.annotations.C");
    if (ann.contains("D")) spec.d_annotations = strings(ann.at("D"), "model.annotations.D");
  }
  return spec;
}

inline GenerativeModel model_from_json(const json& j) { return build_model(model_spec_from_json(j)); }

inline json to_json(const GenerativeModel& m) {
  json a = json::array();
  for (const auto& row : m.a().rows) {
    for (double p : row.probs()) a.push_back(p);
  }
  json b = json::object();
  for (std::size_t k = 0; k < m.num_actions(); ++k) {
    json flat = json::array();
    for (const auto& row : m.b().rows[k]) {
      for (double p : row.probs()) flat.push_back(p);
    }
    b[(*m.action_labels())[k]] = std::move(flat);
  }
  json b_ann = json::object();
  for (std::size_t k = 0; k < m.b().annotations.size(); ++k) {
    b_ann[(*m.action_labels())[k]] = m.b().annotations[k];
  }
  return {{"state_labels", *m.state_labels()},
          {"observation_labels", *m.observation_labels()},
          {"action_labels", *m.action_labels()},
          {"A", std::move(a)},
          {"B", std::move(b)},
          {"C",
           {{"log_pref", m.c().log_pref},
            {"hard_constraints", m.c().hard_constraints},
            {"precision", m.c().precision}}},
          {"D", std::vector<double>(m.d().dist.probs().begin(), m.d().dist.probs().end())},
          {"annotations",
           {{"A", m.a().annotations},
            {"B", std::move(b_ann)},
            {"C", m.c().annotations},
            {"D", m.d().annotations}}}};
}

inline json read_json_file(const std::string& path, ErrorCode code = ErrorCode::ConfigError) {
  std::ifstream in(path);
  if (!in) fail(code, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line/column diagnostic.
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(code, path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

inline GenerativeModel load_model(const std::string& path) {
  return model_from_json(read_json_file(path, ErrorCode::SchemaViolation));
}

}  // namespace aif
