#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/core/expected_free_energy.hpp"
#include "aif/core/free_energy.hpp"
#include "aif/core/generative_model.hpp"
#include "aif/core/serialization.hpp"
#include "aif/errors.hpp"

namespace aif {

/// What a provider can do. Conformance tests check that each flag is honest.
struct Capabilities {
  std::string name;
  bool deterministic = false;
  bool networked = false;
  bool linguistic_consensus = false;
  bool proposes_hypotheses = false;
};

inline nlohmann::json to_json(const Capabilities& c) {
  return {{"name", c.name},
          {"deterministic", c.deterministic},
          {"networked", c.networked},
          {"linguistic_consensus", c.linguistic_consensus},
          {"proposes_hypotheses", c.proposes_hypotheses}};
}

/// Either decomposition report reduced to what a provider needs to read.
struct ReportView {
  std::string kind;
  double form1 = 0.0;
  double form2 = 0.0;
  bool consensus = false;
  std::string narrative_form1;
  std::string narrative_form2;
  nlohmann::json terms = nlohmann::json::object();
};

namespace detail {

inline void require_finite(const nlohmann::json& terms) {
  for (const auto& [k, v] : terms.items()) {
    if (v.is_number() && !std::isfinite(v.get<double>())) {
      fail(ErrorCode::SchemaViolation, "report term '" + k + "' is not finite");
    }
  }
}

}  // namespace detail

inline ReportView view_of(const FreeEnergyReport& r) {
  ReportView v{"vfe", r.f_form1, r.f_form2, r.consensus, r.narrative_form1, r.narrative_form2,
               {{"complexity", r.complexity},
                {"accuracy", r.accuracy},
                {"belief_divergence", r.belief_divergence},
                {"log_evidence", r.log_evidence},
                {"f_form1", r.f_form1},
                {"f_form2", r.f_form2}}};
  detail::require_finite(v.terms);
  return v;
}

inline ReportView view_of(const EfeReport& r) {
  ReportView v{"efe", r.g_form1, r.g_form2, r.consensus, r.narrative_form1, r.narrative_form2,
               {{"info_gain", r.info_gain},
                {"pragmatic", r.pragmatic},
                {"ambiguity", r.ambiguity},
                {"risk", r.risk},
                {"g_form1", r.g_form1},
                {"g_form2", r.g_form2}}};
  detail::require_finite(v.terms);
  return v;
}

/// One narrative per decomposition plus the agreement verdict.
struct Interpretation {
  std::string narrative_form1;
  std::string narrative_form2;
  bool agree = false;
  std::string source;
};

inline nlohmann::json to_json(const Interpretation& i) {
  return {{"narrative_form1", i.narrative_form1},
          {"narrative_form2", i.narrative_form2},
          {"verdict", i.agree ? "agree" : "disagree"},
          {"source", i.source}};
}

/// Inputs for hypothesis proposal: example pairs, task features and recalled episode notes.
struct TaskContext {
  std::string task_id;
  nlohmann::json examples = nlohmann::json::array();
  std::vector<double> features;
  std::vector<std::string> retrieved;

  bool empty() const { return (examples.is_null() || examples.empty()) && features.empty(); }
};

/// An annotated model fragment. `fragment` is a complete model document that must validate.
struct HypothesisCandidate {
  std::string id;
  std::string annotation;
  nlohmann::json fragment;
  double affinity = 0.0;
};

/// Builds the fragment; any invariant violation raises, so nothing unvalidated is accepted.
inline GenerativeModel validate_fragment(const HypothesisCandidate& c) {
  require(!c.id.empty(), ErrorCode::SchemaViolation, "hypothesis id must be non-empty");
  require(!c.annotation.empty(), ErrorCode::SchemaViolation, "hypothesis '" + c.id + "' has no annotation");
  return model_from_json(c.fragment);
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual Capabilities capabilities() const = 0;
  virtual Interpretation interpret_report(const ReportView& report) = 0;
  virtual std::vector<HypothesisCandidate> propose_hypotheses(const TaskContext& context) = 0;
  virtual bool check_consensus(const std::string& narrative_form1, const std::string& narrative_form2) = 0;

  Interpretation interpret_report(const FreeEnergyReport& r) { return interpret_report(view_of(r)); }
  Interpretation interpret_report(const EfeReport& r) { return interpret_report(view_of(r)); }
};

}  // namespace aif
