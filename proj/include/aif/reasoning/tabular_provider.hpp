#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aif/agent/memory.hpp"
#include "aif/core/narrative.hpp"
#include "aif/reasoning/provider.hpp"

namespace aif {

/// Fixed hypothesis library entry. `affinity` is the task-feature profile the entry fits best.
struct LibraryEntry {
  std::string id;
  std::string annotation;
  std::vector<double> affinity;
  nlohmann::json fragment;
};

/// Number quoted after the last "free energy" in a template narrative.
inline std::optional<std::string> quoted_free_energy(const std::string& narrative) {
  const std::string key = "free energy ";
  const auto pos = narrative.rfind(key);
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + key.size();
  std::size_t j = i;
  while (j < narrative.size() && (std::isdigit(static_cast<unsigned char>(narrative[j])) || narrative[j] == '.' ||
                                  narrative[j] == '-' || narrative[j] == 'e' || narrative[j] == '+')) {
    ++j;
  }
  if (j == i) return std::nullopt;
  std::string out = narrative.substr(i, j - i);
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

/// Deterministic provider: template narratives, numeric consensus and a fixed library.
class TabularProvider : public Provider {
 public:
  explicit TabularProvider(std::vector<LibraryEntry> library = {}) : library_(std::move(library)) {
    for (const auto& e : library_) {
      validate_fragment({e.id, e.annotation, e.fragment, 0.0});
    }
  }

  Capabilities capabilities() const override { return {"tabular", true, false, false, !library_.empty()}; }

  using Provider::interpret_report;

  Interpretation interpret_report(const ReportView& r) override {
    Interpretation out;
    out.source = "tabular";
    out.narrative_form1 = r.narrative_form1;
    out.narrative_form2 = r.narrative_form2;
    if (out.narrative_form1.empty() || out.narrative_form2.empty()) render(r, out);
    out.agree = r.consensus;
    return out;
  }

  /// Every library entry, most similar affinity first; ties keep library order.
  std::vector<HypothesisCandidate> propose_hypotheses(const TaskContext& context) override {
    if (context.empty() || library_.empty()) fail(ErrorCode::NoHypothesis, "no applicable hypothesis for '" + context.task_id + "'");
    std::vector<HypothesisCandidate> out;
    for (const auto& e : library_) {
      const double a = context.features.empty() ? 0.0 : cosine_similarity(context.features, e.affinity);
      out.push_back({e.id, e.annotation, e.fragment, a});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const HypothesisCandidate& x, const HypothesisCandidate& y) { return x.affinity > y.affinity; });
    return out;
  }

  bool check_consensus(const std::string& n1, const std::string& n2) override {
    const auto a = quoted_free_energy(n1);
    const auto b = quoted_free_energy(n2);
    return a && b && *a == *b;
  }

  const std::vector<LibraryEntry>& library() const noexcept { return library_; }

 private:
  static void render(const ReportView& r, Interpretation& out) {
    const auto& t = r.terms;
    if (r.kind == "vfe") {
      out.narrative_form1 = narrative::vfe_form1(t.value("complexity", 0.0), t.value("accuracy", 0.0), r.form1);
      out.narrative_form2 = narrative::vfe_form2(t.value("belief_divergence", 0.0), t.value("log_evidence", 0.0), r.form2);
    } else {
      out.narrative_form1 = narrative::efe_form1(t.value("info_gain", 0.0), t.value("pragmatic", 0.0), r.form1);
      out.narrative_form2 = narrative::efe_form2(t.value("ambiguity", 0.0), t.value("risk", 0.0), r.form2);
    }
  }

  std::vector<LibraryEntry> library_;
};

}  // namespace aif
