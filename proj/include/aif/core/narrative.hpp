#pragma once

#include <string>

#include <fmt/format.h>

namespace aif::narrative {

// Fixed templates keyed on sign and magnitude buckets. No free text generation,
// so identical reports always render identical narratives.

inline const char* surprise_bucket(double f) {
  if (f < 0.1) return "low surprise";
  if (f < 1.0) return "moderate surprise";
  return "high surprise";
}

inline std::string vfe_form1(double complexity, double accuracy, double f) {
  const char* balance = complexity > accuracy ? "complexity dominates accuracy"
                                              : "accuracy cost dominates complexity";
  return fmt::format(
      "Complexity {:.4f} nats against accuracy cost {:.4f} nats: {}; free energy {:.4f} nats ({}).",
      complexity, accuracy, balance, f, surprise_bucket(f));
}

inline std::string vfe_form2(double divergence, double log_evidence, double f) {
  const char* reading;
  if (divergence <= 1e-9) {
    reading = "beliefs coincide with the exact posterior";
  } else if (log_evidence >= -1.0) {
    reading = "evidence is strong, so divergence is a clear performance signal";
  } else {
    reading = "evidence is weak, so divergence and evidence are unreliable signals";
  }
  return fmt::format(
      "Belief divergence {:.4f} nats with log evidence {:.4f}: {}; free energy {:.4f} nats ({}).",
      divergence, log_evidence, reading, f, surprise_bucket(f));
}

inline std::string efe_form1(double info_gain, double pragmatic, double g) {
  const char* drive = info_gain > -pragmatic ? "epistemic drive dominates"
                                             : "pragmatic drive dominates";
  return fmt::format(
      "Information gain {:.4f} nats and pragmatic value {:.4f} nats: {}; expected free energy "
      "{:.4f} nats.",
      info_gain, pragmatic, drive, g);
}

inline std::string efe_form2(double ambiguity, double risk, double g) {
  const char* drive = ambiguity > risk ? "ambiguity dominates risk" : "risk dominates ambiguity";
  return fmt::format(
      "Expected ambiguity {:.4f} nats and outcome risk {:.4f} nats: {}; expected free energy "
      "{:.4f} nats.",
      ambiguity, risk, drive, g);
}

}  // namespace aif::narrative
