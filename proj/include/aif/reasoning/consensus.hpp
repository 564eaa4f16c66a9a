#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"
#include "aif/reasoning/provider.hpp"

namespace aif {

inline constexpr std::size_t kDefaultConsensusRounds = 3;

struct ConsensusProtocol {
  std::size_t max_rounds = kDefaultConsensusRounds;
  /// Numeric agreement cannot change between rounds, so one round decides.
  bool numeric = false;

  std::size_t round_limit() const { return numeric ? 1 : max_rounds; }
};

struct ConsensusRound {
  std::size_t round = 0;
  Interpretation interpretation;
};

struct ConsensusOutcome {
  bool consensus = false;
  std::vector<ConsensusRound> transcript;

  const char* verdict() const noexcept { return consensus ? "consensus" : "no-consensus"; }
};

inline nlohmann::json to_json(const ConsensusOutcome& o) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : o.transcript) {
    auto j = to_json(r.interpretation);
    j["round"] = r.round;
    rounds.push_back(std::move(j));
  }
  return {{"verdict", o.verdict()}, {"rounds", o.transcript.size()}, {"transcript", std::move(rounds)}};
}

/// Refine and compare until agreement or the round limit. One producer call per recorded round.
inline ConsensusOutcome run_consensus(const ConsensusProtocol& protocol,
                                      const std::function<Interpretation(std::size_t round)>& produce,
                                      const std::function<void(const ConsensusOutcome&)>& on_no_consensus = {}) {
  require(protocol.max_rounds >= 1, ErrorCode::ConfigError, "consensus needs at least one round");
  ConsensusOutcome out;
  for (std::size_t round = 1; round <= protocol.round_limit(); ++round) {
    out.transcript.push_back({round, produce(round)});
    if (out.transcript.back().interpretation.agree) {
      out.consensus = true;
      return out;
    }
  }
  if (on_no_consensus) on_no_consensus(out);
  return out;
}

/// Consensus over one report with a provider. Deterministic providers decide in one round.
inline ConsensusOutcome interpret_with_consensus(Provider& provider, const ReportView& report,
                                                 ConsensusProtocol protocol = {},
                                                 const std::function<void(const ConsensusOutcome&)>& on_no_consensus = {}) {
  protocol.numeric = protocol.numeric || provider.capabilities().deterministic;
  return run_consensus(protocol, [&](std::size_t) { return provider.interpret_report(report); }, on_no_consensus);
}

}  // namespace aif
