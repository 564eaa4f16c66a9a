#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "aif/agent/agent.hpp"
#include "aif/hierarchy/bus.hpp"
#include "aif/hierarchy/clustering.hpp"
#include "aif/hierarchy/coordination.hpp"
#include "aif/hierarchy/evolution.hpp"
#include "aif/hierarchy/reputation.hpp"
#include "aif/hierarchy/topology.hpp"
#include "aif/trace/trace.hpp"

namespace aif {

struct HierarchySettings {
  double ewma_decay = kDefaultEwmaDecay;
  double competence = kCompetenceThreshold;
  double temperature = kAllocationTemperature;
  /// Topic on which each non-native action is offered.
  std::map<std::string, std::string> action_topics;
  std::uint64_t seed = 0;
};

/// What a worker reports back after executing delegated work.
struct WorkResult {
  double f = 0.0;
  bool success = false;
  nlohmann::json output = nullptr;
};

struct Assignment {
  std::string action;
  std::string worker;
  double share = 0.0;
  WorkResult result;
};

struct DispatchRecord {
  Pathway pathway = Pathway::DirectExecution;
  std::vector<std::string> missing;
  std::vector<Assignment> assignments;
};

/// Owns the agents, their topology and the bus. Retired agents move to the archive.
class Hierarchy {
 public:
  using Worker = std::function<WorkResult(Agent& worker, const std::string& action, double share)>;

  explicit Hierarchy(TraceSink& trace, HierarchySettings settings = {})
      : settings_(std::move(settings)), trace_(&trace), bus_(topology_, trace), ledger_(settings_.ewma_decay) {}

  Hierarchy(const Hierarchy&) = delete;
  Hierarchy& operator=(const Hierarchy&) = delete;

  TraceSink& trace() noexcept { return *trace_; }
  const BlanketTopology& topology() const noexcept { return topology_; }
  MessageBus& bus() noexcept { return bus_; }
  const ReputationLedger& ledger() const noexcept { return ledger_; }
  const HierarchySettings& settings() const noexcept { return settings_; }
  HierarchySettings& settings() noexcept { return settings_; }

  Agent& add_agent(AgentConfig config, GenerativeModel model, const std::string& reason = "config",
                   nlohmann::json extra = nlohmann::json::object()) {
    topology_.add_agent(config.id, config.parent);
    auto agent = std::make_unique<Agent>(std::move(config), std::move(model), *trace_);
    Agent& a = *agent;
    a.set_error_hook([this](const Agent& who, const FreeEnergyReport& r, bool zero) { report_error(who, r, zero); });
    agents_[a.id()] = std::move(agent);
    nlohmann::json payload = {{"id", a.id()},
                              {"parent", a.parent() ? nlohmann::json(*a.parent()) : nlohmann::json(nullptr)},
                              {"role", a.role()},
                              {"generation", a.config().generation},
                              {"layer0_hash", a.stack().spawn_hash()},
                              {"reason", reason}};
    for (auto& [k, v] : extra.items()) payload[k] = v;
    trace_->emit(a.id(), "AgentSpawned", std::move(payload));
    return a;
  }

  bool has(const std::string& id) const { return agents_.count(id) > 0; }

  Agent& agent(const std::string& id) {
    auto it = agents_.find(id);
    require(it != agents_.end(), ErrorCode::ConfigError, "unknown agent '" + id + "'");
    return *it->second;
  }

  const Agent& agent(const std::string& id) const {
    auto it = agents_.find(id);
    require(it != agents_.end(), ErrorCode::ConfigError, "unknown agent '" + id + "'");
    return *it->second;
  }

  const Agent* archived(const std::string& id) const {
    auto it = archive_.find(id);
    return it == archive_.end() ? nullptr : it->second.get();
  }

  std::vector<std::string> agent_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, a] : agents_) out.push_back(id);
    return out;
  }

  void create_topic(const std::string& name, const std::string& owner) {
    topology_.create_topic(name, owner);
    trace_->emit(owner, "TopicCreated", {{"topic", name}, {"owner", owner}});
  }

  void subscribe(const std::string& topic, const std::string& agent_id) {
    topology_.subscribe(topic, agent_id);
    trace_->emit(agent_id, "TopicSubscribed", {{"topic", topic}, {"agent", agent_id}});
  }

  /// Advances the clock and records every active agent's layer-0 hash.
  std::uint64_t tick() {
    trace_->set_tick(trace_->tick() + 1);
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [id, a] : agents_) hashes[id] = a->stack().layer0_hash();
    trace_->emit("system", "Tick", {{"layer0", std::move(hashes)}});
    expire_retained();
    return trace_->tick();
  }

  std::vector<Receipt> send(BusMessage m) { return bus_.publish(std::move(m)); }

  /// The sender's parent countersigns one cross-blanket pair. Returns the approval message id.
  std::uint64_t approve(const std::string& sender, const std::string& receiver) {
    const auto parent = topology_.parent_of(sender);
    require(parent.has_value(), ErrorCode::ConfigError, "'" + sender + "' has no parent to approve for it");
    BusMessage m;
    m.kind = MessageKind::Approval;
    m.sender = *parent;
    m.receiver = sender;
    m.payload = {{"sender", sender}, {"receiver", receiver}};
    const auto receipts = bus_.publish(std::move(m));
    return receipts.empty() ? bus_.next_id() - 1 : receipts.front().message_id;
  }

  /// Sends a PreferenceFlow down one edge and applies it when delivered.
  bool flow_down(const std::string& parent, const std::string& child, const std::map<std::string, double>& fragment,
                 double precision, const std::string& source = "system") {
    BusMessage m;
    m.kind = MessageKind::PreferenceFlow;
    m.sender = parent;
    m.receiver = child;
    m.payload = {{"fragment", fragment}, {"precision", precision}};
    const auto receipts = bus_.publish(std::move(m));
    const bool delivered = !receipts.empty() && receipts.front().delivered;
    if (delivered) {
      bus_.drain(child, MessageKind::PreferenceFlow);
      agent(child).receive_flow(PreferenceFlow{fragment, precision, parent}, source);
    }
    return delivered;
  }

  /// Consumes this tick's error reports addressed to `parent` in attention order.
  AttentionResult process_error_reports(const std::string& parent) {
    std::vector<IncomingReport> incoming;
    for (auto& m : bus_.drain(parent, MessageKind::ErrorReport)) {
      if (topology_.parent_of(m.sender) != parent) continue;
      incoming.push_back({m.sender, m.payload.at("f").get<double>(), m.id, m.payload});
    }
    auto& held = retained_[parent];
    for (auto& r : held) {
      r.age = 1;
      incoming.push_back(std::move(r));
    }
    held.clear();
    const double threshold = agent(parent).config().thresholds.attention;
    AttentionResult result = attention_filter(std::move(incoming), threshold);
    nlohmann::json consumed = nlohmann::json::array();
    for (const auto& r : result.consumed) consumed.push_back({{"child", r.child}, {"f", r.f}, {"message_id", r.message_id}});
    nlohmann::json retained = nlohmann::json::array();
    for (const auto& r : result.retained) retained.push_back({{"child", r.child}, {"f", r.f}, {"message_id", r.message_id}});
    trace_->emit(parent, "AttentionFiltered",
                 {{"threshold", threshold}, {"consumed", std::move(consumed)}, {"retained", std::move(retained)}});
    held_since_[parent] = trace_->tick();
    for (const auto& r : result.retained) {
      if (r.age == 0) held.push_back(r);
    }
    return result;
  }

  /// Routes a selected policy to its executors and records the decision and its inputs.
  DispatchRecord dispatch(const std::string& agent_id, const Policy& policy, const std::string& task_id, const Worker& worker,
                          double budget = 1.0) {
    Agent& self = agent(agent_id);
    DispatchRecord record;
    for (const auto& a : policy.actions) {
      if (!self.is_native(a) &&
          std::find(record.missing.begin(), record.missing.end(), a) == record.missing.end()) {
        record.missing.push_back(a);
      }
    }
    if (record.missing.empty()) {
      trace_->emit(agent_id, "DispatchDecision",
                   {{"task_id", task_id},
                    {"pathway", to_string(Pathway::DirectExecution)},
                    {"actions", policy.actions},
                    {"missing", record.missing}});
      return record;
    }

    for (const auto& action : record.missing) {
      const std::string topic = topic_for(action);
      std::vector<Candidate> candidates = candidates_for(agent_id, topic);
      nlohmann::json cand_json = nlohmann::json::array();
      for (const auto& c : candidates) {
        cand_json.push_back({{"id", c.id}, {"ewma", c.ewma ? nlohmann::json(*c.ewma) : nlohmann::json(nullptr)}});
      }
      nlohmann::json inputs = {{"task_id", task_id},
                               {"actions", policy.actions},
                               {"missing", record.missing},
                               {"action", action},
                               {"topic", topic},
                               {"candidates", cand_json},
                               {"competence", settings_.competence}};
      PathwayDecision decision;
      try {
        decision = choose_pathway({action}, candidates, settings_.competence);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoCapablePath) throw;
        inputs["pathway"] = nullptr;
        inputs["error"] = std::string(to_string(e.code()));
        trace_->emit(agent_id, "DispatchDecision", inputs);
        escalate(self, fmt::format("no capable path for '{}' in task {}", action, task_id));
        throw;
      }
      record.pathway = decision.pathway;
      inputs["pathway"] = to_string(decision.pathway);

      if (decision.pathway == Pathway::DirectedSubcontract) {
        inputs["contractor"] = *decision.contractor;
        inputs["shares"] = {{*decision.contractor, budget}};
        trace_->emit(agent_id, "DispatchDecision", inputs);
        record.assignments.push_back(assign(self, *decision.contractor, topic, task_id, action, budget, worker));
        continue;
      }

      // Exploratory recruitment: offer on the topic, collect bids, split evenly.
      BusMessage offer;
      offer.kind = MessageKind::TaskOffer;
      offer.sender = agent_id;
      offer.topic = topic;
      offer.payload = {{"task_id", task_id}, {"action", action}, {"budget", budget}};
      const auto offered = bus_.publish(std::move(offer));
      std::vector<std::string> bidders;
      for (const auto& r : offered) {
        if (!r.delivered) continue;
        bus_.drain(r.receiver, MessageKind::TaskOffer);
        BusMessage bid;
        bid.kind = MessageKind::TaskBid;
        bid.sender = r.receiver;
        bid.receiver = agent_id;
        bid.topic = topic;
        auto e = ledger_.ewma(r.receiver);
        bid.payload = {{"task_id", task_id}, {"ewma", e ? nlohmann::json(*e) : nlohmann::json(nullptr)}};
        bid.provenance = {r.message_id};
        const auto bid_receipts = bus_.publish(std::move(bid));
        if (!bid_receipts.empty() && bid_receipts.front().delivered) bidders.push_back(r.receiver);
      }
      bus_.drain(agent_id, MessageKind::TaskBid);
      if (bidders.empty()) {
        inputs["recruits"] = nlohmann::json::array();
        inputs["error"] = "NoCapablePath";
        trace_->emit(agent_id, "DispatchDecision", inputs);
        escalate(self, fmt::format("no bids for '{}' in task {}", action, task_id));
        fail(ErrorCode::NoCapablePath, "no agent bid for '" + action + "'");
      }
      std::sort(bidders.begin(), bidders.end());
      const double share = budget / static_cast<double>(bidders.size());
      nlohmann::json shares = nlohmann::json::object();
      for (const auto& b : bidders) shares[b] = share;
      inputs["recruits"] = bidders;
      inputs["shares"] = shares;
      trace_->emit(agent_id, "DispatchDecision", inputs);
      for (const auto& b : bidders) record.assignments.push_back(assign(self, b, topic, task_id, action, share, worker));
    }
    return record;
  }

  /// Clusters the parent's episodes and spawns one specialist per non-empty cluster.
  std::vector<std::string> spawn_specialists(const std::string& parent_id, std::size_t k = 3, bool force = false) {
    Agent& parent = agent(parent_id);
    const auto& episodes = parent.episodic().episodes();
    if (!force) {
      require(k >= 2, ErrorCode::InsufficientEpisodes, "a single cluster would only clone the parent");
      require(parent.efe_plateau(), ErrorCode::InsufficientEpisodes, "the EFE plateau has not fired for '" + parent_id + "'");
    }
    require(k >= 1, ErrorCode::InsufficientEpisodes, "k must be at least 1");
    require(episodes.size() >= 2 * k, ErrorCode::InsufficientEpisodes,
            fmt::format("{} episodes are too few for {} clusters", episodes.size(), k));
    std::vector<std::vector<double>> points;
    for (const auto& e : episodes) points.push_back(e.features);
    const Clustering clusters = kmeans(points, k, settings_.seed);

    const GenerativeModel& base = parent.base_model();
    const auto& states = *base.state_labels();
    const auto& observations = *base.observation_labels();
    std::vector<std::string> spawned;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<const Episode*> members;
      std::vector<std::string> notes;
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        if (clusters.assignment[i] != j) continue;
        members.push_back(&episodes[i]);
        notes.push_back(episodes[i].annotation);
      }
      if (members.empty()) continue;
      std::string role = majority_annotation(notes);
      if (role.empty()) role = fmt::format("{} cluster {}", parent.role(), j);

      AgentConfig cfg = parent.config();
      cfg.id = unique_id(parent_id + "." + role_slug(role));
      cfg.role = role;
      cfg.parent = parent_id;
      cfg.generation = parent.config().generation + 1;
      cfg.layer0_provenance = "inherited from " + parent_id;
      PriorBelief d{CategoricalDist(base.state_labels(), laplace_prior(states, members)), base.d().annotations};
      GenerativeModel model = base.with_preferences(parent.stack().layer0()).with_prior(std::move(d));

      std::vector<std::string> episode_ids;
      for (const Episode* e : members) episode_ids.push_back(e->task_id);
      Agent& child = add_agent(std::move(cfg), std::move(model), "specialization",
                               {{"cluster", j}, {"episodes", episode_ids}, {"inherits_from", parent_id}});
      PreferenceModel restriction;
      restriction.log_pref = signature_fragment(observations, members);
      child.update_preferences(1, restriction, "cluster signature");
      for (const Episode* e : members) child.remember(*e);

      const std::string topic = "role:" + role_slug(role);
      if (!topology_.topic(topic)) create_topic(topic, parent_id);
      subscribe(topic, child.id());
      spawned.push_back(child.id());
    }
    trace_->emit(parent_id, "SpecializationCompleted",
                 {{"k", k}, {"children", spawned}, {"iterations", clusters.iterations}, {"forced", force}});
    return spawned;
  }

  /// Replaces a stuck agent with one holding a flattened prior and an alternative preference layer.
  std::string paradigm_shift(const std::string& creator_id, const std::string& stuck_id,
                             const std::vector<AlternativeBelief>& library = default_belief_library(), bool force = false) {
    Agent& stuck = agent(stuck_id);
    if (!force) {
      require(stuck.vfe_plateau() && stuck.recent_vfe_level() > stuck.config().thresholds.theta_hi, ErrorCode::ConfigError,
              "'" + stuck_id + "' shows no VFE plateau above theta_hi");
    }
    const GenerativeModel& base = stuck.base_model();
    const auto& d_before = base.d();
    const AlternativeBelief& entry = pick_alternative(library, d_before.annotations, stuck.config().generation);
    const std::vector<double> before(d_before.dist.probs().begin(), d_before.dist.probs().end());
    const std::vector<double> mixed = mix_with_uniform(before);
    PriorBelief d{CategoricalDist(base.state_labels(), mixed), swap_annotation(d_before.annotations, entry)};

    AgentConfig cfg = stuck.config();
    cfg.generation = stuck.config().generation + 1;
    cfg.id = unique_id(fmt::format("{}~g{}", base_id(stuck_id), cfg.generation));
    cfg.parent = stuck_id;
    cfg.layer0_provenance = "inherited from " + stuck_id;
    GenerativeModel model = base.with_preferences(stuck.stack().layer0()).with_prior(d);
    Agent& fresh = add_agent(cfg, std::move(model), "paradigm shift", {{"inherits_from", stuck_id}, {"creator", creator_id}});

    PreferenceModel variant;
    variant.log_pref.assign(base.num_observations(), 0.0);
    variant.precision = entry.precision;
    for (const auto& [label, v] : entry.fragment) variant.log_pref[base.observation_index(label)] = v;
    fresh.update_preferences(1, variant, "alternative belief: " + entry.annotation);
    if (stuck.parent_flow()) fresh.receive_flow(*stuck.parent_flow());

    trace_->emit(creator_id, "ParadigmShift",
                 {{"creator", creator_id},
                  {"retired", stuck_id},
                  {"replacement", fresh.id()},
                  {"d_before", before},
                  {"d_after", mixed},
                  {"annotations_before", d_before.annotations},
                  {"annotations_after", d.annotations},
                  {"layer0_hash", fresh.stack().layer0_hash()},
                  {"stuck_level", stuck.recent_vfe_level()}});
    retire(stuck_id, fresh.id(), "paradigm shift");
    return fresh.id();
  }

  void retire(const std::string& id, const std::optional<std::string>& successor, const std::string& reason) {
    topology_.retire(id, successor);
    auto it = agents_.find(id);
    archive_[id] = std::move(it->second);
    agents_.erase(it);
    retained_.erase(id);
    for (auto& [aid, a] : agents_) a->set_parent(topology_.parent_of(aid));
    trace_->emit(id, "AgentRetired",
                 {{"id", id}, {"successor", successor ? nlohmann::json(*successor) : nlohmann::json(nullptr)}, {"reason", reason}});
  }

  nlohmann::json snapshot() const {
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& [id, a] : agents_) agents.push_back(a->snapshot());
    nlohmann::json archive = nlohmann::json::array();
    for (const auto& [id, a] : archive_) archive.push_back(a->snapshot());
    return {{"tick", trace_->tick()},
            {"agents", std::move(agents)},
            {"archive", std::move(archive)},
            {"topology", topology_.to_json()},
            {"ledger", ledger_.to_json()},
            {"messages", bus_.next_id()}};
  }

 private:
  void report_error(const Agent& who, const FreeEnergyReport& r, bool zero_evidence) {
    const auto parent = topology_.parent_of(who.id());
    if (!parent) return;
    BusMessage m;
    m.kind = MessageKind::ErrorReport;
    m.sender = who.id();
    m.receiver = *parent;
    m.payload = {{"f", std::max(0.0, r.value())}, {"zero_evidence", zero_evidence}, {"summary", r.narrative_form2}, {"task_id", who.task_id()}};
    bus_.publish(std::move(m));
  }

  void escalate(const Agent& who, const std::string& summary) {
    const auto parent = topology_.parent_of(who.id());
    if (!parent) return;
    BusMessage m;
    m.kind = MessageKind::ErrorReport;
    m.sender = who.id();
    m.receiver = *parent;
    const double f = who.last_report() ? who.last_report()->value() : 0.0;
    m.payload = {{"f", std::max(0.0, f)}, {"zero_evidence", false}, {"summary", summary}, {"task_id", who.task_id()}};
    bus_.publish(std::move(m));
  }

  Assignment assign(Agent& self, const std::string& worker_id, const std::string& topic, const std::string& task_id,
                    const std::string& action, double share, const Worker& worker) {
    BusMessage m;
    m.kind = MessageKind::TaskAssign;
    m.sender = self.id();
    m.receiver = worker_id;
    m.topic = topic;
    m.payload = {{"task_id", task_id}, {"action", action}, {"share", share}};
    const auto receipts = bus_.publish(std::move(m));
    require(!receipts.empty() && receipts.front().delivered, ErrorCode::NoCapablePath,
            "assignment to '" + worker_id + "' was not deliverable");
    bus_.drain(worker_id, MessageKind::TaskAssign);

    Assignment a{action, worker_id, share, worker(agent(worker_id), action, share)};
    BusMessage report;
    report.kind = MessageKind::OutcomeReport;
    report.sender = worker_id;
    report.receiver = self.id();
    report.topic = topic;
    report.payload = {{"task_id", task_id}, {"f", a.result.f}, {"success", a.result.success}};
    report.provenance = {receipts.front().message_id};
    const auto back = bus_.publish(std::move(report));
    if (!back.empty() && back.front().delivered) {
      bus_.drain(self.id(), MessageKind::OutcomeReport);
      const Reputation& rep = ledger_.record(worker_id, a.result.f, trace_->tick());
      trace_->emit(self.id(), "ReputationUpdated",
                   {{"agent", worker_id}, {"f", a.result.f}, {"ewma", rep.ewma}, {"tasks", rep.tasks}, {"decay", ledger_.decay()}});
    }
    return a;
  }

  std::string topic_for(const std::string& action) const {
    auto it = settings_.action_topics.find(action);
    return it == settings_.action_topics.end() ? std::string() : it->second;
  }

  std::vector<Candidate> candidates_for(const std::string& agent_id, const std::string& topic) const {
    std::vector<Candidate> out;
    const Topic* t = topic.empty() ? nullptr : topology_.topic(topic);
    if (!t) return out;
    std::set<std::string> ids(t->subscribers.begin(), t->subscribers.end());
    ids.insert(t->owner);
    ids.erase(agent_id);
    for (const auto& id : ids) {
      if (!topology_.same_topic(agent_id, id, topic)) continue;
      out.push_back({id, ledger_.ewma(id)});
    }
    return out;
  }

  void expire_retained() {
    for (auto it = retained_.begin(); it != retained_.end();) {
      auto since = held_since_.find(it->first);
      if (since != held_since_.end() && trace_->tick() > since->second + 1) {
        it = retained_.erase(it);
      } else {
        ++it;
      }
    }
  }

  static std::string base_id(const std::string& id) {
    const auto pos = id.rfind("~g");
    return pos == std::string::npos ? id : id.substr(0, pos);
  }

  std::string unique_id(const std::string& wanted) const {
    auto taken = [&](const std::string& id) { return topology_.active(id) || topology_.retired(id); };
    if (!taken(wanted)) return wanted;
    for (std::size_t n = 2;; ++n) {
      std::string id = fmt::format("{}-{}", wanted, n);
      if (!taken(id)) return id;
    }
  }

  HierarchySettings settings_;
  TraceSink* trace_;
  BlanketTopology topology_;
  MessageBus bus_;
  ReputationLedger ledger_;
  std::map<std::string, std::unique_ptr<Agent>> agents_;
  std::map<std::string, std::unique_ptr<Agent>> archive_;
  std::map<std::string, std::vector<IncomingReport>> retained_;
  std::map<std::string, std::uint64_t> held_since_;
};

}  // namespace aif
