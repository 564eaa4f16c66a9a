#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "aif/errors.hpp"

namespace aif {

struct Topic {
  std::string owner;
  std::set<std::string> subscribers;
};

struct ApprovalRecord {
  std::uint64_t message_id = 0;
  std::string approver;
  std::string sender;
  std::string receiver;
};

/// Agent forest with a single root, expert topics and the approval log.
class BlanketTopology {
 public:
  void add_agent(const std::string& id, const std::optional<std::string>& parent) {
    require(!id.empty(), ErrorCode::ConfigError, "agent id must be non-empty");
    require(!parent_.count(id) && !retired_.count(id), ErrorCode::ConfigError, "duplicate agent id '" + id + "'");
    if (!parent) {
      require(!root_, ErrorCode::ConfigError, "the topology already has a root; '" + id + "' needs a parent");
      root_ = id;
    } else {
      require(active(*parent), ErrorCode::ConfigError, "unknown parent '" + *parent + "' for '" + id + "'");
      children_[*parent].insert(id);
    }
    parent_[id] = parent;
    children_[id];
  }

  /// Moves `id` to the archive. Its children and subscriptions pass to `successor`, or its
  /// children are adopted by its own parent when there is no successor.
  void retire(const std::string& id, const std::optional<std::string>& successor = std::nullopt) {
    require(active(id), ErrorCode::ConfigError, "cannot retire unknown agent '" + id + "'");
    const auto parent = parent_.at(id);
    if (successor) require(active(*successor), ErrorCode::ConfigError, "unknown successor '" + *successor + "'");
    require(parent || successor, ErrorCode::ConfigError, "the root can only be retired in favour of a successor");

    const std::string heir = successor ? *successor : *parent;
    for (const auto& child : children_.at(id)) {
      if (child == heir) continue;
      parent_[child] = heir;
      children_[heir].insert(child);
    }
    if (parent) children_[*parent].erase(id);
    if (successor) {
      // The successor takes the retiree's place under the same parent.
      const auto old_parent = parent_.at(*successor);
      if (old_parent) children_[*old_parent].erase(*successor);
      parent_[*successor] = parent;
      if (parent) children_[*parent].insert(*successor);
      if (root_ == id) root_ = *successor;
      for (auto& [name, topic] : topics_) {
        if (topic.subscribers.count(id)) topic.subscribers.insert(*successor);
        if (topic.owner == id) topic.owner = *successor;
      }
    }
    for (auto& [name, topic] : topics_) topic.subscribers.erase(id);
    children_.erase(id);
    parent_.erase(id);
    retired_.insert(id);
  }

  bool active(const std::string& id) const { return parent_.count(id) > 0; }
  bool retired(const std::string& id) const { return retired_.count(id) > 0; }
  const std::optional<std::string>& root() const noexcept { return root_; }

  std::optional<std::string> parent_of(const std::string& id) const {
    auto it = parent_.find(id);
    return it == parent_.end() ? std::nullopt : it->second;
  }

  std::vector<std::string> children(const std::string& id) const {
    auto it = children_.find(id);
    if (it == children_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  std::vector<std::string> agents() const {
    std::vector<std::string> out;
    for (const auto& [id, p] : parent_) out.push_back(id);
    return out;
  }

  std::vector<std::string> retired_agents() const { return {retired_.begin(), retired_.end()}; }

  bool parent_child(const std::string& a, const std::string& b) const {
    return parent_of(a) == b || parent_of(b) == a;
  }

  void create_topic(const std::string& name, const std::string& owner) {
    require(active(owner), ErrorCode::ConfigError, "unknown topic owner '" + owner + "'");
    require(!topics_.count(name), ErrorCode::ConfigError, "duplicate topic '" + name + "'");
    topics_[name] = Topic{owner, {}};
  }

  void subscribe(const std::string& topic, const std::string& agent) {
    require(topics_.count(topic) > 0, ErrorCode::ConfigError, "unknown topic '" + topic + "'");
    require(active(agent), ErrorCode::ConfigError, "unknown subscriber '" + agent + "'");
    topics_[topic].subscribers.insert(agent);
  }

  const std::map<std::string, Topic>& topics() const noexcept { return topics_; }

  const Topic* topic(const std::string& name) const {
    auto it = topics_.find(name);
    return it == topics_.end() ? nullptr : &it->second;
  }

  /// Receiver subscribes to the topic and the sender either subscribes or owns it.
  bool same_topic(const std::string& sender, const std::string& receiver, const std::string& topic) const {
    const Topic* t = this->topic(topic);
    if (!t) return false;
    const bool receiver_in = t->subscribers.count(receiver) > 0 || t->owner == receiver;
    const bool sender_in = t->subscribers.count(sender) > 0 || t->owner == sender;
    return receiver_in && sender_in;
  }

  void record_approval(ApprovalRecord r) { approvals_.push_back(std::move(r)); }
  const std::vector<ApprovalRecord>& approvals() const noexcept { return approvals_; }

  /// The approval `message_id` was granted by the sender's parent for this exact pair.
  bool approved(std::uint64_t message_id, const std::string& sender, const std::string& receiver) const {
    const auto parent = parent_of(sender);
    if (!parent) return false;
    return std::any_of(approvals_.begin(), approvals_.end(), [&](const ApprovalRecord& a) {
      return a.message_id == message_id && a.approver == *parent && a.sender == sender && a.receiver == receiver;
    });
  }

  /// Why a delivery is allowed, or nullopt when it crosses a blanket without approval.
  std::optional<std::string> authorize(const std::string& sender, const std::string& receiver,
                                       const std::optional<std::string>& topic,
                                       const std::vector<std::uint64_t>& provenance) const {
    if (!active(sender) || !active(receiver)) return std::nullopt;
    if (parent_child(sender, receiver)) return "parent-child";
    if (topic && same_topic(sender, receiver, *topic)) return "topic:" + *topic;
    for (auto id : provenance) {
      if (approved(id, sender, receiver)) return "approval:" + std::to_string(id);
    }
    return std::nullopt;
  }

  /// Exactly one root; every other agent reaches it through active parents.
  bool is_forest() const {
    if (parent_.empty()) return true;
    if (!root_ || !active(*root_)) return false;
    std::size_t roots = 0;
    for (const auto& [id, p] : parent_) {
      if (!p) {
        ++roots;
        continue;
      }
      std::set<std::string> seen{id};
      auto cur = p;
      while (cur) {
        if (!active(*cur) || !seen.insert(*cur).second) return false;
        cur = parent_.at(*cur);
      }
    }
    return roots == 1;
  }

  nlohmann::json to_json() const {
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& [id, p] : parent_) {
      agents.push_back({{"id", id}, {"parent", p ? nlohmann::json(*p) : nlohmann::json(nullptr)}, {"children", children(id)}});
    }
    nlohmann::json topics = nlohmann::json::object();
    for (const auto& [name, t] : topics_) topics[name] = {{"owner", t.owner}, {"subscribers", t.subscribers}};
    return {{"root", root_ ? nlohmann::json(*root_) : nlohmann::json(nullptr)},
            {"agents", std::move(agents)},
            {"topics", std::move(topics)},
            {"retired", retired_agents()},
            {"approvals", approvals_.size()}};
  }

 private:
  std::map<std::string, std::optional<std::string>> parent_;
  std::map<std::string, std::set<std::string>> children_;
  std::set<std::string> retired_;
  std::optional<std::string> root_;
  std::map<std::string, Topic> topics_;
  std::vector<ApprovalRecord> approvals_;
};

}  // namespace aif
