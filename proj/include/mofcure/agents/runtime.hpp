/*
 * Copyright 2026 The mofcure Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mofcure/agents/backend.hpp"
#include "mofcure/error.hpp"

namespace mofcure::agents {

// ===================================================================
// Plans
// ===================================================================

enum class NodeStatus { pending, in_progress, done, failed };

inline std::string_view status_name(NodeStatus s) {
  switch (s) {
    case NodeStatus::pending: return "pending";
    case NodeStatus::in_progress: return "in_progress";
    case NodeStatus::done: return "done";
    case NodeStatus::failed: return "failed";
  }
  return "?";
}

inline NodeStatus parse_status(std::string_view s) {
  for (auto st : {NodeStatus::pending, NodeStatus::in_progress, NodeStatus::done, NodeStatus::failed})
    if (status_name(st) == s) return st;
  fail(Errc::ValidationError, "unknown node status " + std::string(s));
}

struct PlanNode {
  int id = 0;  ///< stable within one plan; used to track nodes across updates
  std::string name;
  std::string description;
  NodeStatus status = NodeStatus::pending;
  std::optional<std::string> result_summary;
};

struct Plan {
  std::string goal;
  std::vector<PlanNode> nodes;
  int next_id = 1;

  bool complete() const {
    for (const auto& n : nodes)
      if (n.status != NodeStatus::done && n.status != NodeStatus::failed) return false;
    return true;
  }

  bool any_failed() const {
    for (const auto& n : nodes)
      if (n.status == NodeStatus::failed) return true;
    return false;
  }

  PlanNode* next_pending() {
    for (auto& n : nodes)
      if (n.status == NodeStatus::pending) return &n;
    return nullptr;
  }

  void add(std::string name, std::string description) {
    nodes.push_back({next_id++, std::move(name), std::move(description), NodeStatus::pending, std::nullopt});
  }
};

inline json plan_json(const Plan& p) {
  json nodes = json::array();
  for (const auto& n : p.nodes) {
    json j{{"id", n.id}, {"name", n.name}, {"description", n.description}, {"status", status_name(n.status)}};
    if (n.result_summary) j["result_summary"] = *n.result_summary;
    nodes.push_back(std::move(j));
  }
  return {{"goal", p.goal}, {"nodes", nodes}};
}

inline Plan plan_from_json(const json& j) {
  Plan p;
  p.goal = j.at("goal").get<std::string>();
  for (const auto& n : j.at("nodes")) {
    PlanNode node;
    node.id = n.at("id").get<int>();
    node.name = n.at("name").get<std::string>();
    node.description = n.at("description").get<std::string>();
    node.status = parse_status(n.at("status").get<std::string>());
    if (n.contains("result_summary")) node.result_summary = n["result_summary"].get<std::string>();
    p.next_id = std::max(p.next_id, node.id + 1);
    p.nodes.push_back(std::move(node));
  }
  return p;
}

/// Checks a single plan state: at most one node in progress, unique ids.
inline void check_plan(const Plan& p) {
  int active = 0;
  std::set<int> ids;
  for (const auto& n : p.nodes) {
    active += n.status == NodeStatus::in_progress;
    if (!ids.insert(n.id).second) fail(Errc::ValidationError, "duplicate plan node id " + std::to_string(n.id));
  }
  if (active > 1) fail(Errc::ValidationError, "more than one plan node in progress");
}

/// Checks a step between two plan states: statuses only move
/// pending -> in_progress -> {done, failed}, finished nodes are never rewritten,
/// and only pending nodes disappear.
inline void check_plan_transition(const Plan& before, const Plan& after) {
  check_plan(after);
  std::map<int, const PlanNode*> next;
  for (const auto& n : after.nodes) next[n.id] = &n;
  auto rank = [](NodeStatus s) { return s == NodeStatus::pending ? 0 : s == NodeStatus::in_progress ? 1 : 2; };
  for (const auto& n : before.nodes) {
    auto it = next.find(n.id);
    if (it == next.end()) {
      if (n.status != NodeStatus::pending) fail(Errc::ValidationError, "non-pending node " + n.name + " removed");
      continue;
    }
    const PlanNode& m = *it->second;
    if (m.name != n.name || m.description != n.description)
      fail(Errc::ValidationError, "plan node " + std::to_string(n.id) + " rewritten");
    if (rank(m.status) < rank(n.status)) fail(Errc::ValidationError, "node " + n.name + " moved backwards");
    if (rank(n.status) == 2 && (m.status != n.status || m.result_summary != n.result_summary))
      fail(Errc::ValidationError, "finished node " + n.name + " rewritten");
  }
}

// ===================================================================
// Agents and nodes
// ===================================================================

enum class NodeKind { tool, llm, agent };

inline std::string_view kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::tool: return "tool";
    case NodeKind::llm: return "llm";
    case NodeKind::agent: return "agent";
  }
  return "?";
}

struct AgentSpec;

/// What a node sees while it runs.
struct NodeContext {
  ChatBackend& backend;
  std::string agent;      ///< owning agent
  std::string signature;  ///< owning agent's registry signature
  int depth = 0;
};

/// Returns the result text; throws Error to mark the node failed.
using NodeFn = std::function<std::string(const std::string& input, NodeContext& ctx)>;

struct Node {
  std::string name;
  std::string description;
  NodeKind kind = NodeKind::tool;
  NodeFn fn;                         ///< tool and llm nodes
  std::shared_ptr<AgentSpec> agent;  ///< sub-agent nodes
};

struct AgentSpec {
  std::string name;
  std::string head_prompt;
  std::vector<Node> nodes;  ///< registry, in registration order

  AgentSpec& add(Node n) {
    if (find(n.name)) fail(Errc::Config, name + ": duplicate node name " + n.name);
    if (n.kind == NodeKind::agent ? !n.agent : !n.fn) fail(Errc::Config, name + ": node " + n.name + " has no implementation");
    nodes.push_back(std::move(n));
    return *this;
  }

  AgentSpec& add_tool(std::string node, std::string description, NodeFn fn, NodeKind kind = NodeKind::tool) {
    return add({std::move(node), std::move(description), kind, std::move(fn), nullptr});
  }

  AgentSpec& add_agent(std::string node, std::string description, std::shared_ptr<AgentSpec> sub) {
    return add({std::move(node), std::move(description), NodeKind::agent, nullptr, std::move(sub)});
  }

  const Node* find(const std::string& node) const {
    for (const auto& n : nodes)
      if (n.name == node) return &n;
    return nullptr;
  }

  /// "<name>[node,node,...]" in registry order; replays compare it.
  std::string signature() const {
    std::string s = name + "[";
    for (std::size_t i = 0; i < nodes.size(); ++i) s += (i ? "," : "") + nodes[i].name;
    return s + "]";
  }
};

// ===================================================================
// Trace
// ===================================================================

/// Append-only event log shared by an agent and its sub-agents. Each event
/// is one JSON line with a global sequence number.
class Trace {
 public:
  void add(json event) {
    event["seq"] = static_cast<int>(lines_.size()) + 1;
    lines_.push_back(event.dump());
    events_.push_back(std::move(event));
  }

  const std::vector<json>& events() const { return events_; }

  std::string text() const {
    std::string out;
    for (const auto& l : lines_) out += l + "\n";
    return out;
  }

 private:
  std::vector<std::string> lines_;
  std::vector<json> events_;
};

// ===================================================================
// Head decisions
// ===================================================================

enum class Action { create_plan, update_plan, invoke_node, finish };

struct HeadDecision {
  Action action = Action::finish;
  std::string goal;                                         ///< create_plan
  std::vector<std::pair<std::string, std::string>> add;     ///< create_plan / update_plan: (node, description)
  std::vector<std::string> remove;                          ///< update_plan: pending node names
  std::string node;                                         ///< invoke_node
  std::string input;                                        ///< invoke_node
  std::string response;                                     ///< finish
  json raw;
};

inline const json& head_decision_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["action"],
    "properties": {
      "action": {"enum": ["create_plan", "update_plan", "invoke_node", "finish"]},
      "goal": {"type": "string"},
      "nodes": {"type": "array", "items": {"type": "object", "required": ["name", "description"],
                "properties": {"name": {"type": "string"}, "description": {"type": "string"}}}},
      "remove": {"type": "array", "items": {"type": "string"}},
      "node": {"type": "string"},
      "input": {"type": "string"},
      "response": {"type": "string"}}})");
  return schema;
}

inline constexpr const char* kHeadProtocol =
    "You are the head module of an agent. Reply with one JSON object. Actions: "
    "create_plan {goal, nodes:[{name, description}]} when no plan exists; "
    "update_plan {nodes:[...] to append, remove:[pending node names]}; "
    "invoke_node {node, input} for the first pending plan node; "
    "finish {response} once every plan node is done or failed.";

namespace runtime_detail {

inline std::string bounded(const std::string& s, std::size_t limit) {
  if (s.size() <= limit) return s;
  std::size_t cut = limit;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;  // stay on a UTF-8 boundary
  return s.substr(0, cut) + " [...]";
}

inline std::string str(const json& j, const char* key) {
  if (!j.contains(key)) fail(Errc::ValidationError, std::string("missing '") + key + "'");
  if (!j[key].is_string()) fail(Errc::ValidationError, std::string("'") + key + "' must be a string");
  return j[key].get<std::string>();
}

inline std::vector<std::pair<std::string, std::string>> node_list(const json& j, const AgentSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!j.contains("nodes")) return out;
  if (!j["nodes"].is_array()) fail(Errc::ValidationError, "'nodes' must be an array");
  for (const auto& n : j["nodes"]) {
    if (!n.is_object()) fail(Errc::ValidationError, "plan node must be an object");
    auto name = str(n, "name");
    if (!spec.find(name)) fail(Errc::ValidationError, "'" + name + "' is not a registered node of " + spec.name);
    out.emplace_back(name, str(n, "description"));
  }
  return out;
}

}  // namespace runtime_detail

/// Parses and checks a decision against the agent registry and current plan.
inline HeadDecision parse_decision(const json& j, const AgentSpec& spec, const std::optional<Plan>& plan) {
  using namespace runtime_detail;
  if (!j.is_object()) fail(Errc::ValidationError, "decision must be a JSON object");
  HeadDecision d;
  d.raw = j;
  auto action = str(j, "action");
  if (action == "create_plan") {
    d.action = Action::create_plan;
    if (plan) fail(Errc::ValidationError, "a plan already exists; use update_plan");
    d.goal = str(j, "goal");
    d.add = node_list(j, spec);
    if (d.add.empty()) fail(Errc::ValidationError, "create_plan needs at least one node");
  } else if (action == "update_plan") {
    d.action = Action::update_plan;
    if (!plan) fail(Errc::ValidationError, "no plan to update");
    d.add = node_list(j, spec);
    if (j.contains("remove")) {
      if (!j["remove"].is_array()) fail(Errc::ValidationError, "'remove' must be an array");
      for (const auto& r : j["remove"]) {
        if (!r.is_string()) fail(Errc::ValidationError, "'remove' entries must be node names");
        d.remove.push_back(r.get<std::string>());
      }
    }
    for (const auto& r : d.remove) {
      bool found = false;
      for (const auto& n : plan->nodes) found |= n.name == r && n.status == NodeStatus::pending;
      if (!found) fail(Errc::ValidationError, "no pending node '" + r + "' to remove");
    }
  } else if (action == "invoke_node") {
    d.action = Action::invoke_node;
    d.node = str(j, "node");
    if (!spec.find(d.node)) fail(Errc::ValidationError, "'" + d.node + "' is not a registered node of " + spec.name);
    if (!plan) fail(Errc::ValidationError, "create a plan before invoking nodes");
    auto next = const_cast<Plan&>(*plan).next_pending();
    if (!next) fail(Errc::ValidationError, "the plan has no pending node");
    if (next->name != d.node) fail(Errc::ValidationError, "next plan step is '" + next->name + "', not '" + d.node + "'");
    if (j.contains("input")) d.input = str(j, "input");
  } else if (action == "finish") {
    d.action = Action::finish;
    d.response = str(j, "response");
    if (!plan || !(plan->complete() || plan->any_failed()))
      fail(Errc::ValidationError, "finish is allowed only when the plan is complete or a node failed");
  } else {
    fail(Errc::ValidationError, "unknown action '" + action + "'");
  }
  return d;
}

// ===================================================================
// Decision loop
// ===================================================================

struct RunOptions {
  int step_budget = 64;      ///< head decisions per agent run
  int max_retries = 3;       ///< per decision
  std::size_t summary_limit = 600;  ///< node results entering a head context
};

struct AgentResult {
  std::string response;
  bool ok = false;  ///< finished with every plan node done
  int decisions = 0;
  Plan plan;
};

/// The head's view: query, registry, plan and last node result.
inline json head_context(const AgentSpec& spec, const std::string& query, const std::optional<Plan>& plan,
                         const json& last_result, int decisions, const RunOptions& opt) {
  json nodes = json::array();
  for (const auto& n : spec.nodes)
    nodes.push_back({{"name", n.name}, {"description", n.description}, {"kind", kind_name(n.kind)}});
  return {{"agent", spec.name},     {"query", query}, {"nodes", nodes},
          {"plan", plan ? plan_json(*plan) : json(nullptr)}, {"last_result", last_result},
          {"decisions", decisions}, {"step_budget", opt.step_budget}};
}

inline AgentResult run_agent(const AgentSpec& spec, const std::string& query, ChatBackend& backend, int depth_limit,
                             Trace& trace, const RunOptions& opt = {}, int depth = 0) {
  using runtime_detail::bounded;
  if (depth_limit < 1) fail(Errc::DepthExceeded, spec.name + ": depth limit reached");
  const std::string signature = spec.signature();
  trace.add({{"event", "start"}, {"agent", spec.name}, {"depth", depth}, {"query", query}});
  std::optional<Plan> plan;
  json last_result = nullptr;
  AgentResult result;
  while (true) {
    if (result.decisions >= opt.step_budget)
      fail(Errc::StepBudgetExceeded, spec.name + ": " + std::to_string(opt.step_budget) + " decisions without finishing");
    ChatRequest req{spec.name, "head", signature,
                    {{"system", spec.head_prompt + "\n" + kHeadProtocol},
                     {"user", head_context(spec, query, plan, last_result, result.decisions, opt).dump()}},
                    head_decision_schema()};
    std::vector<std::string> rejections;
    HeadDecision d;
    try {
      d = structured_call(
          backend, req, [&](const json& j) { return parse_decision(j, spec, plan); }, opt.max_retries,
          Errc::BackendSchemaFailure, nullptr, &rejections);
    } catch (const Error&) {
      for (std::size_t k = 0; k < rejections.size(); ++k)
        trace.add({{"event", "rejected"}, {"agent", spec.name}, {"depth", depth}, {"attempt", k + 1}, {"error", rejections[k]}});
      throw;
    }
    for (std::size_t k = 0; k < rejections.size(); ++k)
      trace.add({{"event", "rejected"}, {"agent", spec.name}, {"depth", depth}, {"attempt", k + 1}, {"error", rejections[k]}});
    ++result.decisions;
    Plan before = plan ? *plan : Plan{};

    switch (d.action) {
      case Action::create_plan:
        plan = Plan{};
        plan->goal = d.goal;
        for (auto& [n, desc] : d.add) plan->add(n, desc);
        break;
      case Action::update_plan:
        for (const auto& r : d.remove)
          for (auto it = plan->nodes.begin(); it != plan->nodes.end(); ++it)
            if (it->name == r && it->status == NodeStatus::pending) {
              plan->nodes.erase(it);
              break;
            }
        for (auto& [n, desc] : d.add) plan->add(n, desc);
        break;
      case Action::invoke_node:
        plan->next_pending()->status = NodeStatus::in_progress;
        break;
      case Action::finish:
        break;
    }
    if (plan) check_plan_transition(before, *plan);
    trace.add({{"event", "decision"},
               {"agent", spec.name},
               {"depth", depth},
               {"decision", d.raw},
               {"plan", plan ? plan_json(*plan) : json(nullptr)}});

    if (d.action == Action::finish) {
      result.response = d.response;
      result.plan = *plan;
      result.ok = !plan->any_failed();
      trace.add({{"event", "finish"},
                 {"agent", spec.name},
                 {"depth", depth},
                 {"decisions", result.decisions},
                 {"ok", result.ok},
                 {"response", d.response}});
      return result;
    }
    if (d.action != Action::invoke_node) continue;

    // execute the in-progress node
    PlanNode& current = *std::find_if(plan->nodes.begin(), plan->nodes.end(),
                                      [](const PlanNode& n) { return n.status == NodeStatus::in_progress; });
    const Node& node = *spec.find(d.node);
    std::string input = d.input.empty() ? query : d.input;
    bool ok = true;
    std::string summary;
    try {
      if (node.kind == NodeKind::agent) {
        auto sub = run_agent(*node.agent, input, backend, depth_limit - 1, trace, opt, depth + 1);
        ok = sub.ok;
        summary = sub.response;
      } else {
        NodeContext ctx{backend, spec.name, signature, depth};
        summary = node.fn(input, ctx);
      }
    } catch (const Error& e) {
      if (e.code() == Errc::TranscriptMismatch) throw;
      ok = false;
      summary = e.what();
    }
    summary = bounded(summary, opt.summary_limit);
    Plan pre = *plan;
    current.status = ok ? NodeStatus::done : NodeStatus::failed;
    current.result_summary = summary;
    check_plan_transition(pre, *plan);
    last_result = {{"node", node.name}, {"status", status_name(current.status)}, {"summary", summary}};
    trace.add({{"event", "node_result"},
               {"agent", spec.name},
               {"depth", depth},
               {"node", node.name},
               {"status", status_name(current.status)},
               {"summary", summary}});
  }
}

struct AgentRun {
  AgentResult result;
  std::string trace;
};

inline AgentRun run_agent(const AgentSpec& spec, const std::string& query, ChatBackend& backend, int depth_limit = 4,
                          const RunOptions& opt = {}) {
  Trace trace;
  auto r = run_agent(spec, query, backend, depth_limit, trace, opt);
  return {std::move(r), trace.text()};
}

}  // namespace mofcure::agents
