#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddace/geometry.hpp"

namespace ddace {

enum class NodeKind { robot, goal, object };

std::string kind_name(NodeKind k);
NodeKind kind_from_name(const std::string& s);

struct NodeDescriptor {
  int id = 0;
  NodeKind kind = NodeKind::robot;
  std::string modality;  // optional free-form tag ("ugv", "uav", ...)

  bool operator==(const NodeDescriptor&) const = default;
};

/// Action id 0 is reserved for idle and is not listed here; entry i of
/// `actions` describes action id i+1.
struct ActionInfo {
  std::string name;
  bool motion = false;    // motion-class actions produce trajectory segments
  double duration = 1.0;  // seconds, used by stationary actions at runtime

  bool operator==(const ActionInfo&) const = default;
};

struct ActionVocab {
  std::vector<ActionInfo> actions;

  /// Total number of action ids including idle.
  int size() const { return int(actions.size()) + 1; }
  bool valid_id(int id) const { return id >= 0 && id < size(); }
  bool is_motion(int id) const {
    return id > 0 && actions[size_t(id - 1)].motion;
  }
  double duration(int id) const {
    return id > 0 ? actions[size_t(id - 1)].duration : 0.0;
  }
  const std::string& name(int id) const;

  bool operator==(const ActionVocab&) const = default;
};

/// "node `node` must end within `tol` of a position": either an absolute
/// position, or (ref_node >= 0) the position of another node resolved at
/// episode start.
struct GoalCondition {
  int node = 0;
  int ref_node = -1;
  Vec2 position{};
  double tol = 0.05;
};

struct ScenarioNode {
  NodeDescriptor desc;
  Vec2 start{};
};

struct ScenarioSpec {
  std::string name;
  double xmin = 0, ymin = 0, xmax = 1, ymax = 1;
  double speed = 1.0;  // robot speed, workspace units / s
  double dt = 0.05;    // simulation tick, s
  int max_steps = 20;  // decision-epoch cap
  ActionVocab vocab;
  std::vector<ScenarioNode> nodes;
  std::vector<std::pair<int, int>> attachments;  // object id -> carrier id
  std::vector<GoalCondition> goals;

  int node_index(int id) const;
  const ScenarioNode& node(int id) const { return nodes[size_t(node_index(id))]; }

  /// Map a workspace position into the unit square used as model input.
  Vec2 normalize(Vec2 p) const {
    return {(p.x - xmin) / (xmax - xmin), (p.y - ymin) / (ymax - ymin)};
  }
};

ScenarioSpec load_scenario(const std::string& path);
void save_scenario(const ScenarioSpec& spec, const std::string& path);
std::string serialize_scenario(const ScenarioSpec& spec);

}  // namespace ddace
