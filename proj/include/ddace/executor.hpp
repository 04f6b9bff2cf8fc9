#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddace/gp.hpp"
#include "ddace/tgn.hpp"

namespace ddace {

struct RobotActivity {
  int action = 0;       // 0 = idle
  int target = -1;      // node id, -1 when not applicable
  Polyline path;        // motion actions only
  double duration = 0.0;
};

struct WorldState {
  std::vector<Vec2> positions;          // by scenario node index
  std::map<int, int> attachments;       // object id -> carrier id
  double clock = 0.0;
  std::vector<RobotActivity> activity;  // by node index; idle between epochs

  static WorldState initial(const ScenarioSpec& spec);
};

struct TickRecord {
  double clock = 0.0;
  int node_id = 0;
  Vec2 position{};
  int action = 0;
};

struct EpochRecord {
  double start_clock = 0.0;
  double duration = 0.0;
  Eigen::MatrixXd snapshot;             // raw positions at the decision epoch
  ActionStep step;
  std::map<int, double> robot_durations;   // node id -> motion/action time
  std::map<int, Polyline> motions;         // node id -> sampled trajectory
  std::vector<std::string> faults;
};

struct ExecutionTrace {
  std::vector<EpochRecord> epochs;
  std::vector<TickRecord> ticks;
  std::map<int, std::vector<int>> executed;        // node id -> action chain
  std::map<int, std::vector<Polyline>> motions;    // node id -> motions in order
  std::map<int, int> fault_counts;                 // node id -> faults
  std::vector<bool> goal_flags;
  bool success = false;
  std::string halt_reason;  // "goals" | "idle" | "max_steps"
  double final_clock = 0.0;
};

/// Goal positions with node references resolved against episode-start
/// positions.
std::vector<GoalCondition> resolve_goals(const ScenarioSpec& spec,
                                         const WorldState& ws);

bool goals_satisfied(const std::vector<GoalCondition>& goals,
                     const ScenarioSpec& spec, const WorldState& ws);

/// High-level policy query at a decision epoch (all robots idle): builds
/// the normalized snapshot and delegates to the TGN.
std::pair<ActionStep, GruState> plan_step(TgnModel& model, const WorldState& ws,
                                          const ScenarioSpec& spec,
                                          const GruState& prev);

/// Execute one decision epoch: motion actions follow GP-adapted paths at
/// constant speed, stationary actions wait out their duration and hand over
/// any carried object; the epoch ends when the slowest active robot
/// finishes. Faults are recorded, not thrown.
void execute_step(const ActionStep& step, const TrajectoryModel& tm,
                  WorldState& ws, const ScenarioSpec& spec, ExecutionTrace& trace,
                  const std::map<int, int>* target_override = nullptr);

/// plan -> execute until goals hold, two consecutive all-idle predictions,
/// or max_steps epochs.
ExecutionTrace run_episode(TgnModel& model, const TrajectoryModel& tm,
                           const ScenarioSpec& spec);

/// Ground-truth replay: the scripted steps stand in for the TGN policy,
/// with explicit targets.
struct ScriptAction {
  int robot = 0;   // node id
  int action = 0;
  int target = -1; // node id
};
struct ScriptStep {
  std::vector<ScriptAction> actions;
};

ExecutionTrace run_scripted_episode(const std::vector<ScriptStep>& script,
                                    const TrajectoryModel& tm,
                                    const ScenarioSpec& spec);

/// Tick CSV (`clock,node_id,x,y,action_id`) followed by an epoch summary
/// comment block.
std::string serialize_trace(const ExecutionTrace& trace, const ScenarioSpec& spec);

}  // namespace ddace
