#include "ddace/executor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddace {

WorldState WorldState::initial(const ScenarioSpec& spec) {
  WorldState ws;
  for (const ScenarioNode& n : spec.nodes) ws.positions.push_back(n.start);
  for (auto [obj, carrier] : spec.attachments) ws.attachments[obj] = carrier;
  ws.activity.resize(spec.nodes.size());
  return ws;
}

std::vector<GoalCondition> resolve_goals(const ScenarioSpec& spec,
                                         const WorldState& ws) {
  std::vector<GoalCondition> out;
  for (GoalCondition g : spec.goals) {
    if (g.ref_node >= 0) {
      g.position = ws.positions[size_t(spec.node_index(g.ref_node))];
      g.ref_node = -1;
    }
    out.push_back(g);
  }
  return out;
}

bool goals_satisfied(const std::vector<GoalCondition>& goals,
                     const ScenarioSpec& spec, const WorldState& ws) {
  for (const GoalCondition& g : goals) {
    if (dist(ws.positions[size_t(spec.node_index(g.node))], g.position) > g.tol) {
      return false;
    }
  }
  return true;
}

std::pair<ActionStep, GruState> plan_step(TgnModel& model, const WorldState& ws,
                                          const ScenarioSpec& spec,
                                          const GruState& prev) {
  const int n = int(spec.nodes.size());
  if (model.config.num_nodes != n) {
    throw InputError("plan_step: model trained on " +
                     std::to_string(model.config.num_nodes) +
                     " nodes, scenario has " + std::to_string(n));
  }
  for (int i = 0; i < n; ++i) {
    if (model.node_ids[size_t(i)] != spec.nodes[size_t(i)].desc.id) {
      throw InputError("plan_step: scenario node order differs from training");
    }
  }
  for (const RobotActivity& a : ws.activity) {
    if (a.action != 0) {
      throw InputError("plan_step: decision epoch opened while a robot is active");
    }
  }
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    Vec2 p = spec.normalize(ws.positions[size_t(i)]);
    x(i, 0) = p.x;
    x(i, 1) = p.y;
  }
  return predict_next_step(model, x, prev);
}

namespace {

/// Nearest node with an available GP pair, excluding the mover and anything
/// it is effectively standing on. Ties break to the lowest node id.
int resolve_motion_target(int mover_idx, const TrajectoryModel& tm,
                          const WorldState& ws, const ScenarioSpec& spec) {
  const NodeDescriptor& mover = spec.nodes[size_t(mover_idx)].desc;
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < spec.nodes.size(); ++j) {
    if (int(j) == mover_idx) continue;
    const NodeDescriptor& cand = spec.nodes[j].desc;
    if (!tm.has(pair_key(mover, cand, tm.config))) continue;
    double d = dist(ws.positions[size_t(mover_idx)], ws.positions[j]);
    if (d <= kGoalEpsilon) continue;  // already there
    if (d < best_d - 1e-12) {
      best_d = d;
      best = cand.id;
    }
  }
  return best;
}

/// New carrier for a handover: nearest other robot, lowest id on ties.
int resolve_handover_target(int actor_idx, const WorldState& ws,
                            const ScenarioSpec& spec) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < spec.nodes.size(); ++j) {
    if (int(j) == actor_idx) continue;
    if (spec.nodes[j].desc.kind != NodeKind::robot) continue;
    double d = dist(ws.positions[size_t(actor_idx)], ws.positions[j]);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = spec.nodes[j].desc.id;
    }
  }
  return best;
}

}  // namespace

void execute_step(const ActionStep& step, const TrajectoryModel& tm,
                  WorldState& ws, const ScenarioSpec& spec, ExecutionTrace& trace,
                  const std::map<int, int>* target_override) {
  const int n = int(spec.nodes.size());
  EpochRecord epoch;
  epoch.start_clock = ws.clock;
  epoch.snapshot.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    epoch.snapshot(i, 0) = ws.positions[size_t(i)].x;
    epoch.snapshot(i, 1) = ws.positions[size_t(i)].y;
  }
  epoch.step = step;

  // Launch activities.
  struct Handover {
    int actor_idx;
    int new_carrier_id;
  };
  std::vector<Handover> handovers;
  for (int i = 0; i < n; ++i) {
    const NodeDescriptor& nd = spec.nodes[size_t(i)].desc;
    if (nd.kind != NodeKind::robot) continue;
    const int action = step.actions[size_t(i)];
    if (action == 0) continue;
    const int id = nd.id;

    RobotActivity act;
    act.action = action;
    if (spec.vocab.is_motion(action)) {
      int target = -1;
      if (target_override != nullptr && target_override->count(id)) {
        target = target_override->at(id);
      } else {
        target = resolve_motion_target(i, tm, ws, spec);
      }
      if (target < 0) {
        epoch.faults.push_back("node " + std::to_string(id) +
                               ": no reachable target for action " +
                               spec.vocab.name(action));
        ++trace.fault_counts[id];
        continue;
      }
      const NodeDescriptor& tnd = spec.nodes[size_t(spec.node_index(target))].desc;
      const std::string key = pair_key(nd, tnd, tm.config);
      if (!tm.has(key)) {
        epoch.faults.push_back("node " + std::to_string(id) + ": no GP pair " + key);
        ++trace.fault_counts[id];
        continue;
      }
      Vec2 target_pos = ws.positions[size_t(spec.node_index(target))];
      if (dist(ws.positions[size_t(i)], target_pos) <= kChordEpsilon) {
        epoch.faults.push_back("node " + std::to_string(id) +
                               ": degenerate chord to target " +
                               std::to_string(target));
        ++trace.fault_counts[id];
        continue;
      }
      act.target = target;
      act.path = adapt(tm.pairs.at(key), ws.positions[size_t(i)], target_pos);
      act.duration = arc_length(act.path) / spec.speed;
      epoch.motions[id] = act.path;
      trace.motions[id].push_back(act.path);
    } else {
      act.duration = spec.vocab.duration(action);
      // A carried object changes hands when its carrier acts stationary.
      for (auto [obj, carrier] : ws.attachments) {
        if (carrier == id) {
          int new_carrier = -1;
          if (target_override != nullptr && target_override->count(id)) {
            new_carrier = target_override->at(id);
          } else {
            new_carrier = resolve_handover_target(i, ws, spec);
          }
          if (new_carrier >= 0) {
            act.target = new_carrier;
            handovers.push_back({i, new_carrier});
          }
        }
      }
    }
    ws.activity[size_t(i)] = act;
    epoch.robot_durations[id] = act.duration;
    trace.executed[id].push_back(action);
  }

  // The epoch lasts until the slowest active robot finishes.
  double duration = 0.0;
  for (const RobotActivity& a : ws.activity) {
    duration = std::max(duration, a.action != 0 ? a.duration : 0.0);
  }
  epoch.duration = duration;

  // Advance the world in dt slices (final slice lands exactly on the end).
  std::vector<double> times;
  for (double t = spec.dt; t < duration - 1e-12; t += spec.dt) times.push_back(t);
  if (duration > 0.0) times.push_back(duration);
  for (double t : times) {
    for (int i = 0; i < n; ++i) {
      RobotActivity& a = ws.activity[size_t(i)];
      if (a.action == 0 || a.path.empty()) continue;
      double s = std::min(spec.speed * t, arc_length(a.path));
      ws.positions[size_t(i)] =
          t >= a.duration ? a.path.back() : point_at_arclength(a.path, s);
    }
    // Attached objects ride their carriers.
    for (auto [obj, carrier] : ws.attachments) {
      ws.positions[size_t(spec.node_index(obj))] =
          ws.positions[size_t(spec.node_index(carrier))];
    }
    for (int i = 0; i < n; ++i) {
      trace.ticks.push_back({ws.clock + t, spec.nodes[size_t(i)].desc.id,
                             ws.positions[size_t(i)],
                             ws.activity[size_t(i)].action});
    }
  }

  // Epoch completion: handovers land, activities clear.
  for (const Handover& h : handovers) {
    for (auto& [obj, carrier] : ws.attachments) {
      if (carrier == spec.nodes[size_t(h.actor_idx)].desc.id) {
        carrier = h.new_carrier_id;
        ws.positions[size_t(spec.node_index(obj))] =
            ws.positions[size_t(spec.node_index(carrier))];
      }
    }
  }
  for (RobotActivity& a : ws.activity) a = RobotActivity{};
  ws.clock += duration;
  trace.epochs.push_back(std::move(epoch));
}

namespace {

ExecutionTrace run_with_policy(
    const std::function<ActionStep(const WorldState&, int)>& policy,
    const std::function<const std::map<int, int>*(int)>& targets_for_epoch,
    const TrajectoryModel& tm, const ScenarioSpec& spec) {
  ExecutionTrace trace;
  WorldState ws = WorldState::initial(spec);
  std::vector<GoalCondition> goals = resolve_goals(spec, ws);
  int idle_streak = 0;

  for (int epoch = 0; epoch < spec.max_steps; ++epoch) {
    if (goals_satisfied(goals, spec, ws)) {
      trace.halt_reason = "goals";
      break;
    }
    ActionStep step = policy(ws, epoch);
    bool any_action = false;
    for (size_t i = 0; i < spec.nodes.size(); ++i) {
      if (spec.nodes[i].desc.kind == NodeKind::robot && step.actions[i] != 0) {
        any_action = true;
      }
    }
    if (!any_action) {
      ++idle_streak;
      EpochRecord idle_epoch;
      idle_epoch.start_clock = ws.clock;
      idle_epoch.step = step;
      idle_epoch.snapshot.resize(int(spec.nodes.size()), 2);
      for (size_t i = 0; i < spec.nodes.size(); ++i) {
        idle_epoch.snapshot(int(i), 0) = ws.positions[i].x;
        idle_epoch.snapshot(int(i), 1) = ws.positions[i].y;
      }
      trace.epochs.push_back(std::move(idle_epoch));
      if (idle_streak >= 2) {
        trace.halt_reason = "idle";
        break;
      }
      continue;
    }
    idle_streak = 0;
    execute_step(step, tm, ws, spec, trace, targets_for_epoch(epoch));
  }
  if (trace.halt_reason.empty()) {
    trace.halt_reason = goals_satisfied(goals, spec, ws) ? "goals" : "max_steps";
  }

  trace.goal_flags.clear();
  for (const GoalCondition& g : goals) {
    trace.goal_flags.push_back(
        dist(ws.positions[size_t(spec.node_index(g.node))], g.position) <= g.tol);
  }
  trace.success = std::all_of(trace.goal_flags.begin(), trace.goal_flags.end(),
                              [](bool b) { return b; });
  trace.final_clock = ws.clock;
  return trace;
}

}  // namespace

ExecutionTrace run_episode(TgnModel& model, const TrajectoryModel& tm,
                           const ScenarioSpec& spec) {
  GruState state = GruState::zero(model.config);
  auto policy = [&](const WorldState& ws, int) {
    auto [step, next] = plan_step(model, ws, spec, state);
    state = next;
    return step;
  };
  auto no_targets = [](int) -> const std::map<int, int>* { return nullptr; };
  return run_with_policy(policy, no_targets, tm, spec);
}

ExecutionTrace run_scripted_episode(const std::vector<ScriptStep>& script,
                                    const TrajectoryModel& tm,
                                    const ScenarioSpec& spec) {
  const int n = int(spec.nodes.size());
  std::vector<std::map<int, int>> overrides(script.size());
  for (size_t e = 0; e < script.size(); ++e) {
    for (const ScriptAction& a : script[e].actions) {
      if (a.target >= 0) overrides[e][a.robot] = a.target;
    }
  }
  auto policy = [&](const WorldState&, int epoch) {
    ActionStep step;
    step.actions.assign(size_t(n), 0);
    step.logits = Eigen::MatrixXd::Zero(n, spec.vocab.size());
    if (epoch < int(script.size())) {
      for (const ScriptAction& a : script[size_t(epoch)].actions) {
        step.actions[size_t(spec.node_index(a.robot))] = a.action;
      }
    }
    return step;
  };
  auto targets = [&](int epoch) -> const std::map<int, int>* {
    if (epoch < int(overrides.size())) return &overrides[size_t(epoch)];
    return nullptr;
  };
  return run_with_policy(policy, targets, tm, spec);
}

std::string serialize_trace(const ExecutionTrace& trace, const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "clock,node_id,x,y,action_id\n";
  for (const TickRecord& t : trace.ticks) {
    out << format_double(t.clock) << "," << t.node_id << ","
        << format_double(t.position.x) << "," << format_double(t.position.y) << ","
        << t.action << "\n";
  }
  out << "# halt: " << trace.halt_reason << " success: " << (trace.success ? 1 : 0)
      << " clock: " << format_double(trace.final_clock) << "\n";
  for (size_t e = 0; e < trace.epochs.size(); ++e) {
    const EpochRecord& ep = trace.epochs[e];
    out << "# epoch " << e << ": start " << format_double(ep.start_clock)
        << " duration " << format_double(ep.duration);
    for (auto& [id, d] : ep.robot_durations) {
      out << " n" << id << "=" << spec.vocab.name(
                 ep.step.actions[size_t(spec.node_index(id))])
          << "/" << format_double(d);
    }
    for (const std::string& f : ep.faults) out << " FAULT[" << f << "]";
    out << "\n";
  }
  return out.str();
}

}  // namespace ddace
