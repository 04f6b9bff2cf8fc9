#include "ddace/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace ddace {

namespace {

constexpr int kLeadIdleFrames = 4;
constexpr int kTrailIdleFrames = 4;

enum class PathKind { line, arc, spiral };

struct StepPart {
  int robot = 0;   // node id
  int action = 0;
  int target = -1; // node id
  bool motion = false;
  PathKind kind = PathKind::line;
  double bow = 0.0;  // arc control offset as a fraction of the chord
};

struct GenStep {
  std::vector<StepPart> parts;
  int frames = 24;
};

struct FamilyPlan {
  ScenarioSpec scenario;
  std::vector<GenStep> steps;
};

Polyline sample_line(Vec2 a, Vec2 b, int frames) {
  Polyline p;
  for (int f = 0; f < frames; ++f) {
    p.push_back(lerp(a, b, double(f) / double(frames - 1)));
  }
  return p;
}

Polyline sample_arc(Vec2 a, Vec2 b, double bow, int frames) {
  Vec2 chord = b - a;
  double len = norm(chord);
  Vec2 perp{-chord.y / len, chord.x / len};  // left of the travel direction
  Vec2 ctrl = lerp(a, b, 0.5) + perp * (bow * len);
  Polyline p;
  for (int f = 0; f < frames; ++f) {
    double t = double(f) / double(frames - 1);
    double u = 1.0 - t;
    Vec2 q = a * (u * u) + ctrl * (2.0 * u * t) + b * (t * t);
    p.push_back(q);
  }
  return p;
}

/// Inward spiral: one full revolution from the start radius down to the
/// target itself (r(t) = r0 (1 - t), phi(t) = phi0 + 2 pi t).
Polyline sample_spiral(Vec2 start, Vec2 center, int frames) {
  double r0 = dist(start, center);
  double phi0 = std::atan2(start.y - center.y, start.x - center.x);
  Polyline p;
  for (int f = 0; f < frames; ++f) {
    double t = double(f) / double(frames - 1);
    double r = r0 * (1.0 - t);
    double phi = phi0 + 2.0 * M_PI * t;
    p.push_back({center.x + r * std::cos(phi), center.y + r * std::sin(phi)});
  }
  return p;
}

// --- family layouts -------------------------------------------------------

FamilyPlan plan_transport() {
  FamilyPlan plan;
  ScenarioSpec& s = plan.scenario;
  s.name = "transport";
  s.xmin = 0; s.ymin = 0; s.xmax = 10; s.ymax = 10;
  s.vocab.actions = {{"move", true, 0.0}, {"transfer", false, 1.0}};
  s.nodes = {
      {{0, NodeKind::robot, "ugv"}, {1.0, 2.0}},
      {{1, NodeKind::robot, "uav"}, {3.5, 2.0}},
      {{2, NodeKind::robot, "ugv"}, {6.5, 2.0}},
      {{3, NodeKind::object, ""}, {1.0, 2.0}},
      {{4, NodeKind::goal, ""}, {9.0, 2.0}},
  };
  s.attachments = {{3, 0}};  // cargo starts on R1
  s.goals = {{0, 1, {}, kGoalEpsilon},
             {1, 2, {}, kGoalEpsilon},
             {2, 4, {}, kGoalEpsilon},
             {3, 4, {}, kGoalEpsilon}};
  const int kMove = 1, kTransfer = 2;
  plan.steps = {
      {{{0, kMove, 1, true, PathKind::line}}, 24},
      {{{0, kTransfer, 1, false}}, 12},
      {{{1, kMove, 2, true, PathKind::line}}, 24},
      {{{1, kTransfer, 2, false}}, 12},
      {{{2, kMove, 4, true, PathKind::line}}, 24},
  };
  s.max_steps = int(plan.steps.size()) + 5;
  return plan;
}

FamilyPlan plan_relay(int n_robots) {
  if (n_robots < 4 || n_robots > 11) {
    throw InputError("relay supports 4..11 robots, got " +
                     std::to_string(n_robots));
  }
  FamilyPlan plan;
  ScenarioSpec& s = plan.scenario;
  s.name = "relay-n" + std::to_string(n_robots);
  s.xmin = 0; s.ymin = 0; s.xmax = 10; s.ymax = 10;
  s.vocab.actions = {{"move", true, 0.0}};

  // R1 and R2 flank the chain head; the chain runs along y = 3 with
  // geometrically shrinking gaps so each mover's demonstrated target is
  // also its nearest non-colocated candidate at runtime.
  s.nodes.push_back({{0, NodeKind::robot, ""}, {1.0, 3.8}});
  s.nodes.push_back({{1, NodeKind::robot, ""}, {1.0, 2.2}});
  double x = 2.2;
  for (int j = 2; j < n_robots; ++j) {
    s.nodes.push_back({{j, NodeKind::robot, ""}, {x, 3.0}});
    x += 1.1 * std::pow(0.82, double(j - 2));
  }
  const int goal_id = n_robots;
  s.nodes.push_back({{goal_id, NodeKind::goal, ""}, {x, 3.0}});

  const int kMove = 1;
  GenStep opening;
  opening.parts = {{0, kMove, 2, true, PathKind::line},
                   {1, kMove, 2, true, PathKind::line}};
  opening.frames = 24;
  plan.steps.push_back(opening);
  for (int j = 2; j < n_robots - 1; ++j) {
    plan.steps.push_back({{{j, kMove, j + 1, true, PathKind::line}}, 24});
  }
  plan.steps.push_back(
      {{{n_robots - 1, kMove, goal_id, true, PathKind::line}}, 24});

  s.goals = {{0, 2, {}, kGoalEpsilon}, {1, 2, {}, kGoalEpsilon}};
  for (int j = 2; j < n_robots; ++j) {
    s.goals.push_back({j, j + 1, {}, kGoalEpsilon});
  }
  s.max_steps = int(plan.steps.size()) + 5;
  return plan;
}

FamilyPlan plan_screen(int n_actions) {
  if (n_actions < 2 || n_actions > 4) {
    throw InputError("screen supports 2..4 actions, got " +
                     std::to_string(n_actions));
  }
  FamilyPlan plan;
  ScenarioSpec& s = plan.scenario;
  s.name = "screen-a" + std::to_string(n_actions);
  s.xmin = 0; s.ymin = 0; s.xmax = 10; s.ymax = 10;
  s.vocab.actions = {{"move", true, 0.0}, {"stop", false, 1.0}};
  if (n_actions >= 3) s.vocab.actions.push_back({"dribble", true, 0.0});
  if (n_actions >= 4) s.vocab.actions.push_back({"pass", false, 1.0});

  const bool with_ball = n_actions >= 4;
  s.nodes = {
      {{0, NodeKind::robot, "opponent"}, {6.0, 6.0}},
      {{1, NodeKind::robot, "teammate"}, {3.0, 3.0}},
      {{2, NodeKind::robot, "teammate"}, {5.5, 2.5}},
  };
  int goal_id = 3;
  if (with_ball) {
    s.nodes.push_back({{3, NodeKind::object, "ball"}, {3.0, 3.0}});
    s.attachments = {{3, 1}};  // ball starts with R2
    goal_id = 4;
  }
  s.nodes.push_back({{goal_id, NodeKind::goal, ""}, {8.5, 1.0}});

  const int kMove = 1, kStop = 2;
  const int kDribble = n_actions >= 3 ? 3 : kMove;
  const int kPass = 4;
  if (with_ball) {
    plan.steps.push_back({{{1, kPass, 2, false}}, 12});
  }
  plan.steps.push_back({{{0, kMove, 2, true, PathKind::line}}, 24});
  plan.steps.push_back({{{1, kMove, 0, true, PathKind::line}}, 24});
  GenStep finale;
  finale.parts = {{1, kStop, -1, false},
                  {2, kDribble, goal_id, true,
                   n_actions >= 3 ? PathKind::arc : PathKind::line, 0.35}};
  finale.frames = 36;
  plan.steps.push_back(finale);

  s.goals = {{0, 2, {}, kGoalEpsilon},
             {1, 2, {}, kGoalEpsilon},
             {2, goal_id, {}, kGoalEpsilon}};
  if (with_ball) s.goals.push_back({3, goal_id, {}, kGoalEpsilon});
  s.max_steps = int(plan.steps.size()) + 5;
  return plan;
}

FamilyPlan plan_curves() {
  FamilyPlan plan;
  ScenarioSpec& s = plan.scenario;
  s.name = "curves";
  s.xmin = 0; s.ymin = 0; s.xmax = 10; s.ymax = 10;
  s.vocab.actions = {{"move", true, 0.0}};
  // Layout is rotationally symmetric about (5,5), so the paired arcs and
  // spirals share one canonical form.
  s.nodes = {
      {{0, NodeKind::robot, ""}, {2.2, 3.2}},
      {{1, NodeKind::robot, ""}, {7.8, 6.8}},
      {{2, NodeKind::robot, ""}, {3.8, 5.6}},
      {{3, NodeKind::robot, ""}, {6.2, 4.4}},
      {{4, NodeKind::goal, ""}, {3.8, 7.6}},
      {{5, NodeKind::goal, ""}, {6.2, 2.4}},
  };
  const int kMove = 1;
  GenStep arcs;
  arcs.parts = {{0, kMove, 2, true, PathKind::arc, 0.35},
                {1, kMove, 3, true, PathKind::arc, 0.35}};
  arcs.frames = 32;
  plan.steps.push_back(arcs);
  GenStep spirals;
  spirals.parts = {{2, kMove, 4, true, PathKind::spiral},
                   {3, kMove, 5, true, PathKind::spiral}};
  spirals.frames = 48;
  plan.steps.push_back(spirals);

  s.goals = {{0, 2, {}, kGoalEpsilon},
             {1, 3, {}, kGoalEpsilon},
             {2, 4, {}, kGoalEpsilon},
             {3, 5, {}, kGoalEpsilon}};
  s.max_steps = int(plan.steps.size()) + 5;
  return plan;
}

// --- emission --------------------------------------------------------------

Demonstration emit_demo(const FamilyPlan& plan, double sigma, Rng rng) {
  const ScenarioSpec& s = plan.scenario;
  const int n = int(s.nodes.size());

  Demonstration d;
  d.vocab = s.vocab;
  for (const ScenarioNode& node : s.nodes) d.nodes.push_back(node.desc);

  std::vector<Vec2> pos;
  for (const ScenarioNode& node : s.nodes) {
    Vec2 p = node.start;
    if (sigma > 0.0) {
      p.x += sigma * rng.normal();
      p.y += sigma * rng.normal();
    }
    pos.push_back(p);
  }
  std::map<int, int> attach;
  for (auto [obj, carrier] : s.attachments) {
    attach[obj] = carrier;
    pos[size_t(s.node_index(obj))] = pos[size_t(s.node_index(carrier))];
  }

  auto push_frame = [&](const std::vector<int>& labels,
                        const std::vector<int>& targets) {
    d.frames.push_back(pos);
    d.labels.push_back(labels);
    d.targets.push_back(targets);
  };
  const std::vector<int> idle_labels(size_t(n), 0);
  const std::vector<int> no_targets(size_t(n), -1);

  for (int f = 0; f < kLeadIdleFrames; ++f) push_frame(idle_labels, no_targets);

  for (const GenStep& step : plan.steps) {
    std::vector<int> labels = idle_labels;
    std::vector<int> targets = no_targets;
    struct Motion {
      int idx;
      Polyline path;
    };
    std::vector<Motion> motions;
    for (const StepPart& part : step.parts) {
      int idx = s.node_index(part.robot);
      labels[size_t(idx)] = part.action;
      targets[size_t(idx)] = part.target;
      if (!part.motion) continue;
      Vec2 from = pos[size_t(idx)];
      Vec2 to = pos[size_t(s.node_index(part.target))];
      Polyline path;
      switch (part.kind) {
        case PathKind::line: path = sample_line(from, to, step.frames); break;
        case PathKind::arc: path = sample_arc(from, to, part.bow, step.frames); break;
        case PathKind::spiral: path = sample_spiral(from, to, step.frames); break;
      }
      motions.push_back({idx, std::move(path)});
    }
    for (int f = 0; f < step.frames; ++f) {
      for (Motion& m : motions) pos[size_t(m.idx)] = m.path[size_t(f)];
      for (auto [obj, carrier] : attach) {
        pos[size_t(s.node_index(obj))] = pos[size_t(s.node_index(carrier))];
      }
      push_frame(labels, targets);
    }
    // Handovers land when the step completes.
    for (const StepPart& part : step.parts) {
      if (part.motion || part.target < 0) continue;
      for (auto& [obj, carrier] : attach) {
        if (carrier == part.robot) {
          carrier = part.target;
          pos[size_t(s.node_index(obj))] = pos[size_t(s.node_index(carrier))];
        }
      }
    }
  }
  for (int f = 0; f < kTrailIdleFrames; ++f) push_frame(idle_labels, no_targets);
  return d;
}

FamilyPlan plan_for(const TaskSpec& spec) {
  switch (spec.family) {
    case TaskFamily::transport: return plan_transport();
    case TaskFamily::relay: return plan_relay(spec.n_robots > 0 ? spec.n_robots : 11);
    case TaskFamily::screen: return plan_screen(spec.n_actions > 0 ? spec.n_actions : 4);
    case TaskFamily::curves: return plan_curves();
  }
  throw InputError("unknown task family");
}

}  // namespace

std::string family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::transport: return "transport";
    case TaskFamily::relay: return "relay";
    case TaskFamily::screen: return "screen";
    case TaskFamily::curves: return "curves";
  }
  return "transport";
}

TaskFamily family_from_name(const std::string& s) {
  if (s == "transport") return TaskFamily::transport;
  if (s == "relay") return TaskFamily::relay;
  if (s == "screen") return TaskFamily::screen;
  if (s == "curves") return TaskFamily::curves;
  throw InputError("unknown task family '" + s + "'");
}

GeneratedTask gen_task(const TaskSpec& spec) {
  if (spec.n_demos < 1) throw InputError("gen_task: n_demos must be positive");
  if (spec.sigma_pos < 0.0) throw InputError("gen_task: sigma_pos must be >= 0");
  FamilyPlan plan = plan_for(spec);

  GeneratedTask task;
  task.scenario = plan.scenario;
  task.expected_keyframes = int(plan.steps.size()) + 1;
  for (const GenStep& step : plan.steps) {
    ScriptStep ref;
    for (const StepPart& part : step.parts) {
      ref.actions.push_back({part.robot, part.action, part.target});
    }
    task.reference.push_back(ref);
  }
  Rng base(spec.seed * 1000003ULL + 7);
  for (int i = 0; i < spec.n_demos; ++i) {
    task.demos.push_back(emit_demo(plan, spec.sigma_pos, base.fork(std::uint64_t(i))));
  }
  return task;
}

std::vector<Preset> catalog() {
  std::vector<Preset> out;
  auto make = [](std::string name, bool base, TaskFamily f, int robots,
                 int actions, std::uint64_t seed) {
    Preset p;
    p.name = std::move(name);
    p.base = base;
    p.spec.family = f;
    p.spec.n_robots = robots;
    p.spec.n_actions = actions;
    p.spec.n_demos = 30;
    p.spec.sigma_pos = 0.0;
    p.spec.seed = seed;
    return p;
  };
  out.push_back(make("task1", true, TaskFamily::transport, 3, 2, 101));
  out.push_back(make("task2", true, TaskFamily::relay, 11, 1, 102));
  out.push_back(make("task3", true, TaskFamily::screen, 3, 4, 103));
  out.push_back(make("task4", true, TaskFamily::curves, 4, 1, 104));
  for (int n = 4; n <= 11; ++n) {
    out.push_back(make("relay-n" + std::to_string(n), false, TaskFamily::relay,
                       n, 1, 102));
  }
  for (int a = 2; a <= 4; ++a) {
    out.push_back(make("screen-a" + std::to_string(a), false, TaskFamily::screen,
                       3, a, 103));
  }
  return out;
}

TaskSpec preset_spec(const std::string& name) {
  for (const Preset& p : catalog()) {
    if (p.name == name) return p.spec;
  }
  throw InputError("unknown preset '" + name + "'");
}

void write_task(const GeneratedTask& task, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_scenario(task.scenario, dir + "/scenario.txt");
  char name[32];
  for (size_t i = 0; i < task.demos.size(); ++i) {
    std::snprintf(name, sizeof(name), "demo_%03zu.csv", i);
    write_demonstration(task.demos[i], dir + "/" + name);
  }
}

}  // namespace ddace
