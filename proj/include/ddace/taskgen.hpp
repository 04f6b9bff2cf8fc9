#pragma once

#include <string>
#include <vector>

#include "ddace/executor.hpp"

namespace ddace {

enum class TaskFamily { transport, relay, screen, curves };

std::string family_name(TaskFamily f);
TaskFamily family_from_name(const std::string& s);

struct TaskSpec {
  TaskFamily family = TaskFamily::transport;
  int n_robots = 0;   // relay: 4..11; other families have fixed teams
  int n_actions = 0;  // screen: 2..4; other families have fixed vocabularies
  int n_demos = 30;
  double sigma_pos = 0.0;  // Gaussian jitter on initial positions
  std::uint64_t seed = 0;
};

struct GeneratedTask {
  std::vector<Demonstration> demos;
  ScenarioSpec scenario;               // canonical (unjittered) scenario
  std::vector<ScriptStep> reference;   // ground-truth step script
  int expected_keyframes = 0;          // initial frame + one per step
};

/// Deterministically synthesize a demonstration corpus for one family.
GeneratedTask gen_task(const TaskSpec& spec);

struct Preset {
  std::string name;
  bool base = false;  // the four headline tasks
  TaskSpec spec;
};

/// task1..task4 plus the case-study sweeps (relay team sizes, screen
/// action-space sizes).
std::vector<Preset> catalog();

TaskSpec preset_spec(const std::string& name);

/// Write demo_NNN.csv files and the scenario sidecar into `dir`.
void write_task(const GeneratedTask& task, const std::string& dir);

}  // namespace ddace
