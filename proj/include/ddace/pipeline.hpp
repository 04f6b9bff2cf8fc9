#pragma once

#include <string>
#include <vector>

#include "ddace/graph_refine.hpp"
#include "ddace/metrics.hpp"
#include "ddace/svg.hpp"
#include "ddace/taskgen.hpp"

namespace ddace {

/// Everything a run needs, assembled from config file + CLI flags (flags
/// take precedence).
struct RunConfig {
  double split_ratio = 0.9;
  std::uint64_t seed = 0;
  int spectral_k = 2;
  bool no_spectral = false;  // ablation: fully connected edge index
  LaplacianMode laplacian = LaplacianMode::edge_similarity;
  GpConfig gp;
  int gat_hidden = 32;
  int gru_hidden = 128;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  int max_epochs = 300;
  bool render = false;
};

/// Apply `key=value` lines from a flat config file.
void apply_config_file(RunConfig& cfg, const std::string& path);

struct Corpus {
  ScenarioSpec scenario;
  std::vector<Demonstration> demos;
  std::vector<std::string> files;  // demo file names, sorted
};

Corpus load_corpus(const std::string& dir);

struct TrainArtifacts {
  TgnModel model;
  TrajectoryModel traj;
  RefinedEdgeSet edges;
  std::vector<double> loss_history;
  std::vector<int> train_idx, test_idx;
};

/// Split, refine edges, train the TGN, and fit the trajectory model.
TrainArtifacts train_pipeline(const Corpus& corpus, const RunConfig& cfg);

void save_artifacts(const TrainArtifacts& art, const Corpus& corpus,
                    const std::string& model_dir);

struct LoadedModel {
  TgnModel model;
  TrajectoryModel traj;
  std::vector<std::string> test_files;
};
LoadedModel load_artifacts(const std::string& model_dir);

/// Scenario instance for one episode: initial positions from the held-out
/// demonstration's first frame.
ScenarioSpec scenario_for_demo(const ScenarioSpec& base, const Demonstration& demo);

struct EvalArtifacts {
  MetricsReport report;
  std::vector<ExecutionTrace> traces;
  std::vector<int> episode_demo_idx;
};

/// Run one episode per held-out demonstration and score against the demo's
/// own ground truth.
EvalArtifacts eval_pipeline(TgnModel& model, const TrajectoryModel& traj,
                            const Corpus& corpus, const std::vector<int>& test_idx);

void write_eval_outputs(const EvalArtifacts& ev, const Corpus& corpus,
                        const std::string& out_dir, bool render,
                        const std::vector<double>* loss_history);

void render_episode_svg(const ExecutionTrace& trace, const EpisodeRef& ref,
                        const ScenarioSpec& spec, const std::string& path);

std::string loss_history_csv(const std::vector<double>& history);

/// Edge index for the TGN: refined E' mapped to node row indices, or the
/// fully connected graph under the ablation flag.
std::vector<std::pair<int, int>> edge_index_for(const RefinedEdgeSet& edges,
                                                const ScenarioSpec& scenario,
                                                bool no_spectral);

}  // namespace ddace
