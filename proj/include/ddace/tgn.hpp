#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddace/demo.hpp"

namespace ddace {

struct TgnConfig {
  int gat_hidden = 32;   // per-head width
  int heads = 2;         // fixed by the architecture
  int gat_layers = 3;    // fixed by the architecture
  int gru_hidden = 128;
  int gru_layers = 2;
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  int max_epochs = 300;
  std::uint64_t seed = 0;
  int num_actions = 0;  // |A|, including idle
  int num_nodes = 0;    // |N|

  int feature_dim() const { return heads * gat_hidden; }
};

enum class RunMode { train, eval };

/// Attention connectivity over node row indices: E' expanded to both
/// directions plus self-loops, grouped by destination.
struct AttentionGraph {
  int n = 0;
  std::vector<std::vector<int>> in_neighbors;

  static AttentionGraph build(int n, const std::vector<std::pair<int, int>>& edges);
};

struct GatLayerParams {
  std::vector<Eigen::MatrixXd> w;      // per head: d_in x p
  std::vector<Eigen::MatrixXd> a_src;  // per head: p x 1
  std::vector<Eigen::MatrixXd> a_dst;  // per head: p x 1
  Eigen::MatrixXd bn_gamma, bn_beta;   // F x 1
  Eigen::MatrixXd bn_mean, bn_var;     // running statistics, F x 1
};

struct GruLayerParams {
  Eigen::MatrixXd w_ih, w_hh;  // 3H x in, 3H x H (gate order r, z, n)
  Eigen::MatrixXd b_ih, b_hh;  // 3H x 1
};

struct TgnModel {
  TgnConfig config;
  std::vector<GatLayerParams> gat;
  std::vector<GruLayerParams> gru;
  Eigen::MatrixXd w_head;  // gru_hidden x (|N|*|A|)
  Eigen::MatrixXd b_head;  // (|N|*|A|) x 1

  std::vector<int> node_ids;                    // training node order
  std::vector<std::pair<int, int>> edge_index;  // E' as row-index pairs
  AttentionGraph graph;

  static TgnModel init(const TgnConfig& config, std::vector<int> node_ids,
                       std::vector<std::pair<int, int>> edge_index);
};

/// Named view of every trainable block, in serialization order.
struct ParamRef {
  std::string name;
  Eigen::MatrixXd* value;
};
std::vector<ParamRef> parameter_blocks(TgnModel& model);

struct ActionStep {
  std::vector<int> actions;  // per node, argmax with lowest-id tie-break
  Eigen::MatrixXd logits;    // |N| x |A|
};

struct GruState {
  std::vector<Eigen::VectorXd> h;  // per layer

  static GruState zero(const TgnConfig& c);
};

/// A keyframe sequence prepared for the model: unit-workspace snapshots and
/// per-step targets (next keyframe's label row; an all-idle row closes the
/// sequence).
struct EncodedSequence {
  std::vector<Eigen::MatrixXd> snapshots;  // each |N| x 2
  std::vector<std::vector<int>> targets;   // each length |N|
};

EncodedSequence encode_sequence(const KeyframeSequence& ks,
                                const ScenarioSpec& spec);

/// Per-step dropout masks shared across a batch; empty in eval mode or at
/// rate 0. masks[t][l] is |N| x F with entries 0 or 1/(1-rate).
struct DropoutPlan {
  std::vector<std::array<Eigen::MatrixXd, 3>> masks;

  static DropoutPlan none() { return {}; }
  static DropoutPlan draw(const TgnConfig& c, int steps, Rng& rng);
  const Eigen::MatrixXd* mask(int t, int layer) const {
    if (masks.empty()) return nullptr;
    return &masks[size_t(t)][size_t(layer)];
  }
};

/// One multi-head attention layer: linear maps, additive attention with
/// leaky-ReLU(0.2) logits softmaxed per destination, head concat, then
/// BN -> dropout -> ReLU.
Eigen::MatrixXd gat_layer_forward(const Eigen::MatrixXd& h,
                                  const AttentionGraph& g, GatLayerParams& p,
                                  RunMode mode, double dropout_rate, Rng* rng,
                                  int layer_index = 0);

/// Three GAT layers followed by mean pooling over nodes.
Eigen::VectorXd spatial_encode(const Eigen::MatrixXd& x, TgnModel& model,
                               RunMode mode, Rng* rng);

/// One autoregressive update of the two-layer GRU.
GruState temporal_step(const Eigen::VectorXd& g, const GruState& prev,
                       const TgnModel& model);

ActionStep predict_actions(const GruState& s, const TgnModel& model);

/// Teacher-forced mean cross-entropy over all (keyframe, node) cells.
/// Sequences with fewer than 2 keyframes are skipped (returns 0).
double sequence_loss(TgnModel& model, const EncodedSequence& seq, RunMode mode,
                     Rng* rng);

struct TgnGradients {
  std::vector<Eigen::MatrixXd> blocks;  // parallel to parameter_blocks()
};

/// Exact full-batch gradients of the mean sequence loss (reverse-mode,
/// shared dropout masks drawn from rng). Returns (batch loss, gradients).
std::pair<double, TgnGradients> tgn_gradients(TgnModel& model,
                                              const std::vector<EncodedSequence>& batch,
                                              RunMode mode, Rng& rng);

/// Mean sequence loss over a batch without gradients. Duplicate sequences
/// are folded exactly, like tgn_gradients.
double tgn_batch_loss(TgnModel& model, const std::vector<EncodedSequence>& batch,
                      RunMode mode);

struct TrainResult {
  TgnModel model;
  std::vector<double> loss_history;
};

/// Full-batch Adam (0.9/0.999, eps 1e-8) until max_epochs or loss < 1e-4.
TrainResult train_tgn(const std::vector<EncodedSequence>& train_set,
                      std::vector<int> node_ids,
                      std::vector<std::pair<int, int>> edge_index,
                      const TgnConfig& config);

/// The executor's policy query: eval-mode encode + state update + head.
std::pair<ActionStep, GruState> predict_next_step(TgnModel& model,
                                                  const Eigen::MatrixXd& snapshot,
                                                  const GruState& prev);

void save_tgn(const TgnModel& model, const std::string& path);
TgnModel load_tgn(const std::string& path);

}  // namespace ddace
