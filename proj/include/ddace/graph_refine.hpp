#pragma once

#include <Eigen/Dense>
#include <compare>
#include <string>
#include <vector>

#include "ddace/demo.hpp"

namespace ddace {

struct DirectedEdge {
  int source = 0;
  int target = 0;

  auto operator<=>(const DirectedEdge&) const = default;
};

/// Unique edge set with total and per-demonstration occurrence counts.
struct FrequencyTable {
  std::vector<DirectedEdge> edges;            // unique, in first-seen order
  std::vector<int> total;                     // F(e) per edge
  std::vector<std::vector<int>> per_demo;     // per_demo[i][j]: edge j in demo i

  int edge_count() const { return int(edges.size()); }
  int demo_count() const { return int(per_demo.size()); }
};

enum class LaplacianMode {
  edge_similarity,  // co-occurrence + shared-endpoint off-diagonals (default)
  literal,          // diagonal-frequency matrix exactly as written up
};

struct RefinedEdgeSet {
  std::vector<DirectedEdge> edges;      // E', the retained edges
  std::vector<DirectedEdge> all_edges;  // the full unique set
  std::vector<int> cluster;             // cluster id per all_edges entry
  int k = 0;
  double retention_threshold = 0.0;     // global mean edge frequency
  LaplacianMode mode = LaplacianMode::edge_similarity;
};

/// One edge per trajectory segment (mover -> target), plus one per
/// stationary interactive action start carrying an explicit target.
/// Duplicates within a demonstration are kept for per-demo counting.
std::vector<DirectedEdge> extract_edges(const KeyframeSequence& ks,
                                        const std::vector<TrajectorySegment>& segs,
                                        const ActionVocab& vocab);

FrequencyTable edge_frequencies(
    const std::vector<std::vector<DirectedEdge>>& per_demo_edges);

/// Symmetric edge-similarity matrix: diagonal F(e_j); off-diagonal the
/// co-occurring demo count, doubled when the edges share an endpoint node.
Eigen::MatrixXd build_edge_graph(const FrequencyTable& ft,
                                 LaplacianMode mode = LaplacianMode::edge_similarity);

/// Unnormalized-Laplacian spectral embedding followed by deterministic
/// k-means (farthest-point init from row 0, tie-break by lowest index).
std::vector<int> spectral_cluster(const Eigen::MatrixXd& a, int k);

/// Retain clusters whose mean edge frequency reaches the global mean; the
/// best cluster survives when none qualifies.
RefinedEdgeSet refine(const FrequencyTable& ft, const std::vector<int>& cluster,
                      int k);

std::string serialize_edges(const RefinedEdgeSet& es);
RefinedEdgeSet parse_edges(const std::string& text);

}  // namespace ddace
