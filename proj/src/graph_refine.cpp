#include "ddace/graph_refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace ddace {

std::vector<DirectedEdge> extract_edges(const KeyframeSequence& ks,
                                        const std::vector<TrajectorySegment>& segs,
                                        const ActionVocab& vocab) {
  std::vector<DirectedEdge> edges;
  for (const TrajectorySegment& s : segs) {
    edges.push_back({s.mover, s.target});
  }
  // Stationary interactive actions (pass, transfer) at their starting
  // keyframe, when an explicit target is recorded.
  for (size_t k = 0; k < ks.keyframes.size(); ++k) {
    const Keyframe& kf = ks.keyframes[k];
    for (size_t n = 0; n < kf.labels.size(); ++n) {
      const int label = kf.labels[n];
      if (label == 0 || vocab.is_motion(label)) continue;
      const bool started =
          k == 0 || ks.keyframes[k - 1].labels[n] != label;
      if (!started) continue;
      const int target = kf.targets[n];
      if (target >= 0) {
        edges.push_back({ks.node_ids[n], target});
      }
    }
  }
  return edges;
}

FrequencyTable edge_frequencies(
    const std::vector<std::vector<DirectedEdge>>& per_demo_edges) {
  FrequencyTable ft;
  std::map<DirectedEdge, int> index;
  for (const auto& demo : per_demo_edges) {
    for (const DirectedEdge& e : demo) {
      if (index.find(e) == index.end()) {
        index[e] = int(ft.edges.size());
        ft.edges.push_back(e);
        ft.total.push_back(0);
      }
    }
  }
  if (ft.edges.empty()) {
    throw InputError("edge_frequencies: no demonstration contributed an edge");
  }
  for (const auto& demo : per_demo_edges) {
    std::vector<int> counts(ft.edges.size(), 0);
    for (const DirectedEdge& e : demo) ++counts[size_t(index[e])];
    for (size_t j = 0; j < counts.size(); ++j) ft.total[j] += counts[j];
    ft.per_demo.push_back(std::move(counts));
  }
  return ft;
}

Eigen::MatrixXd build_edge_graph(const FrequencyTable& ft, LaplacianMode mode) {
  const int m = ft.edge_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) a(j, j) = double(ft.total[size_t(j)]);
  if (mode == LaplacianMode::literal) return a;

  auto shares_endpoint = [&](int j, int l) {
    const DirectedEdge& ej = ft.edges[size_t(j)];
    const DirectedEdge& el = ft.edges[size_t(l)];
    return ej.source == el.source || ej.source == el.target ||
           ej.target == el.source || ej.target == el.target;
  };
  for (int j = 0; j < m; ++j) {
    for (int l = j + 1; l < m; ++l) {
      int co = 0;
      for (const auto& counts : ft.per_demo) {
        if (counts[size_t(j)] > 0 && counts[size_t(l)] > 0) ++co;
      }
      double w = double(co) * (shares_endpoint(j, l) ? 2.0 : 1.0);
      a(j, l) = w;
      a(l, j) = w;
    }
  }
  return a;
}

namespace {

/// Deterministic k-means on embedding rows: first center is row 0, each
/// further center the row farthest from its nearest chosen center
/// (tie-break lowest row index); assignment ties break to the lowest
/// cluster index; empty clusters keep their previous center.
std::vector<int> kmeans_rows(const Eigen::MatrixXd& rows, int k) {
  const int m = int(rows.rows());
  std::vector<int> center_idx = {0};
  while (int(center_idx.size()) < k) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < m; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (int c : center_idx) {
        nearest = std::min(nearest, (rows.row(i) - rows.row(c)).squaredNorm());
      }
      if (nearest > best_d + 1e-15) {
        best_d = nearest;
        best = i;
      }
    }
    center_idx.push_back(best);
  }
  Eigen::MatrixXd centers(k, rows.cols());
  for (int c = 0; c < k; ++c) centers.row(c) = rows.row(center_idx[size_t(c)]);

  std::vector<int> assign(size_t(m), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < m; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = (rows.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d - 1e-15) {
          best_d = d;
          best_c = c;
        }
      }
      if (assign[size_t(i)] != best_c) {
        assign[size_t(i)] = best_c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(rows.cols());
      int count = 0;
      for (int i = 0; i < m; ++i) {
        if (assign[size_t(i)] == c) {
          sum += rows.row(i);
          ++count;
        }
      }
      if (count > 0) centers.row(c) = sum / double(count);
    }
  }
  return assign;
}

}  // namespace

std::vector<int> spectral_cluster(const Eigen::MatrixXd& a, int k) {
  const int m = int(a.rows());
  if (k < 1 || k > m) {
    throw InputError("spectral_cluster: K must lie in [1, m], got K=" +
                     std::to_string(k) + " with m=" + std::to_string(m));
  }
  if (m == 1) return {0};

  Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::MatrixXd lap = Eigen::MatrixXd(deg.asDiagonal()) - a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  if (solver.info() != Eigen::Success) {
    throw NumericError("spectral_cluster: eigendecomposition failed");
  }
  // Embed as rows of the K lowest-eigenvalue eigenvectors (ascending,
  // zero eigenvalues included: for disconnected graphs those are exactly
  // the component indicators).
  Eigen::MatrixXd embedding = solver.eigenvectors().leftCols(k);
  return kmeans_rows(embedding, k);
}

RefinedEdgeSet refine(const FrequencyTable& ft, const std::vector<int>& cluster,
                      int k) {
  if (int(cluster.size()) != ft.edge_count()) {
    throw InputError("refine: assignment does not cover all edges");
  }
  RefinedEdgeSet es;
  es.all_edges = ft.edges;
  es.cluster = cluster;
  es.k = k;

  double global_mean = 0.0;
  for (int f : ft.total) global_mean += double(f);
  global_mean /= double(ft.edge_count());
  es.retention_threshold = global_mean;

  std::vector<double> mean(size_t(k), 0.0);
  std::vector<int> count(size_t(k), 0);
  for (int j = 0; j < ft.edge_count(); ++j) {
    mean[size_t(cluster[size_t(j)])] += double(ft.total[size_t(j)]);
    ++count[size_t(cluster[size_t(j)])];
  }
  std::vector<bool> keep(size_t(k), false);
  bool any = false;
  int best_cluster = 0;
  double best_mean = -1.0;
  for (int c = 0; c < k; ++c) {
    if (count[size_t(c)] == 0) continue;
    mean[size_t(c)] /= double(count[size_t(c)]);
    if (mean[size_t(c)] >= global_mean) {
      keep[size_t(c)] = true;
      any = true;
    }
    if (mean[size_t(c)] > best_mean) {
      best_mean = mean[size_t(c)];
      best_cluster = c;
    }
  }
  if (!any) keep[size_t(best_cluster)] = true;

  for (int j = 0; j < ft.edge_count(); ++j) {
    if (keep[size_t(cluster[size_t(j)])]) es.edges.push_back(ft.edges[size_t(j)]);
  }
  return es;
}

std::string serialize_edges(const RefinedEdgeSet& es) {
  std::ostringstream out;
  out << "# ddace refined edge set: K=" << es.k
      << " retention_threshold=" << format_double(es.retention_threshold)
      << " laplacian="
      << (es.mode == LaplacianMode::literal ? "literal" : "edge_similarity")
      << "\n";
  out << "# retained " << es.edges.size() << " of " << es.all_edges.size()
      << " edges\n";
  for (size_t j = 0; j < es.all_edges.size(); ++j) {
    const DirectedEdge& e = es.all_edges[j];
    bool kept = std::find(es.edges.begin(), es.edges.end(), e) != es.edges.end();
    out << e.source << "," << e.target << "," << es.cluster[j]
        << (kept ? "" : " #dropped") << "\n";
  }
  return out.str();
}

RefinedEdgeSet parse_edges(const std::string& text) {
  RefinedEdgeSet es;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    bool dropped = line.find("#dropped") != std::string::npos;
    std::istringstream row(line.substr(0, line.find(' ')));
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') ||
        !std::getline(row, c, ',')) {
      throw InputError("edge file: bad row '" + line + "'");
    }
    DirectedEdge e{int(parse_long(a, "edge file")),
                   int(parse_long(b, "edge file"))};
    es.all_edges.push_back(e);
    es.cluster.push_back(int(parse_long(c, "edge file")));
    if (!dropped) es.edges.push_back(e);
  }
  for (int c : es.cluster) es.k = std::max(es.k, c + 1);
  return es;
}

}  // namespace ddace
