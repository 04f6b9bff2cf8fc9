#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddace/executor.hpp"

namespace ddace {

/// Classic dynamic-programming discrete Fréchet distance.
double discrete_frechet(const Polyline& p, const Polyline& q);

/// Map a curve into the canonical chord frame so Fréchet distances are
/// scale- and position-free.
Polyline normalize_for_fd(const Polyline& curve);

/// Ground truth for one evaluated episode, extracted from its held-out
/// demonstration.
struct EpisodeRef {
  std::map<int, std::vector<int>> sequences;       // node id -> action chain
  std::map<int, std::vector<Polyline>> trajectories;  // node id -> segments
  int goal_count = 0;
};

struct EpisodeScore {
  bool overall = false;
  int sequences_total = 0;
  int sequences_ok = 0;
  int goals_total = 0;
  int goals_ok = 0;
  double fd_sum = 0.0;
  int fd_pairs = 0;
};

struct MetricsReport {
  double osr = 0.0;
  double ssr = 0.0;
  double gcr = 0.0;
  double fd = 0.0;
  int episodes = 0;
  int fd_pairs = 0;
  std::vector<EpisodeScore> per_episode;
};

EpisodeRef reference_from_demo(const Demonstration& demo, int demo_index = 0);

MetricsReport compute_metrics(const std::vector<ExecutionTrace>& traces,
                              const std::vector<EpisodeRef>& refs);

/// Table 2 style column layout.
std::string format_report_table(const MetricsReport& r, const std::string& label);
std::string format_report_kv(const MetricsReport& r);

}  // namespace ddace
