#include "ddace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddace {

double discrete_frechet(const Polyline& p, const Polyline& q) {
  if (p.empty() || q.empty()) {
    throw InputError("discrete_frechet: empty polyline");
  }
  const size_t np = p.size(), nq = q.size();
  auto d = [&](size_t i, size_t j) {
    double dx = p[i].x - q[j].x, dy = p[i].y - q[j].y;
    return std::sqrt(dx * dx + dy * dy);
  };
  std::vector<double> prev(nq), cur(nq);
  prev[0] = d(0, 0);
  for (size_t j = 1; j < nq; ++j) prev[j] = std::max(prev[j - 1], d(0, j));
  for (size_t i = 1; i < np; ++i) {
    cur[0] = std::max(prev[0], d(i, 0));
    for (size_t j = 1; j < nq; ++j) {
      double reach = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = std::max(reach, d(i, j));
    }
    std::swap(prev, cur);
  }
  return prev[nq - 1];
}

Polyline normalize_for_fd(const Polyline& curve) {
  ChordFrame frame = ChordFrame::from_chord(curve.front(), curve.back());
  Polyline out;
  out.reserve(curve.size());
  for (Vec2 p : curve) out.push_back(frame.to_canonical(p));
  return out;
}

EpisodeRef reference_from_demo(const Demonstration& demo, int demo_index) {
  EpisodeRef ref;
  // Per-robot action chain: one entry per maximal constant nonzero run.
  for (int n = 0; n < demo.node_count(); ++n) {
    if (demo.nodes[size_t(n)].kind != NodeKind::robot) continue;
    std::vector<int> chain;
    int prev = 0;
    for (int t = 0; t < demo.frame_count(); ++t) {
      int label = demo.labels[size_t(t)][size_t(n)];
      if (label != 0 && label != prev) chain.push_back(label);
      prev = label;
    }
    ref.sequences[demo.nodes[size_t(n)].id] = std::move(chain);
  }
  KeyframeSequence ks = segment_keyframes(demo, demo_index);
  for (const TrajectorySegment& seg : extract_segments(demo, ks)) {
    ref.trajectories[seg.mover].push_back(seg.points);
  }
  return ref;
}

MetricsReport compute_metrics(const std::vector<ExecutionTrace>& traces,
                              const std::vector<EpisodeRef>& refs) {
  if (traces.size() != refs.size()) {
    throw InputError("compute_metrics: " + std::to_string(traces.size()) +
                     " traces vs " + std::to_string(refs.size()) +
                     " references");
  }
  MetricsReport report;
  report.episodes = int(traces.size());

  int episodes_overall = 0;
  int seq_total = 0, seq_ok = 0;
  double gcr_sum = 0.0;
  double fd_sum = 0.0;
  int fd_pairs = 0;

  for (size_t e = 0; e < traces.size(); ++e) {
    const ExecutionTrace& tr = traces[e];
    const EpisodeRef& ref = refs[e];
    EpisodeScore score;

    bool all_sequences_ok = true;
    for (const auto& [id, expect] : ref.sequences) {
      ++score.sequences_total;
      auto it = tr.executed.find(id);
      const std::vector<int> got =
          it == tr.executed.end() ? std::vector<int>{} : it->second;
      bool fault = tr.fault_counts.count(id) != 0 && tr.fault_counts.at(id) > 0;
      bool ok = !fault && got == expect;
      if (ok) ++score.sequences_ok;
      all_sequences_ok &= ok;
    }

    score.goals_total = int(tr.goal_flags.size());
    for (bool f : tr.goal_flags) score.goals_ok += f ? 1 : 0;
    const bool goals_ok = score.goals_ok == score.goals_total;

    score.overall = all_sequences_ok && goals_ok;

    // Generated vs demonstrated trajectories, paired per robot in motion
    // order, both mapped to the canonical frame and onto the shared
    // 100-point grid so the distance reflects geometry, not sampling.
    for (const auto& [id, ref_trajs] : ref.trajectories) {
      auto it = tr.motions.find(id);
      if (it == tr.motions.end()) continue;
      size_t pairs = std::min(ref_trajs.size(), it->second.size());
      for (size_t k = 0; k < pairs; ++k) {
        try {
          double fd = discrete_frechet(
              resample_by_index(normalize_for_fd(it->second[k]), kCanonicalPoints),
              resample_by_index(normalize_for_fd(ref_trajs[k]), kCanonicalPoints));
          score.fd_sum += fd;
          ++score.fd_pairs;
        } catch (const InputError&) {
          // degenerate chord: pair skipped
        }
      }
    }

    episodes_overall += score.overall ? 1 : 0;
    seq_total += score.sequences_total;
    seq_ok += score.sequences_ok;
    gcr_sum += score.goals_total > 0
                   ? double(score.goals_ok) / double(score.goals_total)
                   : 1.0;
    fd_sum += score.fd_sum;
    fd_pairs += score.fd_pairs;
    report.per_episode.push_back(score);
  }

  report.osr = report.episodes > 0 ? double(episodes_overall) / report.episodes : 0;
  report.ssr = seq_total > 0 ? double(seq_ok) / double(seq_total) : 0;
  report.gcr = report.episodes > 0 ? gcr_sum / report.episodes : 0;
  report.fd = fd_pairs > 0 ? fd_sum / double(fd_pairs) : 0.0;
  report.fd_pairs = fd_pairs;
  return report;
}

std::string format_report_table(const MetricsReport& r, const std::string& label) {
  std::ostringstream out;
  out << "Method                | OSR   | SSR   | GCR   | FD\n";
  out << "----------------------+-------+-------+-------+------\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-22s| %-6.3g| %-6.3g| %-6.3g| %.4g\n",
                label.c_str(), r.osr, r.ssr, r.gcr, r.fd);
  out << buf;
  return out.str();
}

std::string format_report_kv(const MetricsReport& r) {
  std::ostringstream out;
  out << "osr=" << format_double(r.osr) << "\n";
  out << "ssr=" << format_double(r.ssr) << "\n";
  out << "gcr=" << format_double(r.gcr) << "\n";
  out << "fd=" << format_double(r.fd) << "\n";
  out << "episodes=" << r.episodes << "\n";
  out << "fd_pairs=" << r.fd_pairs << "\n";
  return out.str();
}

}  // namespace ddace
