#include "ddace/demo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ddace {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool row_all_zero(const std::vector<int>& row) {
  return std::all_of(row.begin(), row.end(), [](int v) { return v == 0; });
}

}  // namespace

int Demonstration::node_index(int id) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return int(i);
  }
  throw InputError("demonstration: unknown node id " + std::to_string(id));
}

Demonstration parse_demonstration(const std::string& path,
                                  const ActionVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open demonstration file " + path);

  Demonstration d;
  d.vocab = vocab;

  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  ++lineno;
  if (line != "t,node_id,kind,modality,x,y,label,target") {
    throw InputError(path + ":1: bad header row");
  }

  int current_frame = -1;
  int expected_next_node = 0;  // position within the current frame
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(lineno);
    auto f = split_csv(line);
    if (f.size() != 8) throw InputError(ctx + ": expected 8 columns");
    int t = int(parse_long(f[0], ctx));
    int node_id = int(parse_long(f[1], ctx));
    NodeKind kind = kind_from_name(f[2]);
    double x = parse_double(f[4], ctx);
    double y = parse_double(f[5], ctx);
    int label = int(parse_long(f[6], ctx));
    int target = int(parse_long(f[7], ctx));
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw InputError(ctx + ": non-finite position");
    }
    if (!vocab.valid_id(label)) {
      throw InputError(ctx + ": label " + std::to_string(label) +
                       " out of vocabulary (|A| = " +
                       std::to_string(vocab.size()) + ")");
    }

    if (t != current_frame) {
      if (t != current_frame + 1) {
        throw InputError(ctx + ": frame indices must be consecutive, got " +
                         std::to_string(t) + " after " +
                         std::to_string(current_frame));
      }
      if (current_frame >= 0 &&
          expected_next_node != int(d.nodes.size())) {
        throw InputError(ctx + ": frame " + std::to_string(current_frame) +
                         " has " + std::to_string(expected_next_node) +
                         " nodes, expected " + std::to_string(d.nodes.size()));
      }
      current_frame = t;
      expected_next_node = 0;
      d.frames.emplace_back();
      d.labels.emplace_back();
      d.targets.emplace_back();
    }

    if (current_frame == 0) {
      NodeDescriptor nd;
      nd.id = node_id;
      nd.kind = kind;
      nd.modality = f[3];
      for (const NodeDescriptor& prev : d.nodes) {
        if (prev.id == node_id) {
          throw InputError(ctx + ": duplicate node id in frame 0");
        }
      }
      d.nodes.push_back(nd);
    } else {
      if (expected_next_node >= int(d.nodes.size()) ||
          d.nodes[size_t(expected_next_node)].id != node_id) {
        throw InputError(ctx + ": node order inconsistent with frame 0");
      }
    }
    d.frames.back().push_back({x, y});
    d.labels.back().push_back(label);
    d.targets.back().push_back(target);
    ++expected_next_node;
  }
  if (current_frame >= 0 && expected_next_node != int(d.nodes.size())) {
    throw InputError(path + ": last frame is truncated");
  }
  if (d.frame_count() < 2) {
    throw InputError(path + ": demonstration needs at least 2 frames");
  }
  bool has_robot = false, has_goal = false;
  for (const NodeDescriptor& n : d.nodes) {
    has_robot |= n.kind == NodeKind::robot;
    has_goal |= n.kind == NodeKind::goal;
  }
  if (!has_robot || !has_goal) {
    throw InputError(path + ": scenario needs at least one robot and one goal");
  }
  return d;
}

std::string serialize_demonstration(const Demonstration& d) {
  std::ostringstream out;
  out << "t,node_id,kind,modality,x,y,label,target\n";
  for (int t = 0; t < d.frame_count(); ++t) {
    for (int n = 0; n < d.node_count(); ++n) {
      const NodeDescriptor& nd = d.nodes[size_t(n)];
      out << t << "," << nd.id << "," << kind_name(nd.kind) << ","
          << nd.modality << "," << format_double(d.frames[size_t(t)][size_t(n)].x)
          << "," << format_double(d.frames[size_t(t)][size_t(n)].y) << ","
          << d.labels[size_t(t)][size_t(n)] << ","
          << d.targets[size_t(t)][size_t(n)] << "\n";
    }
  }
  return out.str();
}

void write_demonstration(const Demonstration& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write demonstration file " + path);
  out << serialize_demonstration(d);
}

KeyframeSequence segment_keyframes(const Demonstration& d, int demo_index) {
  KeyframeSequence ks;
  ks.demo_index = demo_index;
  for (const NodeDescriptor& n : d.nodes) ks.node_ids.push_back(n.id);
  auto push = [&](int t) {
    Keyframe kf;
    kf.frame = t;
    kf.positions = d.frames[size_t(t)];
    kf.labels = d.labels[size_t(t)];
    kf.targets = d.targets[size_t(t)];
    ks.keyframes.push_back(std::move(kf));
  };
  push(0);  // initial snapshot, regardless of activity
  for (int t = 1; t < d.frame_count(); ++t) {
    const auto& row = d.labels[size_t(t)];
    if (!row_all_zero(row) && row != d.labels[size_t(t - 1)]) push(t);
  }
  return ks;
}

std::vector<TrajectorySegment> extract_segments(const Demonstration& d,
                                                const KeyframeSequence& ks) {
  std::vector<TrajectorySegment> segs;
  for (int n = 0; n < d.node_count(); ++n) {
    if (d.nodes[size_t(n)].kind != NodeKind::robot) continue;
    int t = 0;
    while (t < d.frame_count()) {
      const int label = d.labels[size_t(t)][size_t(n)];
      if (!d.vocab.is_motion(label)) {
        ++t;
        continue;
      }
      int end = t;
      while (end + 1 < d.frame_count() &&
             d.labels[size_t(end + 1)][size_t(n)] == label) {
        ++end;
      }
      if (end == t) {
        std::cerr << "warning: demo " << ks.demo_index << " node "
                  << d.nodes[size_t(n)].id << ": single-frame motion run at t="
                  << t << " skipped\n";
        t = end + 1;
        continue;
      }
      TrajectorySegment seg;
      seg.demo_index = ks.demo_index;
      seg.mover = d.nodes[size_t(n)].id;
      seg.t_start = t;
      seg.t_end = end;
      seg.action_id = label;
      for (int i = t; i <= end; ++i) {
        seg.points.push_back(d.frames[size_t(i)][size_t(n)]);
      }
      // Explicit target column first, else nearest node to the final point.
      int target = d.targets[size_t(t)][size_t(n)];
      if (target < 0) {
        const Vec2 last = seg.points.back();
        double best = kGoalEpsilon;
        for (int m = 0; m < d.node_count(); ++m) {
          if (m == n) continue;
          double dd = dist(d.frames[size_t(end)][size_t(m)], last);
          if (dd <= best) {
            best = dd;
            target = d.nodes[size_t(m)].id;
          }
        }
        if (target < 0) {
          throw InputError("segment annotation: demo " +
                           std::to_string(ks.demo_index) + " robot " +
                           std::to_string(seg.mover) + " span [" +
                           std::to_string(t) + "," + std::to_string(end) +
                           "]: no explicit target and no node within " +
                           format_double(kGoalEpsilon) + " of the endpoint");
        }
      }
      seg.target = target;
      segs.push_back(std::move(seg));
      t = end + 1;
    }
  }
  return segs;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double ratio,
                                                            std::uint64_t seed) {
  if (n < 2) throw InputError("split: need at least 2 demonstrations");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw InputError("split: ratio must lie in (0,1)");
  }
  std::vector<int> order;
  order.resize(size_t(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {  // Fisher-Yates, platform-stable
    int j = rng.uniform_int(i + 1);
    std::swap(order[size_t(i)], order[size_t(j)]);
  }
  int n_train = int(std::floor(ratio * double(n)));
  n_train = std::max(1, std::min(n - 1, n_train));
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> test(order.begin() + n_train, order.end());
  return {train, test};
}

std::pair<std::vector<Demonstration>, std::vector<Demonstration>> split_dataset(
    const std::vector<Demonstration>& demos, double ratio, std::uint64_t seed) {
  auto [ti, si] = split_indices(int(demos.size()), ratio, seed);
  std::pair<std::vector<Demonstration>, std::vector<Demonstration>> out;
  for (int i : ti) out.first.push_back(demos[size_t(i)]);
  for (int i : si) out.second.push_back(demos[size_t(i)]);
  return out;
}

}  // namespace ddace
