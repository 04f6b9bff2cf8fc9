#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddace/scenario.hpp"

namespace ddace {

/// One recorded task execution: time-indexed positions and action labels
/// for a fixed node set. frames[t][n] is node n's position at frame t,
/// labels[t][n] its action id (0 = idle), targets[t][n] an optional target
/// node id (-1 = none).
struct Demonstration {
  std::vector<NodeDescriptor> nodes;
  std::vector<std::vector<Vec2>> frames;
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<int>> targets;
  ActionVocab vocab;

  int frame_count() const { return int(frames.size()); }
  int node_count() const { return int(nodes.size()); }
  int node_index(int id) const;

  bool operator==(const Demonstration&) const = default;
};

struct Keyframe {
  int frame = 0;
  std::vector<Vec2> positions;
  std::vector<int> labels;
  std::vector<int> targets;
};

/// The demonstration condensed to its change points; order encodes the
/// demonstrated partial order of action steps. Keyframe rows follow
/// `node_ids` order.
struct KeyframeSequence {
  int demo_index = 0;
  std::vector<int> node_ids;
  std::vector<Keyframe> keyframes;
};

/// One continuous movement of a robot between two nodes.
struct TrajectorySegment {
  int demo_index = 0;
  int mover = 0;       // node id
  int target = 0;      // node id
  int t_start = 0;
  int t_end = 0;       // inclusive
  Polyline points;     // one point per frame in [t_start, t_end]
  int action_id = 0;
};

/// Distance within which a segment endpoint counts as "at" a node.
constexpr double kGoalEpsilon = 0.05;

/// Parse a demonstration CSV (`t,node_id,kind,modality,x,y,label,target`,
/// rows sorted by (t, node_id)). Schema violations carry line numbers.
Demonstration parse_demonstration(const std::string& path,
                                  const ActionVocab& vocab);

/// Canonical CSV form; parse followed by serialize is byte-identical for
/// files produced by this writer.
std::string serialize_demonstration(const Demonstration& d);
void write_demonstration(const Demonstration& d, const std::string& path);

/// Keyframes: frame 0 always, plus every frame whose label row is nonzero
/// and differs from the previous frame's row.
KeyframeSequence segment_keyframes(const Demonstration& d, int demo_index = 0);

/// One segment per maximal run of a single nonzero motion-class action per
/// robot. Targets resolve from the explicit target column, else the nearest
/// node within kGoalEpsilon of the final point.
std::vector<TrajectorySegment> extract_segments(const Demonstration& d,
                                                const KeyframeSequence& ks);

/// Deterministic shuffled split of n items; train gets floor(ratio*n)
/// adjusted so both sides are non-empty. Returns (train, test) indices.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double ratio,
                                                            std::uint64_t seed);

std::pair<std::vector<Demonstration>, std::vector<Demonstration>> split_dataset(
    const std::vector<Demonstration>& demos, double ratio, std::uint64_t seed);

}  // namespace ddace
