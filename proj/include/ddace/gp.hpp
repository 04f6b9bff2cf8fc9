#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ddace/demo.hpp"

namespace ddace {

constexpr int kCanonicalPoints = 100;

/// A trajectory segment mapped into the canonical frame (start at the
/// origin, chord on +x, unit chord) and resampled to 100 points.
struct CanonicalTrajectory {
  Polyline points;
  std::string source_kind;
  std::string target_kind;
};

struct GpHyper {
  double signal_var = 1.0;
  double length_scale = 0.1;
  double noise_var = 1e-4;
};

struct GpConfig {
  bool arclength_resample = false;  // default: uniform in the index parameter
  bool key_by_id = false;           // default: pool by (source kind, target kind)
  int max_points = 400;             // pooled training-set cap per dimension
};

/// One scalar GP: normalized time -> coordinate, RBF + white kernel.
struct Gp1d {
  Eigen::VectorXd inputs;
  Eigen::VectorXd outputs;
  GpHyper hyper;
  double log_marginal = 0.0;

  // Factorization-backed solve, rebuilt on load.
  Eigen::MatrixXd chol;    // lower-triangular L with L L^T = K + jitter
  Eigen::VectorXd alpha;   // (K)^-1 y

  /// Posterior mean and (noise-free) variance at normalized time t',
  /// clamped into [0,1] with a warning outside.
  std::pair<double, double> predict(double t) const;
};

struct GpPair {
  Gp1d x, y;
  int segment_count = 0;
};

struct TrajectoryModel {
  std::map<std::string, GpPair> pairs;
  GpConfig config;

  bool has(const std::string& key) const { return pairs.count(key) != 0; }
};

std::string pair_key(const NodeDescriptor& source, const NodeDescriptor& target,
                     const GpConfig& config);

CanonicalTrajectory canonicalize(const TrajectorySegment& seg,
                                 const std::vector<NodeDescriptor>& nodes,
                                 const GpConfig& config = {});

/// Uniform resampling wrapper used by canonicalize (index parameter by
/// default, arclength behind the config flag).
Polyline resample(const Polyline& points, int m, bool by_arclength = false);

double gp_log_marginal(const Eigen::VectorXd& inputs, const Eigen::VectorXd& outputs,
                       const GpHyper& hyper);

/// Fit xGP and yGP on the pooled canonical points of one source-target
/// pair. Hyperparameters maximize the log marginal likelihood by
/// multi-start projected gradient ascent (starts l in {0.05, 0.1, 0.3}).
GpPair fit_gp(const std::vector<CanonicalTrajectory>& trajs,
              const GpConfig& config = {});

/// Canonical-frame prediction mapped to an arbitrary start/goal chord
/// (inverse scaling, rotation by the chord orientation, translation).
/// Point 0 is exactly `start`; the final point snaps to `end` within 2%
/// of the chord length. `snapped`, when given, reports whether it did.
Polyline adapt(const GpPair& gp, Vec2 start, Vec2 end, bool* snapped = nullptr);

/// Group segments by pair key, canonicalize, and fit each pair.
TrajectoryModel fit_trajectory_model(const std::vector<TrajectorySegment>& segments,
                                     const std::vector<NodeDescriptor>& nodes,
                                     const GpConfig& config = {});

void save_trajectory_model(const TrajectoryModel& tm, const std::string& path);
TrajectoryModel load_trajectory_model(const std::string& path);

/// CSV export of an adapted trajectory: `idx,t_prime,x,y`.
std::string serialize_trajectory_csv(const Polyline& points);

}  // namespace ddace
