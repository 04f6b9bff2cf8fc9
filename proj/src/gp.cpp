#include "ddace/gp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ddace {

namespace {

Eigen::MatrixXd rbf_matrix(const Eigen::VectorXd& t, double length_scale) {
  const int n = int(t.size());
  Eigen::MatrixXd r(n, n);
  const double inv = 1.0 / (2.0 * length_scale * length_scale);
  for (int i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double d = t[i] - t[j];
      double v = std::exp(-d * d * inv);
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

/// Cholesky with diagonal jitter escalation up to 1e-6.
Eigen::MatrixXd chol_with_jitter(Eigen::MatrixXd k) {
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
    if (jitter > 1e-6) break;
    k.diagonal().array() += jitter;
  }
  throw NumericError("gp fit: kernel matrix not positive definite after jitter");
}

struct LmlEval {
  double lml = 0.0;
  Eigen::Vector3d grad{};  // wrt (log sf2, log l, log sn2)
};

LmlEval eval_lml(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                 const Eigen::Vector3d& u, bool with_grad) {
  const int n = int(t.size());
  const double sf2 = std::exp(u[0]);
  const double l = std::exp(u[1]);
  const double sn2 = std::exp(u[2]);

  Eigen::MatrixXd r = rbf_matrix(t, l);
  Eigen::MatrixXd k = sf2 * r;
  k.diagonal().array() += sn2;
  Eigen::MatrixXd lmat = chol_with_jitter(k);

  Eigen::VectorXd alpha = lmat.triangularView<Eigen::Lower>().solve(y);
  double quad = alpha.squaredNorm();
  alpha = lmat.transpose().triangularView<Eigen::Upper>().solve(alpha);

  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(lmat(i, i));

  LmlEval out;
  out.lml = -0.5 * quad - logdet - 0.5 * double(n) * std::log(2.0 * M_PI);
  if (!with_grad) return out;

  // K^-1 via the factor; grad_j = 0.5 (a' dK a - tr(K^-1 dK)).
  Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
  lmat.triangularView<Eigen::Lower>().solveInPlace(kinv);
  lmat.transpose().triangularView<Eigen::Upper>().solveInPlace(kinv);

  Eigen::MatrixXd dk1 = sf2 * r;  // d/d log sf2
  Eigen::MatrixXd dk2(n, n);      // d/d log l
  const double inv_l2 = 1.0 / (l * l);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double d = t[i] - t[j];
      dk2(i, j) = sf2 * r(i, j) * d * d * inv_l2;
    }
  }
  auto grad_for = [&](const Eigen::MatrixXd& dk) {
    return 0.5 * (alpha.dot(dk * alpha) - (kinv.cwiseProduct(dk)).sum());
  };
  out.grad[0] = grad_for(dk1);
  out.grad[1] = grad_for(dk2);
  out.grad[2] = 0.5 * (sn2 * alpha.squaredNorm() - sn2 * kinv.trace());
  return out;
}

const double kLogSf2Min = std::log(1e-6), kLogSf2Max = std::log(1e3);
const double kLogLMin = std::log(1e-3), kLogLMax = std::log(1.0);
const double kLogSn2Min = std::log(1e-8), kLogSn2Max = std::log(1e-1);

Eigen::Vector3d clamp_u(Eigen::Vector3d u) {
  u[0] = std::clamp(u[0], kLogSf2Min, kLogSf2Max);
  u[1] = std::clamp(u[1], kLogLMin, kLogLMax);
  u[2] = std::clamp(u[2], kLogSn2Min, kLogSn2Max);
  return u;
}

/// Monotone ascent from one start; never returns a point worse than the
/// start.
std::pair<Eigen::Vector3d, double> ascend(const Eigen::VectorXd& t,
                                          const Eigen::VectorXd& y,
                                          Eigen::Vector3d u) {
  u = clamp_u(u);
  LmlEval cur = eval_lml(t, y, u, true);
  double step = 0.1;
  for (int iter = 0; iter < 60; ++iter) {
    bool accepted = false;
    for (int back = 0; back < 12; ++back) {
      Eigen::Vector3d cand = clamp_u(u + step * cur.grad);
      if ((cand - u).norm() < 1e-12) break;
      LmlEval next = eval_lml(t, y, cand, false);
      if (next.lml > cur.lml) {
        u = cand;
        cur = eval_lml(t, y, u, true);
        accepted = true;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return {u, cur.lml};
}

Gp1d fit_dimension(const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
  const double out_var = (y.array() - y.mean()).square().mean();
  const double sf2_init = std::max(out_var, 1e-4);

  Eigen::Vector3d best_u;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double l0 : {0.05, 0.1, 0.3}) {
    Eigen::Vector3d u{std::log(sf2_init), std::log(l0), std::log(1e-4)};
    auto [uf, lml] = ascend(t, y, u);
    if (lml > best_lml) {
      best_lml = lml;
      best_u = uf;
    }
  }

  Gp1d gp;
  gp.inputs = t;
  gp.outputs = y;
  gp.hyper.signal_var = std::exp(best_u[0]);
  gp.hyper.length_scale = std::exp(best_u[1]);
  gp.hyper.noise_var = std::exp(best_u[2]);
  gp.log_marginal = best_lml;

  Eigen::MatrixXd k = gp.hyper.signal_var * rbf_matrix(t, gp.hyper.length_scale);
  k.diagonal().array() += gp.hyper.noise_var;
  gp.chol = chol_with_jitter(k);
  gp.alpha = gp.chol.triangularView<Eigen::Lower>().solve(y);
  gp.alpha = gp.chol.transpose().triangularView<Eigen::Upper>().solve(gp.alpha);
  return gp;
}

}  // namespace

double gp_log_marginal(const Eigen::VectorXd& inputs, const Eigen::VectorXd& outputs,
                       const GpHyper& hyper) {
  Eigen::Vector3d u{std::log(hyper.signal_var), std::log(hyper.length_scale),
                    std::log(hyper.noise_var)};
  return eval_lml(inputs, outputs, u, false).lml;
}

std::pair<double, double> Gp1d::predict(double t) const {
  if (t < 0.0 || t > 1.0) {
    std::cerr << "warning: gp query t'=" << t << " clamped into [0,1]\n";
    t = std::clamp(t, 0.0, 1.0);
  }
  const int n = int(inputs.size());
  Eigen::VectorXd ks(n);
  const double inv = 1.0 / (2.0 * hyper.length_scale * hyper.length_scale);
  for (int i = 0; i < n; ++i) {
    double d = t - inputs[i];
    ks[i] = hyper.signal_var * std::exp(-d * d * inv);
  }
  double mean = ks.dot(alpha);
  Eigen::VectorXd v = chol.triangularView<Eigen::Lower>().solve(ks);
  double var = hyper.signal_var - v.squaredNorm();
  if (var < -1e-9) {
    throw NumericError("gp predict: negative variance " + format_double(var));
  }
  return {mean, std::max(var, 0.0)};
}

std::string pair_key(const NodeDescriptor& source, const NodeDescriptor& target,
                     const GpConfig& config) {
  if (config.key_by_id) {
    return "id" + std::to_string(source.id) + ">id" + std::to_string(target.id);
  }
  return kind_name(source.kind) + ">" + kind_name(target.kind);
}

Polyline resample(const Polyline& points, int m, bool by_arclength) {
  return by_arclength ? resample_by_arclength(points, m)
                      : resample_by_index(points, m);
}

CanonicalTrajectory canonicalize(const TrajectorySegment& seg,
                                 const std::vector<NodeDescriptor>& nodes,
                                 const GpConfig& config) {
  ChordFrame frame = ChordFrame::from_chord(seg.points.front(), seg.points.back());
  Polyline canonical;
  canonical.reserve(seg.points.size());
  for (Vec2 p : seg.points) canonical.push_back(frame.to_canonical(p));

  CanonicalTrajectory out;
  out.points = resample(canonical, kCanonicalPoints, config.arclength_resample);
  auto kind_of = [&](int id) -> const NodeDescriptor& {
    for (const NodeDescriptor& n : nodes) {
      if (n.id == id) return n;
    }
    throw InputError("canonicalize: unknown node id " + std::to_string(id));
  };
  out.source_kind = kind_name(kind_of(seg.mover).kind);
  out.target_kind = kind_name(kind_of(seg.target).kind);
  return out;
}

GpPair fit_gp(const std::vector<CanonicalTrajectory>& trajs, const GpConfig& config) {
  if (trajs.empty()) throw InputError("fit_gp: need at least one trajectory");

  // Cap the pooled set by striding whole trajectories; every kept one
  // contributes its full 100-point grid.
  size_t keep = std::max<size_t>(1, size_t(config.max_points) / kCanonicalPoints);
  size_t stride = (trajs.size() + keep - 1) / keep;
  std::vector<const CanonicalTrajectory*> used;
  for (size_t i = 0; i < trajs.size(); i += stride) used.push_back(&trajs[i]);

  const int per = int(used.front()->points.size());
  const int n = int(used.size()) * per;
  Eigen::VectorXd t(n), x(n), y(n);
  int row = 0;
  for (const CanonicalTrajectory* tr : used) {
    for (int j = 0; j < per; ++j, ++row) {
      t[row] = double(j) / double(per - 1);
      x[row] = tr->points[size_t(j)].x;
      y[row] = tr->points[size_t(j)].y;
    }
  }
  GpPair pair;
  pair.x = fit_dimension(t, x);
  pair.y = fit_dimension(t, y);
  pair.segment_count = int(trajs.size());
  return pair;
}

Polyline adapt(const GpPair& gp, Vec2 start, Vec2 end, bool* snapped) {
  ChordFrame frame = ChordFrame::from_chord(start, end);
  Polyline out;
  out.reserve(kCanonicalPoints);
  for (int j = 0; j < kCanonicalPoints; ++j) {
    double t = double(j) / double(kCanonicalPoints - 1);
    auto [mx, vx] = gp.x.predict(t);
    auto [my, vy] = gp.y.predict(t);
    out.push_back(frame.to_world({mx, my}));
  }
  out.front() = start;
  const double snap_tol = 0.02 * frame.scale;
  if (dist(out.back(), end) <= snap_tol) {
    out.back() = end;
    if (snapped != nullptr) *snapped = true;
  } else {
    std::cerr << "warning: adapted endpoint off target by "
              << format_double(dist(out.back(), end)) << " (snap tol "
              << format_double(snap_tol) << ")\n";
    if (snapped != nullptr) *snapped = false;
  }
  return out;
}

TrajectoryModel fit_trajectory_model(const std::vector<TrajectorySegment>& segments,
                                     const std::vector<NodeDescriptor>& nodes,
                                     const GpConfig& config) {
  auto find_node = [&](int id) -> const NodeDescriptor& {
    for (const NodeDescriptor& n : nodes) {
      if (n.id == id) return n;
    }
    throw InputError("fit_trajectory_model: unknown node id " + std::to_string(id));
  };
  std::map<std::string, std::vector<CanonicalTrajectory>> grouped;
  for (const TrajectorySegment& seg : segments) {
    std::string key = pair_key(find_node(seg.mover), find_node(seg.target), config);
    try {
      grouped[key].push_back(canonicalize(seg, nodes, config));
    } catch (const InputError& e) {
      std::cerr << "warning: segment excluded from GP pooling: " << e.what()
                << "\n";
    }
  }
  TrajectoryModel tm;
  tm.config = config;
  for (auto& [key, trajs] : grouped) {
    tm.pairs[key] = fit_gp(trajs, config);
  }
  return tm;
}

void save_trajectory_model(const TrajectoryModel& tm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write trajectory model " + path);
  out << "ddace-gp v1\n";
  out << "config " << (tm.config.arclength_resample ? 1 : 0) << " "
      << (tm.config.key_by_id ? 1 : 0) << " " << tm.config.max_points << "\n";
  out << "pairs " << tm.pairs.size() << "\n";
  for (const auto& [key, pair] : tm.pairs) {
    out << "pair " << key << " " << pair.segment_count << "\n";
    for (const Gp1d* gp : {&pair.x, &pair.y}) {
      out << "hyper " << format_double(gp->hyper.signal_var) << " "
          << format_double(gp->hyper.length_scale) << " "
          << format_double(gp->hyper.noise_var) << " "
          << format_double(gp->log_marginal) << "\n";
      out << "n " << gp->inputs.size() << "\n";
      for (int i = 0; i < gp->inputs.size(); ++i) {
        out << format_double(gp->inputs[i]) << " " << format_double(gp->outputs[i])
            << "\n";
      }
    }
  }
}

TrajectoryModel load_trajectory_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open trajectory model " + path);
  std::string magic, version, tag;
  in >> magic >> version;
  if (magic != "ddace-gp" || version != "v1") {
    throw InputError(path + ": not a ddace-gp v1 model");
  }
  TrajectoryModel tm;
  int arclen = 0, by_id = 0;
  in >> tag >> arclen >> by_id >> tm.config.max_points;
  if (tag != "config") throw InputError(path + ": missing config");
  tm.config.arclength_resample = arclen != 0;
  tm.config.key_by_id = by_id != 0;
  size_t n_pairs = 0;
  in >> tag >> n_pairs;
  if (tag != "pairs") throw InputError(path + ": missing pair count");
  for (size_t p = 0; p < n_pairs; ++p) {
    std::string key;
    GpPair pair;
    in >> tag >> key >> pair.segment_count;
    if (tag != "pair") throw InputError(path + ": missing pair header");
    for (Gp1d* gp : {&pair.x, &pair.y}) {
      std::string sf2, l, sn2, lml;
      in >> tag >> sf2 >> l >> sn2 >> lml;
      if (tag != "hyper") throw InputError(path + ": missing hyper row");
      gp->hyper.signal_var = parse_double(sf2, path);
      gp->hyper.length_scale = parse_double(l, path);
      gp->hyper.noise_var = parse_double(sn2, path);
      gp->log_marginal = parse_double(lml, path);
      int n = 0;
      in >> tag >> n;
      if (tag != "n") throw InputError(path + ": missing point count");
      gp->inputs.resize(n);
      gp->outputs.resize(n);
      for (int i = 0; i < n; ++i) {
        std::string a, b;
        in >> a >> b;
        gp->inputs[i] = parse_double(a, path);
        gp->outputs[i] = parse_double(b, path);
      }
      Eigen::MatrixXd k =
          gp->hyper.signal_var * rbf_matrix(gp->inputs, gp->hyper.length_scale);
      k.diagonal().array() += gp->hyper.noise_var;
      gp->chol = chol_with_jitter(k);
      gp->alpha = gp->chol.triangularView<Eigen::Lower>().solve(gp->outputs);
      gp->alpha = gp->chol.transpose().triangularView<Eigen::Upper>().solve(gp->alpha);
    }
    tm.pairs[key] = std::move(pair);
  }
  return tm;
}

std::string serialize_trajectory_csv(const Polyline& points) {
  std::ostringstream out;
  out << "idx,t_prime,x,y\n";
  for (size_t j = 0; j < points.size(); ++j) {
    out << j << "," << format_double(double(j) / double(points.size() - 1)) << ","
        << format_double(points[j].x) << "," << format_double(points[j].y) << "\n";
  }
  return out.str();
}

}  // namespace ddace
