#include "ddace/tgn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace ddace {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kLeakySlope = 0.2;

void check_finite(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite activation in " + what);
  }
}

}  // namespace

AttentionGraph AttentionGraph::build(int n,
                                     const std::vector<std::pair<int, int>>& edges) {
  AttentionGraph g;
  g.n = n;
  std::vector<std::set<int>> nbr;
  nbr.resize(size_t(n));
  for (int i = 0; i < n; ++i) nbr[size_t(i)].insert(i);  // self-loops
  for (auto [s, t] : edges) {
    if (s < 0 || s >= n || t < 0 || t >= n) {
      throw InputError("attention graph: edge index out of range");
    }
    nbr[size_t(t)].insert(s);  // E' both directions
    nbr[size_t(s)].insert(t);
  }
  g.in_neighbors.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    g.in_neighbors[size_t(i)].assign(nbr[size_t(i)].begin(), nbr[size_t(i)].end());
  }
  return g;
}

GruState GruState::zero(const TgnConfig& c) {
  GruState s;
  for (int l = 0; l < c.gru_layers; ++l) {
    s.h.push_back(Eigen::VectorXd::Zero(c.gru_hidden));
  }
  return s;
}

TgnModel TgnModel::init(const TgnConfig& config, std::vector<int> node_ids,
                        std::vector<std::pair<int, int>> edge_index) {
  if (config.num_nodes <= 0 || config.num_actions <= 0) {
    throw InputError("tgn: num_nodes and num_actions must be set");
  }
  TgnModel m;
  m.config = config;
  m.node_ids = std::move(node_ids);
  m.edge_index = std::move(edge_index);
  m.graph = AttentionGraph::build(config.num_nodes, m.edge_index);

  Rng rng(config.seed * 0x9e3779b9ULL + 17);
  auto uniform_fill = [&](Eigen::MatrixXd& mat, int rows, int cols) {
    mat.resize(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) mat(r, c) = rng.uniform(-0.1, 0.1);
    }
  };

  const int p = config.gat_hidden;
  const int f = config.feature_dim();
  int d_in = 2;
  for (int l = 0; l < config.gat_layers; ++l) {
    GatLayerParams gp;
    for (int h = 0; h < config.heads; ++h) {
      Eigen::MatrixXd w, as, ad;
      uniform_fill(w, d_in, p);
      uniform_fill(as, p, 1);
      uniform_fill(ad, p, 1);
      gp.w.push_back(w);
      gp.a_src.push_back(as);
      gp.a_dst.push_back(ad);
    }
    gp.bn_gamma = Eigen::MatrixXd::Ones(f, 1);
    gp.bn_beta = Eigen::MatrixXd::Zero(f, 1);
    gp.bn_mean = Eigen::MatrixXd::Zero(f, 1);
    gp.bn_var = Eigen::MatrixXd::Ones(f, 1);
    m.gat.push_back(std::move(gp));
    d_in = f;
  }
  const int hdim = config.gru_hidden;
  int in = f;
  for (int l = 0; l < config.gru_layers; ++l) {
    GruLayerParams gp;
    uniform_fill(gp.w_ih, 3 * hdim, in);
    uniform_fill(gp.w_hh, 3 * hdim, hdim);
    uniform_fill(gp.b_ih, 3 * hdim, 1);
    uniform_fill(gp.b_hh, 3 * hdim, 1);
    m.gru.push_back(std::move(gp));
    in = hdim;
  }
  uniform_fill(m.w_head, hdim, config.num_nodes * config.num_actions);
  uniform_fill(m.b_head, config.num_nodes * config.num_actions, 1);
  return m;
}

std::vector<ParamRef> parameter_blocks(TgnModel& model) {
  std::vector<ParamRef> out;
  for (size_t l = 0; l < model.gat.size(); ++l) {
    GatLayerParams& gp = model.gat[l];
    const std::string base = "gat" + std::to_string(l) + ".";
    for (size_t h = 0; h < gp.w.size(); ++h) {
      out.push_back({base + "w" + std::to_string(h), &gp.w[h]});
      out.push_back({base + "a_src" + std::to_string(h), &gp.a_src[h]});
      out.push_back({base + "a_dst" + std::to_string(h), &gp.a_dst[h]});
    }
    out.push_back({base + "bn_gamma", &gp.bn_gamma});
    out.push_back({base + "bn_beta", &gp.bn_beta});
  }
  for (size_t l = 0; l < model.gru.size(); ++l) {
    GruLayerParams& gp = model.gru[l];
    const std::string base = "gru" + std::to_string(l) + ".";
    out.push_back({base + "w_ih", &gp.w_ih});
    out.push_back({base + "w_hh", &gp.w_hh});
    out.push_back({base + "b_ih", &gp.b_ih});
    out.push_back({base + "b_hh", &gp.b_hh});
  }
  out.push_back({"head.w", &model.w_head});
  out.push_back({"head.b", &model.b_head});
  return out;
}

EncodedSequence encode_sequence(const KeyframeSequence& ks,
                                const ScenarioSpec& spec) {
  EncodedSequence seq;
  const int n = int(ks.node_ids.size());
  for (size_t t = 0; t < ks.keyframes.size(); ++t) {
    const Keyframe& kf = ks.keyframes[t];
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
      Vec2 p = spec.normalize(kf.positions[size_t(i)]);
      x(i, 0) = p.x;
      x(i, 1) = p.y;
    }
    seq.snapshots.push_back(std::move(x));
    if (t + 1 < ks.keyframes.size()) {
      seq.targets.push_back(ks.keyframes[t + 1].labels);
    } else {
      seq.targets.push_back(std::vector<int>(size_t(n), 0));
    }
  }
  return seq;
}

DropoutPlan DropoutPlan::draw(const TgnConfig& c, int steps, Rng& rng) {
  DropoutPlan plan;
  if (c.dropout_rate <= 0.0) return plan;
  const double keep = 1.0 - c.dropout_rate;
  const double scale = 1.0 / keep;
  plan.masks.resize(size_t(steps));
  for (int t = 0; t < steps; ++t) {
    for (int l = 0; l < c.gat_layers; ++l) {
      Eigen::MatrixXd m(c.num_nodes, c.feature_dim());
      for (int r = 0; r < m.rows(); ++r) {
        for (int col = 0; col < m.cols(); ++col) {
          m(r, col) = rng.uniform() < keep ? scale : 0.0;
        }
      }
      plan.masks[size_t(t)][size_t(l)] = std::move(m);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Forward/backward machinery. Caches hold everything the reverse pass needs.
// ---------------------------------------------------------------------------

namespace {

struct GatLayerCache {
  Eigen::MatrixXd input;                    // N x d_in
  std::vector<Eigen::MatrixXd> z;           // per head, N x p
  std::vector<std::vector<double>> raw;     // per head, per (dst, nbr slot)
  std::vector<std::vector<double>> alpha;   // per head, same layout
  Eigen::MatrixXd concat;                   // N x F, pre-BN
  Eigen::MatrixXd xhat;                     // N x F
  Eigen::VectorXd istd;                     // F (train: batch; eval: running)
  bool train_stats = false;
  const Eigen::MatrixXd* dropout = nullptr; // nullptr = identity
  Eigen::MatrixXd pre_relu;                 // N x F (post-dropout)
};

struct StepCache {
  std::array<GatLayerCache, 3> gat;
  Eigen::VectorXd g;  // pooled embedding
  struct GruCache {
    Eigen::VectorXd x, h_prev, r, z, n, gh_n;
  };
  std::vector<GruCache> gru;       // per layer
  Eigen::MatrixXd probs;           // N x A softmax rows
};

Eigen::MatrixXd gat_forward_impl(const Eigen::MatrixXd& input,
                                 const AttentionGraph& graph, GatLayerParams& p,
                                 RunMode mode, const Eigen::MatrixXd* dropout_mask,
                                 int layer_index, GatLayerCache* cache) {
  const int n = int(input.rows());
  const int heads = int(p.w.size());
  const int pdim = int(p.w[0].cols());
  const int f = heads * pdim;

  Eigen::MatrixXd concat(n, f);
  std::vector<Eigen::MatrixXd> zs;
  std::vector<std::vector<double>> raws, alphas;
  for (int h = 0; h < heads; ++h) {
    Eigen::MatrixXd z = input * p.w[size_t(h)];
    Eigen::VectorXd src_score = z * p.a_src[size_t(h)];
    Eigen::VectorXd dst_score = z * p.a_dst[size_t(h)];
    std::vector<double> raw, alpha;
    for (int i = 0; i < n; ++i) {
      const auto& nbrs = graph.in_neighbors[size_t(i)];
      std::vector<double> logits(nbrs.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t s = 0; s < nbrs.size(); ++s) {
        double v = src_score[nbrs[s]] + dst_score[i];
        raw.push_back(v);
        double lr = v > 0 ? v : kLeakySlope * v;
        logits[s] = lr;
        mx = std::max(mx, lr);
      }
      double denom = 0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        denom += l;
      }
      Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(pdim);
      for (size_t s = 0; s < nbrs.size(); ++s) {
        double a = logits[s] / denom;
        alpha.push_back(a);
        out += a * z.row(nbrs[s]);
      }
      concat.block(i, h * pdim, 1, pdim) = out;
    }
    zs.push_back(std::move(z));
    raws.push_back(std::move(raw));
    alphas.push_back(std::move(alpha));
  }

  // BN over the node dimension, per feature column.
  Eigen::MatrixXd xhat(n, f);
  Eigen::VectorXd istd(f);
  const bool train_stats = mode == RunMode::train;
  if (train_stats) {
    for (int c = 0; c < f; ++c) {
      double mean = concat.col(c).mean();
      double var = (concat.col(c).array() - mean).square().mean();
      double is = 1.0 / std::sqrt(var + kBnEps);
      istd[c] = is;
      xhat.col(c) = (concat.col(c).array() - mean) * is;
      p.bn_mean(c, 0) = (1.0 - kBnMomentum) * p.bn_mean(c, 0) + kBnMomentum * mean;
      p.bn_var(c, 0) = (1.0 - kBnMomentum) * p.bn_var(c, 0) + kBnMomentum * var;
    }
  } else {
    for (int c = 0; c < f; ++c) {
      double is = 1.0 / std::sqrt(p.bn_var(c, 0) + kBnEps);
      istd[c] = is;
      xhat.col(c) = (concat.col(c).array() - p.bn_mean(c, 0)) * is;
    }
  }
  Eigen::MatrixXd y(n, f);
  for (int c = 0; c < f; ++c) {
    y.col(c) = xhat.col(c) * p.bn_gamma(c, 0) + Eigen::VectorXd::Constant(n, p.bn_beta(c, 0));
  }

  if (mode == RunMode::train && dropout_mask != nullptr) {
    y = y.cwiseProduct(*dropout_mask);
  }
  Eigen::MatrixXd pre_relu = y;
  Eigen::MatrixXd out = y.cwiseMax(0.0);
  check_finite(out, "gat layer " + std::to_string(layer_index));

  if (cache != nullptr) {
    cache->input = input;
    cache->z = std::move(zs);
    cache->raw = std::move(raws);
    cache->alpha = std::move(alphas);
    cache->concat = std::move(concat);
    cache->xhat = std::move(xhat);
    cache->istd = std::move(istd);
    cache->train_stats = train_stats;
    cache->dropout = dropout_mask;
    cache->pre_relu = std::move(pre_relu);
  }
  return out;
}

struct GatLayerGrads {
  std::vector<Eigen::MatrixXd> w, a_src, a_dst;
  Eigen::MatrixXd bn_gamma, bn_beta;
};

/// Reverse pass of one GAT layer; returns the gradient wrt the layer input
/// and accumulates parameter gradients.
Eigen::MatrixXd gat_backward(const GatLayerCache& cache, const AttentionGraph& graph,
                             const GatLayerParams& p, const Eigen::MatrixXd& d_out,
                             GatLayerGrads& grads) {
  const int n = int(cache.input.rows());
  const int heads = int(p.w.size());
  const int pdim = int(p.w[0].cols());
  const int f = heads * pdim;

  // ReLU, dropout.
  Eigen::MatrixXd dy =
      d_out.cwiseProduct((cache.pre_relu.array() > 0.0).cast<double>().matrix());
  if (cache.dropout != nullptr) dy = dy.cwiseProduct(*cache.dropout);

  // BN.
  Eigen::MatrixXd d_concat(n, f);
  for (int c = 0; c < f; ++c) {
    const double gamma = p.bn_gamma(c, 0);
    grads.bn_gamma(c, 0) += dy.col(c).dot(cache.xhat.col(c));
    grads.bn_beta(c, 0) += dy.col(c).sum();
    Eigen::VectorXd dxhat = dy.col(c) * gamma;
    if (cache.train_stats) {
      const double sum_dxhat = dxhat.sum();
      const double sum_dxhat_xhat = dxhat.dot(cache.xhat.col(c));
      d_concat.col(c) =
          (cache.istd[c] / double(n)) *
          (double(n) * dxhat.array() - sum_dxhat -
           cache.xhat.col(c).array() * sum_dxhat_xhat)
              .matrix();
    } else {
      d_concat.col(c) = dxhat * cache.istd[c];
    }
  }

  Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(n, cache.input.cols());
  for (int h = 0; h < heads; ++h) {
    const Eigen::MatrixXd& z = cache.z[size_t(h)];
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(n, pdim);
    const Eigen::VectorXd a_src = p.a_src[size_t(h)].col(0);
    const Eigen::VectorXd a_dst = p.a_dst[size_t(h)].col(0);
    Eigen::VectorXd da_src = Eigen::VectorXd::Zero(pdim);
    Eigen::VectorXd da_dst = Eigen::VectorXd::Zero(pdim);

    size_t slot = 0;
    for (int i = 0; i < n; ++i) {
      const auto& nbrs = graph.in_neighbors[size_t(i)];
      const Eigen::RowVectorXd dout_i = d_concat.block(i, h * pdim, 1, pdim);
      // Message path and attention weights.
      std::vector<double> dalpha(nbrs.size());
      double dot = 0.0;
      for (size_t s = 0; s < nbrs.size(); ++s) {
        const double a = cache.alpha[size_t(h)][slot + s];
        dalpha[s] = dout_i.dot(z.row(nbrs[s]));
        dz.row(nbrs[s]) += a * dout_i;
        dot += a * dalpha[s];
      }
      // Softmax, leaky-ReLU, additive score.
      for (size_t s = 0; s < nbrs.size(); ++s) {
        const double a = cache.alpha[size_t(h)][slot + s];
        double dl = a * (dalpha[s] - dot);
        const double raw = cache.raw[size_t(h)][slot + s];
        dl *= raw > 0 ? 1.0 : kLeakySlope;
        da_src += dl * z.row(nbrs[s]).transpose();
        da_dst += dl * z.row(i).transpose();
        dz.row(nbrs[s]) += dl * a_src.transpose();
        dz.row(i) += dl * a_dst.transpose();
      }
      slot += nbrs.size();
    }
    grads.w[size_t(h)].noalias() += cache.input.transpose() * dz;
    grads.a_src[size_t(h)].col(0) += da_src;
    grads.a_dst[size_t(h)].col(0) += da_dst;
    d_input.noalias() += dz * p.w[size_t(h)].transpose();
  }
  return d_input;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Eigen::VectorXd gru_step_forward(const GruLayerParams& p, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& h_prev,
                                 StepCache::GruCache* cache) {
  const int hd = int(p.w_hh.cols());
  Eigen::VectorXd gi = p.w_ih * x + p.b_ih.col(0);
  Eigen::VectorXd gh = p.w_hh * h_prev + p.b_hh.col(0);
  Eigen::VectorXd r(hd), z(hd), nn(hd);
  for (int i = 0; i < hd; ++i) {
    r[i] = sigmoid(gi[i] + gh[i]);
    z[i] = sigmoid(gi[hd + i] + gh[hd + i]);
    nn[i] = std::tanh(gi[2 * hd + i] + r[i] * gh[2 * hd + i]);
  }
  Eigen::VectorXd h = (1.0 - z.array()) * nn.array() + z.array() * h_prev.array();
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->r = r;
    cache->z = z;
    cache->n = nn;
    cache->gh_n = gh.segment(2 * hd, hd);
  }
  return h;
}

struct GruLayerGrads {
  Eigen::MatrixXd w_ih, w_hh, b_ih, b_hh;
};

/// Reverse pass of one GRU step. dh is the gradient wrt the new state;
/// returns (dx, dh_prev).
std::pair<Eigen::VectorXd, Eigen::VectorXd> gru_backward(
    const GruLayerParams& p, const StepCache::GruCache& c,
    const Eigen::VectorXd& dh, GruLayerGrads& grads) {
  const int hd = int(p.w_hh.cols());
  Eigen::VectorXd dz = dh.array() * (c.h_prev.array() - c.n.array());
  Eigen::VectorXd dn = dh.array() * (1.0 - c.z.array());
  Eigen::VectorXd dh_prev = dh.array() * c.z.array();

  Eigen::VectorXd da_n = dn.array() * (1.0 - c.n.array().square());
  Eigen::VectorXd dgh_n = da_n.array() * c.r.array();
  Eigen::VectorXd dr = da_n.array() * c.gh_n.array();
  Eigen::VectorXd da_r = dr.array() * c.r.array() * (1.0 - c.r.array());
  Eigen::VectorXd da_z = dz.array() * c.z.array() * (1.0 - c.z.array());

  Eigen::VectorXd dgi(3 * hd), dgh(3 * hd);
  dgi << da_r, da_z, da_n;
  dgh << da_r, da_z, dgh_n;

  grads.w_ih.noalias() += dgi * c.x.transpose();
  grads.w_hh.noalias() += dgh * c.h_prev.transpose();
  grads.b_ih.col(0) += dgi;
  grads.b_hh.col(0) += dgh;

  Eigen::VectorXd dx = p.w_ih.transpose() * dgi;
  dh_prev += p.w_hh.transpose() * dgh;
  return {dx, dh_prev};
}

struct SequenceWork {
  double loss = 0.0;
  std::vector<StepCache> steps;
  std::vector<GruState> states;  // state after each step
};

/// Teacher-forced forward pass over one sequence. When `caches` is true the
/// step caches needed by the reverse pass are retained.
SequenceWork forward_sequence(TgnModel& model, const EncodedSequence& seq,
                              RunMode mode, const DropoutPlan& plan, bool caches) {
  const TgnConfig& c = model.config;
  const int steps = int(seq.snapshots.size());
  const int n = c.num_nodes;
  const int a = c.num_actions;
  SequenceWork work;
  if (caches) work.steps.resize(size_t(steps));

  GruState state = GruState::zero(c);
  double total_ce = 0.0;
  for (int t = 0; t < steps; ++t) {
    StepCache* sc = caches ? &work.steps[size_t(t)] : nullptr;
    Eigen::MatrixXd h = seq.snapshots[size_t(t)];
    for (int l = 0; l < c.gat_layers; ++l) {
      h = gat_forward_impl(h, model.graph, model.gat[size_t(l)], mode,
                           plan.mask(t, l), l, sc ? &sc->gat[size_t(l)] : nullptr);
    }
    Eigen::VectorXd g = h.colwise().mean();
    if (sc) sc->g = g;

    GruState next;
    Eigen::VectorXd input = g;
    if (sc) sc->gru.resize(size_t(c.gru_layers));
    for (int l = 0; l < c.gru_layers; ++l) {
      Eigen::VectorXd out = gru_step_forward(model.gru[size_t(l)], input,
                                             state.h[size_t(l)],
                                             sc ? &sc->gru[size_t(l)] : nullptr);
      next.h.push_back(out);
      input = out;
    }
    state = next;
    if (caches) work.states.push_back(state);

    Eigen::VectorXd flat = model.w_head.transpose() * state.h.back() + model.b_head.col(0);
    Eigen::MatrixXd probs(n, a);
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd row = flat.segment(i * a, a).transpose();
      double mx = row.maxCoeff();
      Eigen::RowVectorXd e = (row.array() - mx).exp();
      double denom = e.sum();
      probs.row(i) = e / denom;
      total_ce += -std::log(std::max(probs(i, seq.targets[size_t(t)][size_t(i)]),
                                     1e-300));
    }
    if (sc) sc->probs = std::move(probs);
  }
  work.loss = total_ce / double(steps * n);
  if (!std::isfinite(work.loss)) throw NumericError("sequence loss is non-finite");
  return work;
}

TgnGradients zero_gradients(TgnModel& model) {
  TgnGradients g;
  for (ParamRef& p : parameter_blocks(model)) {
    g.blocks.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
  }
  return g;
}

/// Reverse pass over one sequence; gradients land in `out` (ordered like
/// parameter_blocks).
void backward_sequence(TgnModel& model, const EncodedSequence& seq,
                       const SequenceWork& work, TgnGradients& out) {
  const TgnConfig& c = model.config;
  const int steps = int(seq.snapshots.size());
  const int n = c.num_nodes;
  const int a = c.num_actions;
  const double cell_norm = 1.0 / double(steps * n);

  // Gradient views in registry order.
  std::vector<GatLayerGrads> gat_g(size_t(c.gat_layers));
  std::vector<GruLayerGrads> gru_g(size_t(c.gru_layers));
  size_t idx = 0;
  for (int l = 0; l < c.gat_layers; ++l) {
    for (int h = 0; h < c.heads; ++h) {
      gat_g[size_t(l)].w.push_back(Eigen::MatrixXd::Zero(
          model.gat[size_t(l)].w[size_t(h)].rows(), model.gat[size_t(l)].w[size_t(h)].cols()));
      gat_g[size_t(l)].a_src.push_back(Eigen::MatrixXd::Zero(c.gat_hidden, 1));
      gat_g[size_t(l)].a_dst.push_back(Eigen::MatrixXd::Zero(c.gat_hidden, 1));
      idx += 3;
    }
    gat_g[size_t(l)].bn_gamma = Eigen::MatrixXd::Zero(c.feature_dim(), 1);
    gat_g[size_t(l)].bn_beta = Eigen::MatrixXd::Zero(c.feature_dim(), 1);
    idx += 2;
  }
  for (int l = 0; l < c.gru_layers; ++l) {
    gru_g[size_t(l)].w_ih = Eigen::MatrixXd::Zero(model.gru[size_t(l)].w_ih.rows(),
                                                  model.gru[size_t(l)].w_ih.cols());
    gru_g[size_t(l)].w_hh = Eigen::MatrixXd::Zero(model.gru[size_t(l)].w_hh.rows(),
                                                  model.gru[size_t(l)].w_hh.cols());
    gru_g[size_t(l)].b_ih = Eigen::MatrixXd::Zero(model.gru[size_t(l)].b_ih.rows(), 1);
    gru_g[size_t(l)].b_hh = Eigen::MatrixXd::Zero(model.gru[size_t(l)].b_hh.rows(), 1);
    idx += 4;
  }
  Eigen::MatrixXd dw_head = Eigen::MatrixXd::Zero(model.w_head.rows(), model.w_head.cols());
  Eigen::MatrixXd db_head = Eigen::MatrixXd::Zero(model.b_head.rows(), 1);

  std::vector<Eigen::VectorXd> dh_future(size_t(c.gru_layers),
                                         Eigen::VectorXd::Zero(c.gru_hidden));
  for (int t = steps - 1; t >= 0; --t) {
    const StepCache& sc = work.steps[size_t(t)];
    // Cross-entropy head.
    Eigen::VectorXd dflat(n * a);
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd drow = sc.probs.row(i) * cell_norm;
      drow[seq.targets[size_t(t)][size_t(i)]] -= cell_norm;
      dflat.segment(i * a, a) = drow.transpose();
    }
    const Eigen::VectorXd& s_top = work.states[size_t(t)].h.back();
    dw_head.noalias() += s_top * dflat.transpose();
    db_head.col(0) += dflat;

    dh_future[size_t(c.gru_layers - 1)] += model.w_head * dflat;

    // GRU stack, top layer first.
    Eigen::VectorXd dx_lower;
    for (int l = c.gru_layers - 1; l >= 0; --l) {
      Eigen::VectorXd dh = dh_future[size_t(l)];
      if (l == c.gru_layers - 1) {
        // already includes head gradient
      } else {
        dh += dx_lower;
      }
      auto [dx, dh_prev] = gru_backward(model.gru[size_t(l)], sc.gru[size_t(l)], dh,
                                        gru_g[size_t(l)]);
      dh_future[size_t(l)] = dh_prev;
      dx_lower = dx;
    }
    // Pooling spreads the embedding gradient uniformly over nodes.
    Eigen::MatrixXd dnodes =
        (Eigen::VectorXd::Ones(n) * dx_lower.transpose()) / double(n);
    for (int l = c.gat_layers - 1; l >= 0; --l) {
      dnodes = gat_backward(sc.gat[size_t(l)], model.graph, model.gat[size_t(l)],
                            dnodes, gat_g[size_t(l)]);
    }
  }

  // Flatten into registry order.
  idx = 0;
  for (int l = 0; l < c.gat_layers; ++l) {
    for (int h = 0; h < c.heads; ++h) {
      out.blocks[idx++] += gat_g[size_t(l)].w[size_t(h)];
      out.blocks[idx++] += gat_g[size_t(l)].a_src[size_t(h)];
      out.blocks[idx++] += gat_g[size_t(l)].a_dst[size_t(h)];
    }
    out.blocks[idx++] += gat_g[size_t(l)].bn_gamma;
    out.blocks[idx++] += gat_g[size_t(l)].bn_beta;
  }
  for (int l = 0; l < c.gru_layers; ++l) {
    out.blocks[idx++] += gru_g[size_t(l)].w_ih;
    out.blocks[idx++] += gru_g[size_t(l)].w_hh;
    out.blocks[idx++] += gru_g[size_t(l)].b_ih;
    out.blocks[idx++] += gru_g[size_t(l)].b_hh;
  }
  out.blocks[idx++] += dw_head;
  out.blocks[idx++] += db_head;
}

std::string sequence_key(const EncodedSequence& seq) {
  std::string key;
  auto put = [&key](const void* p, size_t bytes) {
    key.append(reinterpret_cast<const char*>(p), bytes);
  };
  for (const Eigen::MatrixXd& m : seq.snapshots) {
    put(m.data(), sizeof(double) * size_t(m.size()));
  }
  for (const auto& row : seq.targets) {
    put(row.data(), sizeof(int) * row.size());
  }
  return key;
}

}  // namespace

Eigen::MatrixXd gat_layer_forward(const Eigen::MatrixXd& h, const AttentionGraph& g,
                                  GatLayerParams& p, RunMode mode,
                                  double dropout_rate, Rng* rng, int layer_index) {
  Eigen::MatrixXd mask;
  const Eigen::MatrixXd* mask_ptr = nullptr;
  if (mode == RunMode::train && dropout_rate > 0.0) {
    if (rng == nullptr) throw InputError("gat_layer_forward: dropout needs rng");
    const double keep = 1.0 - dropout_rate;
    mask.resize(h.rows(), p.bn_gamma.rows());
    for (int r = 0; r < mask.rows(); ++r) {
      for (int c = 0; c < mask.cols(); ++c) {
        mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
    }
    mask_ptr = &mask;
  }
  return gat_forward_impl(h, g, p, mode, mask_ptr, layer_index, nullptr);
}

Eigen::VectorXd spatial_encode(const Eigen::MatrixXd& x, TgnModel& model,
                               RunMode mode, Rng* rng) {
  Eigen::MatrixXd h = x;
  for (int l = 0; l < model.config.gat_layers; ++l) {
    h = gat_layer_forward(h, model.graph, model.gat[size_t(l)], mode,
                          model.config.dropout_rate, rng, l);
  }
  return h.colwise().mean();
}

GruState temporal_step(const Eigen::VectorXd& g, const GruState& prev,
                       const TgnModel& model) {
  GruState next;
  Eigen::VectorXd input = g;
  for (int l = 0; l < model.config.gru_layers; ++l) {
    Eigen::VectorXd out =
        gru_step_forward(model.gru[size_t(l)], input, prev.h[size_t(l)], nullptr);
    next.h.push_back(out);
    input = out;
  }
  return next;
}

ActionStep predict_actions(const GruState& s, const TgnModel& model) {
  const int n = model.config.num_nodes;
  const int a = model.config.num_actions;
  Eigen::VectorXd flat = model.w_head.transpose() * s.h.back() + model.b_head.col(0);
  ActionStep step;
  step.logits.resize(n, a);
  step.actions.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    step.logits.row(i) = flat.segment(i * a, a).transpose();
    int best = 0;
    for (int j = 1; j < a; ++j) {
      if (step.logits(i, j) > step.logits(i, best)) best = j;
    }
    step.actions[size_t(i)] = best;
  }
  return step;
}

double sequence_loss(TgnModel& model, const EncodedSequence& seq, RunMode mode,
                     Rng* rng) {
  if (seq.snapshots.size() < 2) {
    std::cerr << "warning: sequence with fewer than 2 keyframes skipped\n";
    return 0.0;
  }
  DropoutPlan plan;
  if (mode == RunMode::train && model.config.dropout_rate > 0.0) {
    if (rng == nullptr) throw InputError("sequence_loss: dropout needs rng");
    plan = DropoutPlan::draw(model.config, int(seq.snapshots.size()), *rng);
  }
  return forward_sequence(model, seq, mode, plan, false).loss;
}

std::pair<double, TgnGradients> tgn_gradients(TgnModel& model,
                                              const std::vector<EncodedSequence>& batch,
                                              RunMode mode, Rng& rng) {
  std::vector<const EncodedSequence*> usable;
  int max_steps = 0;
  for (const EncodedSequence& s : batch) {
    if (s.snapshots.size() < 2) {
      std::cerr << "warning: sequence with fewer than 2 keyframes skipped\n";
      continue;
    }
    usable.push_back(&s);
    max_steps = std::max(max_steps, int(s.snapshots.size()));
  }
  if (usable.empty()) throw InputError("tgn_gradients: empty batch");

  DropoutPlan plan;
  if (mode == RunMode::train && model.config.dropout_rate > 0.0) {
    plan = DropoutPlan::draw(model.config, max_steps, rng);
  }

  // Identical sequences produce identical work; compute each unique one
  // once and average around the first gradient so duplicate-heavy batches
  // stay bitwise independent of the duplication count.
  std::map<std::string, size_t> memo;
  std::vector<double> losses;
  std::vector<TgnGradients> grads;
  std::vector<size_t> of_sequence;
  for (const EncodedSequence* s : usable) {
    std::string key = sequence_key(*s);
    auto it = memo.find(key);
    if (it != memo.end()) {
      of_sequence.push_back(it->second);
      continue;
    }
    SequenceWork work = forward_sequence(model, *s, mode, plan, true);
    TgnGradients g = zero_gradients(model);
    backward_sequence(model, *s, work, g);
    size_t id = losses.size();
    losses.push_back(work.loss);
    grads.push_back(std::move(g));
    memo[std::move(key)] = id;
    of_sequence.push_back(id);
  }

  const size_t k = of_sequence.size();
  const size_t pivot = of_sequence[0];
  double loss = 0.0;
  TgnGradients total = grads[pivot];  // copy as pivot
  for (size_t bi = 1; bi < k; ++bi) {
    size_t id = of_sequence[bi];
    loss += losses[id] - losses[pivot];
    if (id != pivot) {
      for (size_t b = 0; b < total.blocks.size(); ++b) {
        total.blocks[b] += (grads[id].blocks[b] - grads[pivot].blocks[b]) / double(k);
      }
    }
  }
  loss = losses[pivot] + loss / double(k);
  // Deviations already carry 1/k; the pivot itself must not be rescaled.
  for (size_t b = 0; b < total.blocks.size(); ++b) {
    if (!total.blocks[b].allFinite()) {
      throw NumericError("non-finite gradient in block " +
                         parameter_blocks(model)[b].name);
    }
  }
  return {loss, std::move(total)};
}

double tgn_batch_loss(TgnModel& model, const std::vector<EncodedSequence>& batch,
                      RunMode mode) {
  if (mode == RunMode::train && model.config.dropout_rate > 0.0) {
    throw InputError("tgn_batch_loss: train mode with dropout needs tgn_gradients");
  }
  std::map<std::string, size_t> memo;
  std::vector<double> losses;
  std::vector<size_t> of_sequence;
  DropoutPlan no_dropout;
  for (const EncodedSequence& s : batch) {
    if (s.snapshots.size() < 2) continue;
    std::string key = sequence_key(s);
    auto it = memo.find(key);
    if (it != memo.end()) {
      of_sequence.push_back(it->second);
      continue;
    }
    size_t id = losses.size();
    losses.push_back(forward_sequence(model, s, mode, no_dropout, false).loss);
    memo[std::move(key)] = id;
    of_sequence.push_back(id);
  }
  if (of_sequence.empty()) throw InputError("tgn_batch_loss: empty batch");
  const size_t k = of_sequence.size();
  const size_t pivot = of_sequence[0];
  double acc = 0.0;
  for (size_t bi = 1; bi < k; ++bi) acc += losses[of_sequence[bi]] - losses[pivot];
  return losses[pivot] + acc / double(k);
}

TrainResult train_tgn(const std::vector<EncodedSequence>& train_set,
                      std::vector<int> node_ids,
                      std::vector<std::pair<int, int>> edge_index,
                      const TgnConfig& config) {
  if (train_set.empty()) throw InputError("train_tgn: empty training set");
  TrainResult result;
  result.model = TgnModel::init(config, std::move(node_ids), std::move(edge_index));
  TgnModel& model = result.model;

  auto params = parameter_blocks(model);
  std::vector<Eigen::MatrixXd> m1, m2;
  for (ParamRef& p : params) {
    m1.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    m2.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Rng dropout_rng = Rng(config.seed).fork(0xd20);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto [train_loss, grads] =
        tgn_gradients(model, train_set, RunMode::train, dropout_rng);
    if (!std::isfinite(train_loss) || train_loss > 1e6) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (loss " + format_double(train_loss) + ")");
    }
    const double bc1 = 1.0 - std::pow(beta1, epoch);
    const double bc2 = 1.0 - std::pow(beta2, epoch);
    for (size_t b = 0; b < params.size(); ++b) {
      m1[b] = beta1 * m1[b] + (1.0 - beta1) * grads.blocks[b];
      m2[b] = beta2 * m2[b] +
              (1.0 - beta2) * grads.blocks[b].cwiseProduct(grads.blocks[b]);
      Eigen::MatrixXd mhat = m1[b] / bc1;
      Eigen::MatrixXd vhat = m2[b] / bc2;
      *params[b].value -=
          config.learning_rate *
          (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
    // One entry per epoch: the end-of-epoch loss of the deployable model
    // (dropout off, frozen batch-norm statistics) -- the quantity the
    // executor actually runs with.
    double loss = tgn_batch_loss(model, train_set, RunMode::eval);
    result.loss_history.push_back(loss);
    if (!std::isfinite(loss) || loss > 1e6) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (loss " + format_double(loss) + ")");
    }
    if (loss < 1e-4) break;
  }
  return result;
}

std::pair<ActionStep, GruState> predict_next_step(TgnModel& model,
                                                  const Eigen::MatrixXd& snapshot,
                                                  const GruState& prev) {
  Eigen::VectorXd g = spatial_encode(snapshot, model, RunMode::eval, nullptr);
  GruState next = temporal_step(g, prev, model);
  return {predict_actions(next, model), next};
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned text, parameter blocks in registry order,
// then batch-norm running statistics.
// ---------------------------------------------------------------------------

namespace {

void write_matrix(std::ostream& out, const std::string& name,
                  const Eigen::MatrixXd& m) {
  out << "param " << name << " " << m.rows() << " " << m.cols() << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c > 0) out << " ";
      out << format_double(m(r, c));
    }
    out << "\n";
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& expect_name) {
  std::string tag, name;
  int rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "param" || name != expect_name) {
    throw InputError("tgn checkpoint: expected block '" + expect_name + "'");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::string v;
      if (!(in >> v)) throw InputError("tgn checkpoint: truncated block " + name);
      m(r, c) = parse_double(v, "tgn checkpoint " + name);
    }
  }
  return m;
}

}  // namespace

void save_tgn(const TgnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  const TgnConfig& c = model.config;
  out << "ddace-tgn v1\n";
  out << "config " << c.gat_hidden << " " << c.heads << " " << c.gat_layers << " "
      << c.gru_hidden << " " << c.gru_layers << " " << format_double(c.dropout_rate)
      << " " << format_double(c.learning_rate) << " " << c.max_epochs << " "
      << c.seed << " " << c.num_actions << " " << c.num_nodes << "\n";
  out << "nodes";
  for (int id : model.node_ids) out << " " << id;
  out << "\n";
  out << "edges " << model.edge_index.size() << "\n";
  for (auto [s, t] : model.edge_index) out << s << " " << t << "\n";
  TgnModel& mutable_model = const_cast<TgnModel&>(model);
  for (ParamRef& p : parameter_blocks(mutable_model)) {
    write_matrix(out, p.name, *p.value);
  }
  for (size_t l = 0; l < model.gat.size(); ++l) {
    write_matrix(out, "gat" + std::to_string(l) + ".bn_mean", model.gat[l].bn_mean);
    write_matrix(out, "gat" + std::to_string(l) + ".bn_var", model.gat[l].bn_var);
  }
}

TgnModel load_tgn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "ddace-tgn" || version != "v1") {
    throw InputError(path + ": not a ddace-tgn v1 checkpoint");
  }
  std::string tag;
  TgnConfig c;
  in >> tag;
  if (tag != "config") throw InputError(path + ": missing config");
  std::string dropout, lr;
  in >> c.gat_hidden >> c.heads >> c.gat_layers >> c.gru_hidden >> c.gru_layers >>
      dropout >> lr >> c.max_epochs >> c.seed >> c.num_actions >> c.num_nodes;
  c.dropout_rate = parse_double(dropout, "checkpoint config");
  c.learning_rate = parse_double(lr, "checkpoint config");

  std::vector<int> node_ids(size_t(c.num_nodes));
  in >> tag;
  if (tag != "nodes") throw InputError(path + ": missing node list");
  for (int& id : node_ids) in >> id;

  in >> tag;
  if (tag != "edges") throw InputError(path + ": missing edge list");
  size_t n_edges = 0;
  in >> n_edges;
  std::vector<std::pair<int, int>> edges(n_edges);
  for (auto& [s, t] : edges) in >> s >> t;

  TgnModel model = TgnModel::init(c, std::move(node_ids), std::move(edges));
  for (ParamRef& p : parameter_blocks(model)) {
    *p.value = read_matrix(in, p.name);
  }
  for (size_t l = 0; l < model.gat.size(); ++l) {
    model.gat[l].bn_mean = read_matrix(in, "gat" + std::to_string(l) + ".bn_mean");
    model.gat[l].bn_var = read_matrix(in, "gat" + std::to_string(l) + ".bn_var");
  }
  return model;
}

}  // namespace ddace
