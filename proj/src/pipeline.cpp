#include "ddace/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ddace {

namespace fs = std::filesystem;

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (key == "split") cfg.split_ratio = parse_double(val, ctx);
    else if (key == "seed") cfg.seed = std::uint64_t(parse_long(val, ctx));
    else if (key == "k") cfg.spectral_k = int(parse_long(val, ctx));
    else if (key == "no_spectral") cfg.no_spectral = parse_long(val, ctx) != 0;
    else if (key == "laplacian")
      cfg.laplacian = val == "literal" ? LaplacianMode::literal
                                       : LaplacianMode::edge_similarity;
    else if (key == "gat_hidden") cfg.gat_hidden = int(parse_long(val, ctx));
    else if (key == "gru_hidden") cfg.gru_hidden = int(parse_long(val, ctx));
    else if (key == "dropout") cfg.dropout = parse_double(val, ctx);
    else if (key == "lr") cfg.learning_rate = parse_double(val, ctx);
    else if (key == "epochs") cfg.max_epochs = int(parse_long(val, ctx));
    else if (key == "gp_max_points") cfg.gp.max_points = int(parse_long(val, ctx));
    else if (key == "gp_arclength") cfg.gp.arclength_resample = parse_long(val, ctx) != 0;
    else if (key == "gp_key_by_id") cfg.gp.key_by_id = parse_long(val, ctx) != 0;
    else throw InputError(ctx + ": unknown config key '" + key + "'");
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  const std::string sidecar = dir + "/scenario.txt";
  if (!fs::exists(sidecar)) {
    throw InputError("data dir " + dir + " has no scenario.txt sidecar");
  }
  corpus.scenario = load_scenario(sidecar);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.substr(name.size() - 4) == ".csv" &&
        name.rfind("demo_", 0) == 0) {
      files.push_back(name);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("data dir " + dir + " has no demo_*.csv");
  for (const std::string& f : files) {
    corpus.demos.push_back(parse_demonstration(dir + "/" + f, corpus.scenario.vocab));
  }
  corpus.files = std::move(files);
  return corpus;
}

std::vector<std::pair<int, int>> edge_index_for(const RefinedEdgeSet& edges,
                                                const ScenarioSpec& scenario,
                                                bool no_spectral) {
  std::vector<std::pair<int, int>> out;
  const int n = int(scenario.nodes.size());
  if (no_spectral) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) out.emplace_back(i, j);
      }
    }
    return out;
  }
  for (const DirectedEdge& e : edges.edges) {
    out.emplace_back(scenario.node_index(e.source), scenario.node_index(e.target));
  }
  return out;
}

TrainArtifacts train_pipeline(const Corpus& corpus, const RunConfig& cfg) {
  TrainArtifacts art;
  auto [train_idx, test_idx] =
      split_indices(int(corpus.demos.size()), cfg.split_ratio, cfg.seed);
  art.train_idx = train_idx;
  art.test_idx = test_idx;

  // Per-demo keyframes, segments, and edges over the training split.
  std::vector<std::vector<DirectedEdge>> per_demo_edges;
  std::vector<EncodedSequence> sequences;
  std::vector<TrajectorySegment> all_segments;
  for (int i : train_idx) {
    const Demonstration& d = corpus.demos[size_t(i)];
    KeyframeSequence ks = segment_keyframes(d, i);
    std::vector<TrajectorySegment> segs = extract_segments(d, ks);
    per_demo_edges.push_back(extract_edges(ks, segs, d.vocab));
    sequences.push_back(encode_sequence(ks, corpus.scenario));
    all_segments.insert(all_segments.end(), segs.begin(), segs.end());
  }

  FrequencyTable ft = edge_frequencies(per_demo_edges);
  const int k = std::min(cfg.spectral_k, ft.edge_count());
  Eigen::MatrixXd a = build_edge_graph(ft, cfg.laplacian);
  std::vector<int> assignment = spectral_cluster(a, k);
  art.edges = refine(ft, assignment, k);
  art.edges.mode = cfg.laplacian;

  TgnConfig tc;
  tc.gat_hidden = cfg.gat_hidden;
  tc.gru_hidden = cfg.gru_hidden;
  tc.dropout_rate = cfg.dropout;
  tc.learning_rate = cfg.learning_rate;
  tc.max_epochs = cfg.max_epochs;
  tc.seed = cfg.seed;
  tc.num_nodes = int(corpus.scenario.nodes.size());
  tc.num_actions = corpus.scenario.vocab.size();

  std::vector<int> node_ids;
  for (const ScenarioNode& n : corpus.scenario.nodes) node_ids.push_back(n.desc.id);
  TrainResult tr = train_tgn(sequences, node_ids,
                             edge_index_for(art.edges, corpus.scenario,
                                            cfg.no_spectral),
                             tc);
  art.model = std::move(tr.model);
  art.loss_history = std::move(tr.loss_history);

  std::vector<NodeDescriptor> nodes;
  for (const ScenarioNode& n : corpus.scenario.nodes) nodes.push_back(n.desc);
  art.traj = fit_trajectory_model(all_segments, nodes, cfg.gp);
  return art;
}

std::string loss_history_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out << "epoch,loss\n";
  for (size_t e = 0; e < history.size(); ++e) {
    out << (e + 1) << "," << format_double(history[e]) << "\n";
  }
  return out.str();
}

void save_artifacts(const TrainArtifacts& art, const Corpus& corpus,
                    const std::string& model_dir) {
  fs::create_directories(model_dir);
  save_tgn(art.model, model_dir + "/tgn.txt");
  save_trajectory_model(art.traj, model_dir + "/gp.txt");
  {
    std::ofstream out(model_dir + "/edges.txt", std::ios::binary);
    out << serialize_edges(art.edges);
  }
  {
    std::ofstream out(model_dir + "/loss.csv", std::ios::binary);
    out << loss_history_csv(art.loss_history);
  }
  {
    std::ofstream out(model_dir + "/split.txt", std::ios::binary);
    for (int i : art.train_idx) out << "train " << corpus.files[size_t(i)] << "\n";
    for (int i : art.test_idx) out << "test " << corpus.files[size_t(i)] << "\n";
  }
}

LoadedModel load_artifacts(const std::string& model_dir) {
  LoadedModel lm;
  lm.model = load_tgn(model_dir + "/tgn.txt");
  lm.traj = load_trajectory_model(model_dir + "/gp.txt");
  std::ifstream in(model_dir + "/split.txt");
  if (!in) throw InputError("missing checkpoint " + model_dir + "/split.txt");
  std::string kind, file;
  while (in >> kind >> file) {
    if (kind == "test") lm.test_files.push_back(file);
  }
  return lm;
}

ScenarioSpec scenario_for_demo(const ScenarioSpec& base, const Demonstration& demo) {
  ScenarioSpec spec = base;
  for (size_t i = 0; i < spec.nodes.size(); ++i) {
    spec.nodes[i].start = demo.frames[0][i];
  }
  return spec;
}

EvalArtifacts eval_pipeline(TgnModel& model, const TrajectoryModel& traj,
                            const Corpus& corpus, const std::vector<int>& test_idx) {
  EvalArtifacts ev;
  std::vector<EpisodeRef> refs;
  for (int i : test_idx) {
    const Demonstration& demo = corpus.demos[size_t(i)];
    ScenarioSpec spec = scenario_for_demo(corpus.scenario, demo);
    ev.traces.push_back(run_episode(model, traj, spec));
    refs.push_back(reference_from_demo(demo, i));
    ev.episode_demo_idx.push_back(i);
  }
  ev.report = compute_metrics(ev.traces, refs);
  return ev;
}

void render_episode_svg(const ExecutionTrace& trace, const EpisodeRef& ref,
                        const ScenarioSpec& spec, const std::string& path) {
  const double size = 600, margin = 24;
  SvgCanvas svg(size, size);
  auto map = [&](Vec2 p) {
    return Vec2{margin + (p.x - spec.xmin) / (spec.xmax - spec.xmin) * (size - 2 * margin),
                size - margin -
                    (p.y - spec.ymin) / (spec.ymax - spec.ymin) * (size - 2 * margin)};
  };

  // Demonstrated paths dashed, generated paths solid.
  size_t color = 0;
  for (const auto& [id, trajs] : ref.trajectories) {
    for (const Polyline& t : trajs) {
      std::vector<Vec2> pts;
      for (Vec2 p : t) pts.push_back(map(p));
      svg.polyline(pts, series_color(color), 1.2, true);
    }
    ++color;
  }
  color = 0;
  for (const auto& [id, motions] : trace.motions) {
    for (const Polyline& t : motions) {
      std::vector<Vec2> pts;
      for (Vec2 p : t) pts.push_back(map(p));
      svg.polyline(pts, series_color(color), 1.8);
    }
    ++color;
  }
  for (const ScenarioNode& n : spec.nodes) {
    Vec2 p = map(n.start);
    switch (n.desc.kind) {
      case NodeKind::robot:
        svg.circle(p, 5, "#ffffff", "#222");
        break;
      case NodeKind::goal:
        svg.rect({p.x - 5, p.y - 5}, 10, 10, "#ffd700", "#222");
        break;
      case NodeKind::object:
        svg.circle(p, 3.5, "#444");
        break;
    }
    svg.text({p.x + 6, p.y - 6}, "n" + std::to_string(n.desc.id), 10);
  }
  svg.text({margin, 16},
           "halt=" + trace.halt_reason + " success=" + (trace.success ? "1" : "0"),
           12);
  svg.save(path);
}

void write_eval_outputs(const EvalArtifacts& ev, const Corpus& corpus,
                        const std::string& out_dir, bool render,
                        const std::vector<double>* loss_history) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/report.txt", std::ios::binary);
    out << format_report_table(ev.report, "DDACE") << "\n"
        << format_report_kv(ev.report);
  }
  for (size_t e = 0; e < ev.traces.size(); ++e) {
    const int demo_idx = ev.episode_demo_idx[e];
    const Demonstration& demo = corpus.demos[size_t(demo_idx)];
    ScenarioSpec spec = scenario_for_demo(corpus.scenario, demo);
    std::ostringstream name;
    name << out_dir << "/trace_" << e << ".csv";
    std::ofstream out(name.str(), std::ios::binary);
    out << serialize_trace(ev.traces[e], spec);
    if (render) {
      std::ostringstream svg_name;
      svg_name << out_dir << "/episode_" << e << ".svg";
      render_episode_svg(ev.traces[e], reference_from_demo(demo, demo_idx), spec,
                         svg_name.str());
    }
  }
  if (render && loss_history != nullptr) {
    render_loss_chart({{"training loss", *loss_history}}, false,
                      out_dir + "/loss.svg");
  }
}

}  // namespace ddace
