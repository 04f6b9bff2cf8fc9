#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "ddace/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ddace;

namespace {

struct CommonFlags {
  std::string config_file;
  RunConfig cfg;
};

void add_train_flags(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--config", c.config_file, "flat key=value config file");
  cmd->add_option("--seed", c.cfg.seed, "run seed");
  cmd->add_option("--split", c.cfg.split_ratio, "train fraction (default 0.9)");
  cmd->add_option("--k", c.cfg.spectral_k, "spectral cluster count (default 2)");
  cmd->add_flag("--no-spectral", c.cfg.no_spectral,
                "ablation: fully connected edge index");
  cmd->add_option("--laplacian", [&c](CLI::results_t r) {
        c.cfg.laplacian = r[0] == "literal" ? LaplacianMode::literal
                                            : LaplacianMode::edge_similarity;
        return true;
      },
      "edge_similarity|literal");
  cmd->add_option("--epochs", c.cfg.max_epochs, "max training epochs");
  cmd->add_option("--lr", c.cfg.learning_rate, "learning rate");
  cmd->add_option("--dropout", c.cfg.dropout, "dropout rate");
  cmd->add_option("--gat-hidden", c.cfg.gat_hidden, "GAT per-head width");
  cmd->add_option("--gru-hidden", c.cfg.gru_hidden, "GRU hidden width");
  cmd->add_option("--gp-max-points", c.cfg.gp.max_points, "GP pooled point cap");
  cmd->add_flag("--gp-arclength", c.cfg.gp.arclength_resample,
                "resample segments by arclength");
  cmd->add_flag("--gp-key-by-id", c.cfg.gp.key_by_id,
                "GP pairs keyed by node ids instead of kinds");
}

int do_gen(const std::string& preset, const std::string& family, int robots,
           int actions, int demos, double jitter, std::uint64_t seed,
           const std::string& out) {
  TaskSpec spec;
  if (!preset.empty()) {
    spec = preset_spec(preset);
  } else if (!family.empty()) {
    spec.family = family_from_name(family);
  } else {
    throw InputError("gen: need --preset or --family");
  }
  if (robots > 0) spec.n_robots = robots;
  if (actions > 0) spec.n_actions = actions;
  if (demos > 0) spec.n_demos = demos;
  if (jitter >= 0.0) spec.sigma_pos = jitter;
  if (seed != std::uint64_t(-1)) spec.seed = seed;

  GeneratedTask task = gen_task(spec);
  write_task(task, out);
  std::cout << "wrote " << task.demos.size() << " demonstrations + scenario to "
            << out << "\n";
  return 0;
}

int do_train(const std::string& data, const std::string& out, CommonFlags& c) {
  if (!c.config_file.empty()) {
    RunConfig base;
    apply_config_file(base, c.config_file);
    // config file fills defaults; explicit flags already sit in c.cfg, so
    // merge by re-applying the file only where flags kept defaults
    RunConfig merged = base;
    RunConfig defaults;
    if (c.cfg.seed != defaults.seed) merged.seed = c.cfg.seed;
    if (c.cfg.split_ratio != defaults.split_ratio) merged.split_ratio = c.cfg.split_ratio;
    if (c.cfg.spectral_k != defaults.spectral_k) merged.spectral_k = c.cfg.spectral_k;
    if (c.cfg.no_spectral != defaults.no_spectral) merged.no_spectral = c.cfg.no_spectral;
    if (c.cfg.laplacian != defaults.laplacian) merged.laplacian = c.cfg.laplacian;
    if (c.cfg.max_epochs != defaults.max_epochs) merged.max_epochs = c.cfg.max_epochs;
    if (c.cfg.learning_rate != defaults.learning_rate) merged.learning_rate = c.cfg.learning_rate;
    if (c.cfg.dropout != defaults.dropout) merged.dropout = c.cfg.dropout;
    if (c.cfg.gat_hidden != defaults.gat_hidden) merged.gat_hidden = c.cfg.gat_hidden;
    if (c.cfg.gru_hidden != defaults.gru_hidden) merged.gru_hidden = c.cfg.gru_hidden;
    if (c.cfg.gp.max_points != defaults.gp.max_points) merged.gp.max_points = c.cfg.gp.max_points;
    if (c.cfg.gp.arclength_resample != defaults.gp.arclength_resample)
      merged.gp.arclength_resample = c.cfg.gp.arclength_resample;
    if (c.cfg.gp.key_by_id != defaults.gp.key_by_id) merged.gp.key_by_id = c.cfg.gp.key_by_id;
    c.cfg = merged;
  }
  Corpus corpus = load_corpus(data);
  if (corpus.demos.size() < 2) {
    throw InputError("train: need at least 2 demonstrations");
  }
  TrainArtifacts art = train_pipeline(corpus, c.cfg);
  save_artifacts(art, corpus, out);
  std::cout << "split: " << art.train_idx.size() << " train / "
            << art.test_idx.size() << " test\n";
  std::cout << "refined edges: " << art.edges.edges.size() << " of "
            << art.edges.all_edges.size() << "\n";
  std::cout << "final loss: " << format_double(art.loss_history.back()) << " after "
            << art.loss_history.size() << " epochs\n";
  std::cout << "checkpoints in " << out << "\n";
  return 0;
}

int do_eval(const std::string& model_dir, const std::string& data,
            const std::string& out, bool render) {
  LoadedModel lm = load_artifacts(model_dir);
  Corpus corpus = load_corpus(data);
  std::vector<int> test_idx;
  for (const std::string& f : lm.test_files) {
    auto it = std::find(corpus.files.begin(), corpus.files.end(), f);
    if (it == corpus.files.end()) {
      throw InputError("eval: held-out demo " + f + " missing from " + data);
    }
    test_idx.push_back(int(it - corpus.files.begin()));
  }
  EvalArtifacts ev = eval_pipeline(lm.model, lm.traj, corpus, test_idx);

  std::vector<double> loss;
  {
    std::ifstream in(model_dir + "/loss.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      auto comma = line.find(',');
      if (comma != std::string::npos) {
        loss.push_back(parse_double(line.substr(comma + 1), "loss.csv"));
      }
    }
  }
  write_eval_outputs(ev, corpus, out, render, loss.empty() ? nullptr : &loss);
  std::cout << format_report_table(ev.report, "DDACE");
  std::cout << "report in " << out << "/report.txt\n";
  return 0;
}

int do_sweep(const std::string& study, int min_v, int max_v,
             const std::string& preset, const std::string& out, CommonFlags& c) {
  struct Leg {
    std::string label;
    TaskSpec spec;
  };
  std::vector<Leg> legs;
  if (study == "robots") {
    int lo = min_v > 0 ? min_v : 4, hi = max_v > 0 ? max_v : 11;
    if (lo < 4 || hi > 11 || lo > hi) throw InputError("sweep: robot range must lie in [4,11]");
    for (int n = lo; n <= hi; ++n) {
      Leg leg{"robots-" + std::to_string(n), preset_spec("relay-n" + std::to_string(n))};
      legs.push_back(leg);
    }
  } else if (study == "actions") {
    int lo = min_v > 0 ? min_v : 2, hi = max_v > 0 ? max_v : 4;
    if (lo < 2 || hi > 4 || lo > hi) throw InputError("sweep: action range must lie in [2,4]");
    for (int a = lo; a <= hi; ++a) {
      Leg leg{"actions-" + std::to_string(a), preset_spec("screen-a" + std::to_string(a))};
      legs.push_back(leg);
    }
  } else if (study == "demos") {
    TaskSpec base = preset_spec(preset.empty() ? "task1" : preset);
    for (int d : {5, 10, 20, 30}) {
      TaskSpec s = base;
      s.n_demos = d;
      legs.push_back({"demos-" + std::to_string(d), s});
    }
  } else {
    throw InputError("sweep: unknown study '" + study + "' (robots|actions|demos)");
  }

  fs::create_directories(out);
  std::vector<std::pair<std::string, std::vector<double>>> series;
  std::ofstream csv(out + "/sweep.csv", std::ios::binary);
  csv << "series,epoch,loss\n";
  for (Leg& leg : legs) {
    GeneratedTask task = gen_task(leg.spec);
    Corpus corpus;
    corpus.scenario = task.scenario;
    corpus.demos = task.demos;
    for (size_t i = 0; i < task.demos.size(); ++i) {
      corpus.files.push_back("demo_" + std::to_string(i) + ".csv");
    }
    TrainArtifacts art = train_pipeline(corpus, c.cfg);
    for (size_t e = 0; e < art.loss_history.size(); ++e) {
      csv << leg.label << "," << (e + 1) << ","
          << format_double(art.loss_history[e]) << "\n";
    }
    std::cout << leg.label << ": final loss "
              << format_double(art.loss_history.back()) << " ("
              << art.loss_history.size() << " epochs)\n";
    series.emplace_back(leg.label, art.loss_history);
  }
  render_loss_chart(series, true, out + "/sweep.svg");
  std::cout << "sweep outputs in " << out << "\n";
  return 0;
}

int do_render(const std::string& loss_csv, const std::string& trace_csv,
              const std::string& data, const std::string& out) {
  if (!loss_csv.empty()) {
    std::ifstream in(loss_csv);
    if (!in) throw InputError("cannot open " + loss_csv);
    std::vector<double> loss;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      auto comma = line.find(',');
      if (comma != std::string::npos) {
        loss.push_back(parse_double(line.substr(comma + 1), loss_csv));
      }
    }
    render_loss_chart({{"training loss", loss}}, false, out);
    std::cout << "wrote " << out << "\n";
    return 0;
  }
  if (!trace_csv.empty()) {
    if (data.empty()) throw InputError("render: --trace needs --data for the scenario");
    ScenarioSpec spec = load_scenario(data + "/scenario.txt");
    std::ifstream in(trace_csv);
    if (!in) throw InputError("cannot open " + trace_csv);
    std::map<int, Polyline> paths;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream row(line);
      std::string clock, node, x, y, action;
      std::getline(row, clock, ',');
      std::getline(row, node, ',');
      std::getline(row, x, ',');
      std::getline(row, y, ',');
      std::getline(row, action, ',');
      paths[int(parse_long(node, trace_csv))].push_back(
          {parse_double(x, trace_csv), parse_double(y, trace_csv)});
    }
    const double size = 600, margin = 24;
    SvgCanvas svg(size, size);
    auto map_pt = [&](Vec2 p) {
      return Vec2{margin + (p.x - spec.xmin) / (spec.xmax - spec.xmin) * (size - 2 * margin),
                  size - margin -
                      (p.y - spec.ymin) / (spec.ymax - spec.ymin) * (size - 2 * margin)};
    };
    size_t color = 0;
    for (auto& [id, path] : paths) {
      std::vector<Vec2> pts;
      for (Vec2 p : path) pts.push_back(map_pt(p));
      svg.polyline(pts, series_color(color++), 1.5);
    }
    svg.save(out);
    std::cout << "wrote " << out << "\n";
    return 0;
  }
  throw InputError("render: need --loss or --trace");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddace: few-shot multi-robot coordination from demonstrations"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a demonstration corpus");
  std::string gen_preset, gen_family, gen_out = "data";
  int gen_robots = 0, gen_actions = 0, gen_demos = 0;
  double gen_jitter = -1.0;
  std::uint64_t gen_seed = std::uint64_t(-1);
  gen->add_option("--preset", gen_preset, "preset name (task1..task4, relay-nN, screen-aN)");
  gen->add_option("--family", gen_family, "task family (transport|relay|screen|curves)");
  gen->add_option("--robots", gen_robots, "relay team size");
  gen->add_option("--actions", gen_actions, "screen action-space size");
  gen->add_option("--demos", gen_demos, "demonstration count");
  gen->add_option("--jitter", gen_jitter, "position jitter sigma");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train TGN + GP models");
  std::string train_data, train_out = "model";
  CommonFlags train_flags;
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--out", train_out, "model output directory");
  add_train_flags(train, train_flags);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate on the held-out split");
  std::string eval_model, eval_data, eval_out = "eval";
  bool eval_render = false;
  eval->add_option("--model", eval_model, "model directory")->required();
  eval->add_option("--data", eval_data, "corpus directory")->required();
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--render", eval_render, "write per-episode SVGs");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "loss-trend case studies");
  std::string sweep_study, sweep_preset, sweep_out = "sweep";
  int sweep_min = 0, sweep_max = 0;
  CommonFlags sweep_flags;
  sweep->add_option("--study", sweep_study, "robots|actions|demos")->required();
  sweep->add_option("--min", sweep_min, "range start");
  sweep->add_option("--max", sweep_max, "range end");
  sweep->add_option("--preset", sweep_preset, "preset for --study demos");
  sweep->add_option("--out", sweep_out, "output directory");
  add_train_flags(sweep, sweep_flags);

  // render
  auto* render = app.add_subcommand("render", "SVG from existing outputs");
  std::string render_loss, render_trace, render_data, render_out = "out.svg";
  render->add_option("--loss", render_loss, "loss CSV to plot");
  render->add_option("--trace", render_trace, "trace CSV to plot");
  render->add_option("--data", render_data, "corpus dir (for --trace)");
  render->add_option("--out", render_out, "output SVG path");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) {
      return do_gen(gen_preset, gen_family, gen_robots, gen_actions, gen_demos,
                    gen_jitter, gen_seed, gen_out);
    }
    if (train->parsed()) return do_train(train_data, train_out, train_flags);
    if (eval->parsed()) return do_eval(eval_model, eval_data, eval_out, eval_render);
    if (sweep->parsed()) {
      return do_sweep(sweep_study, sweep_min, sweep_max, sweep_preset, sweep_out,
                      sweep_flags);
    }
    if (render->parsed()) {
      return do_render(render_loss, render_trace, render_data, render_out);
    }
    std::cerr << app.help();
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
