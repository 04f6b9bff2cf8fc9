#include "ddace/scenario.hpp"

#include <fstream>
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

}  // namespace

std::string kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::robot: return "robot";
    case NodeKind::goal: return "goal";
    case NodeKind::object: return "object";
  }
  return "robot";
}

NodeKind kind_from_name(const std::string& s) {
  if (s == "robot") return NodeKind::robot;
  if (s == "goal") return NodeKind::goal;
  if (s == "object") return NodeKind::object;
  throw InputError("unknown node kind '" + s + "'");
}

const std::string& ActionVocab::name(int id) const {
  static const std::string idle = "idle";
  if (id == 0) return idle;
  if (!valid_id(id)) throw InputError("action id out of vocabulary");
  return actions[size_t(id - 1)].name;
}

int ScenarioSpec::node_index(int id) const {
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].desc.id == id) return int(i);
  }
  throw InputError("scenario '" + name + "': unknown node id " +
                   std::to_string(id));
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file " + path);
  ScenarioSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    const std::string ctx = path + ":" + std::to_string(lineno);
    auto f = split_csv(val);
    if (key == "name") {
      spec.name = val;
    } else if (key == "bounds") {
      if (f.size() != 4) throw InputError(ctx + ": bounds needs 4 values");
      spec.xmin = parse_double(f[0], ctx);
      spec.ymin = parse_double(f[1], ctx);
      spec.xmax = parse_double(f[2], ctx);
      spec.ymax = parse_double(f[3], ctx);
    } else if (key == "speed") {
      spec.speed = parse_double(val, ctx);
    } else if (key == "dt") {
      spec.dt = parse_double(val, ctx);
    } else if (key == "max_steps") {
      spec.max_steps = int(parse_long(val, ctx));
    } else if (key == "action") {
      // action=<id>,<name>,<motion|stationary>,<duration>
      if (f.size() != 4) throw InputError(ctx + ": action needs 4 fields");
      int id = int(parse_long(f[0], ctx));
      if (id != int(spec.vocab.actions.size()) + 1) {
        throw InputError(ctx + ": action ids must be 1,2,... in order");
      }
      ActionInfo a;
      a.name = f[1];
      if (f[2] == "motion") {
        a.motion = true;
      } else if (f[2] == "stationary") {
        a.motion = false;
      } else {
        throw InputError(ctx + ": action class must be motion|stationary");
      }
      a.duration = parse_double(f[3], ctx);
      spec.vocab.actions.push_back(a);
    } else if (key == "node") {
      // node=<id>,<kind>,<modality>,<x0>,<y0>
      if (f.size() != 5) throw InputError(ctx + ": node needs 5 fields");
      ScenarioNode n;
      n.desc.id = int(parse_long(f[0], ctx));
      n.desc.kind = kind_from_name(f[1]);
      n.desc.modality = f[2];
      n.start = {parse_double(f[3], ctx), parse_double(f[4], ctx)};
      spec.nodes.push_back(n);
    } else if (key == "attach") {
      if (f.size() != 2) throw InputError(ctx + ": attach needs 2 fields");
      spec.attachments.emplace_back(int(parse_long(f[0], ctx)),
                                    int(parse_long(f[1], ctx)));
    } else if (key == "goal") {
      // goal=<node>,@<ref_node>,<tol>  or  goal=<node>,<x>,<y>,<tol>
      GoalCondition g;
      if (f.size() == 3 && !f[1].empty() && f[1][0] == '@') {
        g.node = int(parse_long(f[0], ctx));
        g.ref_node = int(parse_long(f[1].substr(1), ctx));
        g.tol = parse_double(f[2], ctx);
      } else if (f.size() == 4) {
        g.node = int(parse_long(f[0], ctx));
        g.position = {parse_double(f[1], ctx), parse_double(f[2], ctx)};
        g.tol = parse_double(f[3], ctx);
      } else {
        throw InputError(ctx + ": goal needs node,@ref,tol or node,x,y,tol");
      }
      spec.goals.push_back(g);
    } else {
      throw InputError(ctx + ": unknown key '" + key + "'");
    }
  }
  if (spec.xmax <= spec.xmin || spec.ymax <= spec.ymin) {
    throw InputError(path + ": empty workspace bounds");
  }
  return spec;
}

std::string serialize_scenario(const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "# ddace scenario\n";
  out << "name=" << spec.name << "\n";
  out << "bounds=" << format_double(spec.xmin) << "," << format_double(spec.ymin)
      << "," << format_double(spec.xmax) << "," << format_double(spec.ymax)
      << "\n";
  out << "speed=" << format_double(spec.speed) << "\n";
  out << "dt=" << format_double(spec.dt) << "\n";
  out << "max_steps=" << spec.max_steps << "\n";
  for (size_t i = 0; i < spec.vocab.actions.size(); ++i) {
    const ActionInfo& a = spec.vocab.actions[i];
    out << "action=" << (i + 1) << "," << a.name << ","
        << (a.motion ? "motion" : "stationary") << ","
        << format_double(a.duration) << "\n";
  }
  for (const ScenarioNode& n : spec.nodes) {
    out << "node=" << n.desc.id << "," << kind_name(n.desc.kind) << ","
        << n.desc.modality << "," << format_double(n.start.x) << ","
        << format_double(n.start.y) << "\n";
  }
  for (auto [obj, carrier] : spec.attachments) {
    out << "attach=" << obj << "," << carrier << "\n";
  }
  for (const GoalCondition& g : spec.goals) {
    if (g.ref_node >= 0) {
      out << "goal=" << g.node << ",@" << g.ref_node << ","
          << format_double(g.tol) << "\n";
    } else {
      out << "goal=" << g.node << "," << format_double(g.position.x) << ","
          << format_double(g.position.y) << "," << format_double(g.tol)
          << "\n";
    }
  }
  return out.str();
}

void save_scenario(const ScenarioSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write scenario file " + path);
  out << serialize_scenario(spec);
}

}  // namespace ddace
