// carlab: command-line front end for mining, validation, MDP fitting,
// simulation and inverse analysis. Exit codes: 0 success, 1 input or
// configuration error, 2 negative validation verdict.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "carlab/carlab.hpp"

namespace {

using namespace carlab;
using nlohmann::json;

constexpr int kInputError = 1;
constexpr int kVerdictFailed = 2;

// Tuning knobs shared by several subcommands; settable from --config.
struct Tuning {
  std::size_t budget = 0;
  std::string quality = "coverage";
  double gamma = 0.9;
  double tol = 1e-9;
  double smoothing = 0.0;
  std::string reward_shape = "level-difference";
  std::size_t max_steps = 20;
  double counter_fraction = 0.5;
  double threshold = 0.0;
  int neighborhood_depth = 0;
  std::size_t depth = 3;
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

MiningConfig mining_config(const Tuning& t) {
  MiningConfig c;
  c.violation_budget = t.budget;
  auto q = parse_quality(t.quality);
  if (!q) throw Error("unknown quality criterion '" + t.quality + "'");
  c.quality = *q;
  return c;
}

MdpConfig mdp_config(const Tuning& t) {
  MdpConfig c;
  if (!(t.gamma >= 0.0 && t.gamma < 1.0)) throw Error("gamma must lie in [0,1)");
  c.gamma = t.gamma;
  c.tol = t.tol;
  c.smoothing = t.smoothing;
  auto shape = parse_reward_shape(t.reward_shape);
  if (!shape) throw Error("unknown reward shape '" + t.reward_shape + "'");
  c.reward_shape = *shape;
  return c;
}

FeatureMode parse_mode(const std::string& s) {
  if (s == "real") return FeatureMode::real;
  if (s == "boolean") return FeatureMode::boolean;
  throw Error("unknown feature mode '" + s + "'");
}

ClassTransitionGraph load_graph(const std::string& transitions, const std::string& traces) {
  if (transitions.empty() == traces.empty()) throw Error("give exactly one of --transitions and --traces");
  if (!transitions.empty()) return extract_relation(load_transition_records(transitions));
  return extract_relation(load_trace_log(traces));
}

// ------------------------------------------------------------------ mine

struct MineArgs {
  std::string data, mode = "real", diagram, out;
};

int run_mine(const MineArgs& a, const Tuning& t) {
  auto set = load_learning_set(a.data, parse_mode(a.mode));
  if (!a.diagram.empty()) {
    // Normal class against the counter-class of distant levels.
    const auto xi = level_diagram_from_json(read_json(a.diagram));
    const auto counter = counter_class(xi, t.counter_fraction);
    set = two_class_view(set, {kNormal}, counter);
  }
  const auto lds = mine_lds(set, mining_config(t));
  for (const auto& w : lds.warnings) std::cerr << "warning: class " << w.class_index.index() << ": " << w.message << "\n";
  write_json(a.out, to_json(lds));
  return 0;
}

// -------------------------------------------------------------- classify

struct ClassifyArgs {
  std::string lds, vectors, out;
};

int run_classify(const ClassifyArgs& a) {
  const auto lds = ldset_from_json(read_json(a.lds));
  const auto rows = load_feature_table(a.vectors);
  std::ostringstream os;
  os << "id,class,reason";
  for (int c = 0; c < lds.class_count(); ++c) os << ",gamma_" << c;
  os << "\n";
  for (const auto& r : rows) {
    const auto result = classify(r.features, lds);
    os << r.object_id << "," << (result.label ? std::to_string(result.label->index()) : "") << ","
       << to_string(result.reason);
    for (double g : result.scores) os << "," << csv::format_double(g);
    os << "\n";
  }
  write_text(a.out, os.str());
  return 0;
}

// ------------------------------------------------ validate-poset, diagram

struct GraphArgs {
  std::string transitions, traces, out;
};

int run_validate(const GraphArgs& a) {
  const auto report = validate_to_normal(load_graph(a.transitions, a.traces));
  write_json(a.out, to_json(report));
  return report.verdict == Verdict::fail ? kVerdictFailed : 0;
}

int run_diagram(const GraphArgs& a, const Tuning& t) {
  const auto g = load_graph(a.transitions, a.traces);
  const auto xi = build_level_diagram(g);
  auto j = to_json(xi);
  if (t.neighborhood_depth > 0) {
    json layers = json::array();
    for (const auto& layer : neighborhood(g, t.neighborhood_depth, t.threshold)) layers.push_back(labels_to_json(layer));
    j["neighborhood"] = {{"threshold", t.threshold}, {"layers", layers}};
  }
  if (xi.complete && xi.height >= 1) j["counter_class"] = labels_to_json(counter_class(xi, t.counter_fraction));
  write_json(a.out, j);
  return 0;
}

// ------------------------------------------------- fit-mdp, eval-policy

struct FitArgs {
  std::string traces, diagram, out;
};

int run_fit(const FitArgs& a, const Tuning& t) {
  const auto traces = load_trace_log(a.traces);
  const auto xi = a.diagram.empty() ? build_level_diagram(extract_relation(traces))
                                    : level_diagram_from_json(read_json(a.diagram));
  write_json(a.out, to_json(estimate_mdp(traces, xi, mdp_config(t))));
  return 0;
}

struct EvalArgs {
  std::string mdp, traces, out;
};

int run_eval(const EvalArgs& a, const Tuning& t) {
  const auto mdp = mdp_from_json(read_json(a.mdp));
  const auto observed = extract_observed_policy(load_trace_log(a.traces));
  auto j = to_json(compare_policies(observed, mdp, mdp_config(t).tol));
  j["observed_policy"] = to_json(observed);
  write_json(a.out, j);
  return 0;
}

// -------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string population, lds, train, classifier = "lds", actions, out, trace_out, relabeled_out;
};

int run_simulate(const SimulateArgs& a, const Tuning& t) {
  const auto population = load_feature_table(a.population);
  const auto specs = action_specs_from_json(read_json(a.actions));

  CarRunReport report;
  std::function<std::optional<ClassLabel>(const FeatureVector&)> classify_fn;
  int deviated = 0;
  if (a.classifier == "lds") {
    if (a.lds.empty()) throw Error("--classifier lds needs --lds");
    auto lds = std::make_shared<LDSet>(ldset_from_json(read_json(a.lds)));
    deviated = lds->class_count() - 1;
    classify_fn = [lds](const FeatureVector& x) { return classify(x, *lds).label; };
  } else if (a.classifier == "rdnf") {
    if (a.train.empty()) throw Error("--classifier rdnf needs --train");
    const auto set = load_learning_set(a.train, FeatureMode::boolean);
    auto clf = std::make_shared<RdnfClassifier>(RdnfClassifier::from(set));
    deviated = set.deviated_count();
    classify_fn = [clf](const FeatureVector& x) { return (*clf)(to_vertex(x)); };
  } else {
    throw Error("unknown classifier '" + a.classifier + "'");
  }
  const auto table = register_actions(specs, deviated);
  report = run_car(population, classify_fn, table, t.max_steps);

  const std::size_t n = population.empty() ? 0 : population.front().features.size();
  if (!a.trace_out.empty()) {
    std::ostringstream os;
    write_trace_log(os, traces_of(report), n);
    write_text(a.trace_out, os.str());
  }
  if (!a.relabeled_out.empty()) {
    // Final states with their final class, ready for re-mining.
    std::vector<LearningSample> samples;
    for (const auto& run : report.objects)
      if (auto c = classify_fn(run.final_state)) samples.push_back({run.object_id, run.final_state, *c});
    std::ostringstream os;
    write_learning_set(os, LearningSet(std::move(samples), n, FeatureMode::real));
    write_text(a.relabeled_out, os.str());
  }
  write_json(a.out, to_json(report));
  return 0;
}

// --------------------------------------------------------------- inverse

struct InverseArgs {
  std::string data, actions, out;
};

int run_inverse(const InverseArgs& a, const Tuning& t) {
  const auto set = load_learning_set(a.data, FeatureMode::boolean);
  const int n = static_cast<int>(set.feature_count());
  const auto clf = RdnfClassifier::from(set);
  const auto table = register_actions(action_specs_from_json(read_json(a.actions)), set.deviated_count());
  const auto map = build_step_map(n, table.boolean_actions(), clf);
  const auto normal = clf.partition(kNormal);
  const auto forall = backward_reach(normal.forall_region, map, t.depth);
  const auto exists = backward_reach(normal.exists_region, map, t.depth);

  json rdnf = json::object();
  for (std::size_t c = 0; c < clf.per_class().size(); ++c) rdnf[std::to_string(c)] = subcubes_to_json(clf.per_class()[c]);
  json depths = json::array();
  for (std::size_t d = 0; d <= t.depth; ++d) {
    const auto& all = forall.within[d];
    const auto some = exists.within[d] - all;
    depths.push_back({{"depth", d},
                      {"forall", region_to_json(all)},
                      {"exists", region_to_json(some)},
                      {"never", region_to_json((all | some).complement())}});
  }
  write_json(a.out, {{"dims", n},
                     {"rdnf", rdnf},
                     {"normal", {{"forall", region_to_json(normal.forall_region)},
                                 {"exists", region_to_json(normal.exists_region)}}},
                     {"indeterminate", map.indeterminate},
                     {"stabilized_at", forall.stabilized_at ? json(*forall.stabilized_at) : json(nullptr)},
                     {"depths", depths}});
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int run_report(const ReportArgs& a) {
  json bundle = json::object();
  for (const auto& path : a.inputs) {
    const auto name = std::filesystem::path(path).filename().string();
    if (bundle.contains(name)) throw Error("duplicate input name '" + name + "'");
    if (std::filesystem::path(path).extension() == ".json") {
      bundle[name] = read_json(path);
    } else {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error("cannot open '" + path + "'");
      json lines = json::array();
      for (std::string line; std::getline(in, line);) lines.push_back(line);
      bundle[name] = lines;
    }
  }
  write_json(a.out, {{"reports", bundle}});
  return 0;
}

// -------------------------------------------------------------- generate

struct GenerateArgs {
  std::string kind, out_dir = ".";
  int classes = 3;
  int size = 8;
  int dims = 4;
};

// Portable draws: distributions in <random> are implementation-defined.
struct Rng {
  std::mt19937 engine;
  std::uint32_t below(std::uint32_t k) { return static_cast<std::uint32_t>(engine() % k); }
  double unit() { return static_cast<double>(engine()) / 4294967296.0; }
};

Rng seeded_rng() {
  std::uint32_t seed = 1;
  if (const char* env = std::getenv("CARLAB_SEED")) {
    try {
      seed = static_cast<std::uint32_t>(std::stoul(env));
    } catch (const std::exception&) {
      throw Error("CARLAB_SEED must be a nonnegative integer");
    }
  }
  return Rng{std::mt19937(seed)};
}

std::string in_dir(const GenerateArgs& a, const std::string& file) {
  return (std::filesystem::path(a.out_dir) / file).string();
}

int run_generate(const GenerateArgs& a) {
  if (a.classes < 2) throw Error("--classes must be at least 2");
  if (a.size < 1) throw Error("--size must be positive");
  std::filesystem::create_directories(a.out_dir);
  auto rng = seeded_rng();
  const int deviated = a.classes - 1;
  std::vector<int> parent(static_cast<std::size_t>(a.classes), 0);
  for (int i = 1; i <= deviated; ++i) parent[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint32_t>(i)));

  if (a.kind == "band") {
    // Class i owns x1 in [10 i, 10 i + 5); a_i shifts a point onto its parent band.
    std::vector<LearningSample> samples;
    for (int i = 0; i <= deviated; ++i)
      for (int k = 0; k < a.size; ++k)
        samples.push_back({"c" + std::to_string(i) + "_" + std::to_string(k),
                           {10.0 * i + rng.below(40) / 8.0, static_cast<double>(rng.below(8))},
                           ClassLabel(i)});
    std::ostringstream data;
    write_learning_set(data, LearningSet(samples, 2, FeatureMode::real));
    write_text(in_dir(a, "data.csv"), data.str());
    json actions = json::array();
    for (int i = 1; i <= deviated; ++i)
      actions.push_back({{"class", i}, {"kind", "affine"}, {"slope", {1.0, 1.0}},
                         {"offset", {10.0 * (parent[static_cast<std::size_t>(i)] - i), 0.0}}});
    write_json(in_dir(a, "actions.json"), actions);
    return 0;
  }
  if (a.kind == "boolean") {
    check_dims(a.dims);
    const Vertex size = Vertex{1} << a.dims;
    if (size < static_cast<Vertex>(a.classes)) throw Error("too many classes for the cube");
    std::vector<LearningSample> samples;
    for (Vertex v = 0; v < size; ++v) {
      const bool forced = v < static_cast<Vertex>(a.classes);
      if (!forced && rng.unit() >= 0.5) continue;
      const int label = forced ? static_cast<int>(v) : static_cast<int>(rng.below(static_cast<std::uint32_t>(a.classes)));
      samples.push_back({"v" + vertex_string(v, a.dims), to_features(v, a.dims), ClassLabel(label)});
    }
    std::ostringstream data;
    write_learning_set(data, LearningSet(samples, static_cast<std::size_t>(a.dims), FeatureMode::boolean));
    write_text(in_dir(a, "data.csv"), data.str());
    json actions = json::array();
    for (int i = 1; i <= deviated; ++i) {
      json tab = json::object();
      for (Vertex v = 0; v < size; ++v) tab[vertex_string(v, a.dims)] = vertex_string(rng.below(size), a.dims);
      actions.push_back({{"class", i}, {"kind", "table"}, {"table", tab}});
    }
    write_json(in_dir(a, "actions.json"), actions);
    return 0;
  }
  if (a.kind == "traces") {
    // Two treatments per deviated class: "std" reaches the parent with
    // probability 0.8, "alt" with 0.5; otherwise the class is unchanged.
    std::vector<Trace> traces;
    for (int o = 0; o < a.size; ++o) {
      Trace tr;
      tr.object_id = "obj" + std::to_string(1000 + o);
      int c = 1 + static_cast<int>(rng.below(static_cast<std::uint32_t>(deviated)));
      double time = 0.0;
      for (std::size_t k = 0; k < 64; ++k) {
        TraceEvent e{tr.object_id, k, time, {}, ClassLabel(c), std::nullopt};
        time += 1.0 + rng.below(4);
        if (c != 0) {
          const bool std_action = rng.unit() < 0.7;
          e.applied_action = std_action ? "std" : "alt";
          c = rng.unit() < (std_action ? 0.8 : 0.5) ? parent[static_cast<std::size_t>(c)] : c;
        }
        const bool done = e.assigned_class.is_normal();
        tr.events.push_back(std::move(e));
        if (done) break;
      }
      traces.push_back(std::move(tr));
    }
    std::ostringstream log;
    write_trace_log(log, traces, 0);
    write_text(in_dir(a, "traces.csv"), log.str());
    std::ostringstream rec;
    write_transition_records(rec, extract_relation(traces).edges());
    write_text(in_dir(a, "transitions.csv"), rec.str());
    return 0;
  }
  throw Error("unknown generator kind '" + a.kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carlab: classification-action recursion toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");

  Tuning t;
  app.add_option("--budget", t.budget, "Counter-class points an LD may cover")->capture_default_str();
  app.add_option("--quality", t.quality, "LD quality criterion: coverage | coverage-net")->capture_default_str();
  app.add_option("--gamma", t.gamma, "MDP discount in [0,1)")->capture_default_str();
  app.add_option("--tol", t.tol, "Solver tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--smoothing", t.smoothing, "Additive smoothing of transition counts")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--reward-shape", t.reward_shape, "level-difference | negative-distance")->capture_default_str();
  app.add_option("--max-steps", t.max_steps, "Actions applied per object at most")->capture_default_str();
  app.add_option("--counter-fraction", t.counter_fraction, "Counter-class level threshold as a fraction of the height")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--threshold", t.threshold, "Neighborhood link-share threshold in [0,1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--neighborhood-depth", t.neighborhood_depth, "Neighborhood layers to report (0 = none)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--depth", t.depth, "Backward-reach depth")->capture_default_str();

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine logical dependencies from a learning set");
  mine_cmd->add_option("--data", mine.data, "Learning-set CSV (id,f1..fn,class)")->required();
  mine_cmd->add_option("--mode", mine.mode, "real | boolean")->capture_default_str();
  mine_cmd->add_option("--diagram", mine.diagram, "Level diagram JSON; mine normal vs the counter-class");
  mine_cmd->add_option("--out", mine.out, "Output LD-set JSON (default stdout)");

  ClassifyArgs cls;
  auto* cls_cmd = app.add_subcommand("classify", "Classify vectors by LD voting");
  cls_cmd->add_option("--lds", cls.lds, "LD-set JSON")->required();
  cls_cmd->add_option("--vectors", cls.vectors, "Vector CSV (id,f1..fn[,class])")->required();
  cls_cmd->add_option("--out", cls.out, "Output CSV (default stdout)");

  GraphArgs val;
  auto* val_cmd = app.add_subcommand("validate-poset", "Check the class transition relation against the poset axioms");
  val_cmd->add_option("--transitions", val.transitions, "Transition-record CSV");
  val_cmd->add_option("--traces", val.traces, "Trace-log CSV");
  val_cmd->add_option("--out", val.out, "Output report JSON (default stdout)");

  GraphArgs dia;
  auto* dia_cmd = app.add_subcommand("diagram", "Build the level diagram of the transition relation");
  dia_cmd->add_option("--transitions", dia.transitions, "Transition-record CSV");
  dia_cmd->add_option("--traces", dia.traces, "Trace-log CSV");
  dia_cmd->add_option("--out", dia.out, "Output diagram JSON (default stdout)");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-mdp", "Estimate an MDP from traces");
  fit_cmd->add_option("--traces", fit.traces, "Trace-log CSV")->required();
  fit_cmd->add_option("--diagram", fit.diagram, "Level diagram JSON (default: built from the traces)");
  fit_cmd->add_option("--out", fit.out, "Output MDP JSON (default stdout)");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval-policy", "Compare the observed policy with the optimal one");
  ev_cmd->add_option("--mdp", ev.mdp, "MDP JSON")->required();
  ev_cmd->add_option("--traces", ev.traces, "Trace-log CSV")->required();
  ev_cmd->add_option("--out", ev.out, "Output comparison JSON (default stdout)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run classify-act loops over a population");
  sim_cmd->add_option("--population", sim.population, "Vector CSV (id,f1..fn[,class])")->required();
  sim_cmd->add_option("--actions", sim.actions, "Action JSON")->required();
  sim_cmd->add_option("--classifier", sim.classifier, "lds | rdnf")->capture_default_str();
  sim_cmd->add_option("--lds", sim.lds, "LD-set JSON for the lds classifier");
  sim_cmd->add_option("--train", sim.train, "Boolean learning set for the rdnf classifier");
  sim_cmd->add_option("--trace-out", sim.trace_out, "Write the run traces as a trace-log CSV");
  sim_cmd->add_option("--relabeled-out", sim.relabeled_out, "Write final states with their classes as a learning set");
  sim_cmd->add_option("--out", sim.out, "Output run report JSON (default stdout)");

  InverseArgs inv;
  auto* inv_cmd = app.add_subcommand("inverse", "Backward reachability of the normal class on the Boolean cube");
  inv_cmd->add_option("--data", inv.data, "Boolean learning-set CSV")->required();
  inv_cmd->add_option("--actions", inv.actions, "Action JSON (rule or table actions)")->required();
  inv_cmd->add_option("--out", inv.out, "Output region JSON (default stdout)");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Bundle output files into one JSON document");
  rep_cmd->add_option("inputs", rep.inputs, "Files to bundle")->required();
  rep_cmd->add_option("--out", rep.out, "Output JSON (default stdout)");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a random sample dataset (seeded by CARLAB_SEED)");
  gen_cmd->add_option("--kind", gen.kind, "band | boolean | traces")->required();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Number of classes including the normal one")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Points per class or number of traced objects")->capture_default_str();
  gen_cmd->add_option("--dims", gen.dims, "Cube dimension for the boolean kind")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*mine_cmd) return run_mine(mine, t);
    if (*cls_cmd) return run_classify(cls);
    if (*val_cmd) return run_validate(val);
    if (*dia_cmd) return run_diagram(dia, t);
    if (*fit_cmd) return run_fit(fit, t);
    if (*ev_cmd) return run_eval(ev, t);
    if (*sim_cmd) return run_simulate(sim, t);
    if (*inv_cmd) return run_inverse(inv, t);
    if (*rep_cmd) return run_report(rep);
    if (*gen_cmd) return run_generate(gen);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
