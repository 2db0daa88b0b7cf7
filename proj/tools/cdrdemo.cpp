#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdrdemo/classify.hpp"
#include "cdrdemo/diffusion.hpp"
#include "cdrdemo/eval.hpp"
#include "cdrdemo/features.hpp"
#include "cdrdemo/graph.hpp"
#include "cdrdemo/io.hpp"
#include "cdrdemo/labels.hpp"
#include "cdrdemo/pipeline.hpp"
#include "cdrdemo/pps.hpp"
#include "cdrdemo/records.hpp"
#include "cdrdemo/rng.hpp"
#include "cdrdemo/synth.hpp"

using namespace cdrdemo;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out_dir = ".";

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

template <typename Fn>
void write_output(const fs::path& path, Fn&& fn) {
  std::ostringstream out;
  fn(out);
  io::write_file(path, out.str());
  std::cerr << "wrote " << path.string() << '\n';
}

SocialGraph load_graph(const std::string& path) {
  auto in = open_input(path);
  return read_graph_snapshot(in);
}

LabelStore load_labels(const std::string& path) {
  auto in = open_input(path);
  return read_labels_csv(in);
}

std::vector<CdrRecord> load_calls(const std::string& path, TimeZone tz,
                                  std::vector<RowError>* errors = nullptr) {
  auto in = open_input(path);
  return read_cdr_csv(in, tz, errors);
}

std::vector<SmsRecord> load_sms(const std::string& path, TimeZone tz,
                                std::vector<RowError>* errors = nullptr) {
  if (path.empty()) return {};
  auto in = open_input(path);
  return read_sms_csv(in, tz, errors);
}

Penalty parse_penalty(const std::string& s) {
  if (s == "l1" || s == "L1") return Penalty::kL1;
  if (s == "l2" || s == "L2") return Penalty::kL2;
  throw UsageError("penalty must be l1 or l2");
}

std::vector<Category> argmax_by_node(const SocialGraph& g, const PredictionSet& p) {
  std::vector<Category> out(g.node_count(), kNoCategory);
  for (std::size_t i = 0; i < p.user_ids.size(); ++i) {
    if (auto x = g.find(p.user_ids[i])) out[*x] = p.argmax[i];
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demographic inference on mobile phone contact graphs"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on this)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic population and CDR/SMS streams");
  std::string synth_config;
  std::optional<std::size_t> synth_population;
  bool print_config = false;
  synth->add_option("--config", synth_config, "TOML config (defaults when omitted)");
  synth->add_option("--population", synth_population, "Override the population size");
  synth->add_flag("--print-config", print_config, "Print the effective config and exit");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build and prune the contact graph from CSV records");
  std::string in_calls, in_sms, in_labels;
  int utc_offset = 0;
  std::size_t max_degree = kDefaultMaxDegree;
  bool strict = false;
  ingest->add_option("--calls", in_calls, "CDR CSV")->required();
  ingest->add_option("--sms", in_sms, "SMS CSV");
  ingest->add_option("--labels", in_labels, "Labels CSV")->required();
  ingest->add_option("--utc-offset-minutes", utc_offset, "Zone of timestamps without offset");
  ingest->add_option("--max-degree", max_degree, "Drop nodes above this degree");
  ingest->add_flag("--strict", strict, "Fail on the first malformed row");

  // features
  auto* features = app.add_subcommand("features", "Extract and preprocess per-user features");
  std::string f_graph, window_begin, window_end;
  int daylight_begin = 7, daylight_end = 19;
  std::size_t f_pca = 10;
  features->add_option("--calls", in_calls, "CDR CSV")->required();
  features->add_option("--sms", in_sms, "SMS CSV");
  features->add_option("--graph", f_graph, "Restrict rows to the nodes of this graph snapshot");
  features->add_option("--utc-offset-minutes", utc_offset, "Local time zone offset");
  features->add_option("--window-begin", window_begin, "First timestamp to include");
  features->add_option("--window-end", window_end, "First timestamp to exclude");
  features->add_option("--daylight-begin", daylight_begin, "Weekday daylight start hour");
  features->add_option("--daylight-end", daylight_end, "Weekday daylight end hour");
  features->add_option("--pca-components", f_pca, "Principal components to report");

  // pca
  auto* pca_cmd = app.add_subcommand("pca", "Principal components of a feature table");
  std::string p_features, p_columns;
  std::size_t p_k = 10;
  pca_cmd->add_option("--features", p_features, "Feature CSV")->required();
  pca_cmd->add_option("--k", p_k, "Number of components");
  pca_cmd->add_option("--columns", p_columns, "Comma-separated column names (default: all)");

  // stats
  auto* stats = app.add_subcommand("stats", "Gender, homophily, Tukey and bootstrap statistics");
  std::string s_graph, s_features;
  StatsOptions s_opts;
  stats->add_option("--graph", s_graph, "Graph snapshot")->required();
  stats->add_option("--labels", in_labels, "Labels CSV")->required();
  stats->add_option("--calls", in_calls, "CDR CSV")->required();
  stats->add_option("--features", s_features, "Raw feature CSV")->required();
  stats->add_option("--utc-offset-minutes", utc_offset, "Zone of timestamps without offset");
  stats->add_option("--resamples", s_opts.bootstrap_resamples, "Bootstrap resamples");
  stats->add_option("--tukey-variable", s_opts.tukey_variable, "Variable compared across age groups");
  stats->add_option("--bootstrap-variable", s_opts.bootstrap_variable,
                    "Variable bootstrapped per gender");

  // train
  auto* train = app.add_subcommand("train", "Grid-searched logistic classifier on the seeds");
  std::string t_features, t_graph, t_target = "age";
  double t_split = 0.8;
  GridSpec t_grid;
  std::vector<std::string> t_penalties = {"l1", "l2"};
  train->add_option("--features", t_features, "Preprocessed feature CSV")->required();
  train->add_option("--graph", t_graph, "Graph snapshot")->required();
  train->add_option("--labels", in_labels, "Labels CSV")->required();
  train->add_option("--target", t_target, "age or gender")->check(CLI::IsMember({"age", "gender"}));
  train->add_option("--split", t_split, "Training share of the seeds");
  train->add_option("--c", t_grid.c_values, "Loss weights to try");
  train->add_option("--k", t_grid.k_values, "Feature counts to try (0 = all)");
  train->add_option("--penalty", t_penalties, "Penalties to try (l1, l2)");

  // diffuse
  auto* diffuse = app.add_subcommand("diffuse", "Reaction-diffusion label propagation");
  std::string d_graph, d_ml;
  DiffusionConfig d_cfg;
  diffuse->add_option("--graph", d_graph, "Graph snapshot")->required();
  diffuse->add_option("--labels", in_labels, "Labels CSV")->required();
  diffuse->add_option("--ml-probs", d_ml, "Initialize non-seeds from these probabilities");
  diffuse->add_option("--lambda", d_cfg.lambda, "Diffusion weight")->check(CLI::Range(0.0, 1.0));
  diffuse->add_option("--iterations", d_cfg.max_iterations, "Maximum iterations");
  diffuse->add_option("--tol", d_cfg.convergence_tol, "Convergence tolerance (infinity norm)");

  // pps
  auto* pps = app.add_subcommand("pps", "Population Pyramid Scaling");
  std::string q_probs, q_pyramid, q_out, q_graph;
  double q = 1.0;
  pps->add_option("--probs", q_probs, "Probability CSV (user_id,p_0..,argmax)")->required();
  pps->add_option("--q", q, "Fraction of users to label");
  pps->add_option("--pyramid", q_pyramid, "Target distribution CSV (category,fraction)");
  pps->add_option("--out", q_out, "Assignment CSV (default <out-dir>/assignments.csv)");
  pps->add_option("--labels", in_labels, "Exclude the seeds of this labels file");
  pps->add_option("--graph", q_graph, "Graph snapshot (with --labels)");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Stratified accuracy report");
  std::string e_graph, e_state, e_assign;
  std::vector<std::uint32_t> e_buckets = kDefaultDegreeBuckets;
  evaluate_cmd->add_option("--graph", e_graph, "Graph snapshot")->required();
  evaluate_cmd->add_option("--labels", in_labels, "Labels CSV")->required();
  auto* e_state_opt = evaluate_cmd->add_option("--state", e_state, "Probability CSV (argmax is used)");
  auto* e_assign_opt = evaluate_cmd->add_option("--assignments", e_assign, "PPS assignment CSV");
  e_state_opt->excludes(e_assign_opt);
  evaluate_cmd->add_option("--degree-buckets", e_buckets, "Degree bucket upper bounds");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the configured stages end to end");
  std::string pl_config;
  pipeline->add_option("--config", pl_config, "Pipeline JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const TimeZone tz{utc_offset};
    if (synth->parsed()) {
      SynthConfig cfg = synth_config.empty() ? default_synth_config() : read_synth_config(synth_config);
      if (synth_population) cfg.population = *synth_population;
      if (g.seed) cfg.rng_seed = *g.seed;
      cfg.threads = g.threads;
      cfg.validate();
      if (print_config) {
        std::cout << format_synth_config(cfg);
        return 0;
      }
      const SynthData data = synthesize(cfg);
      write_synth_data(g.out_dir, data, cfg);
      io::write_file(g.out("synth_config.toml"), format_synth_config(cfg));
      std::cerr << "synthesized " << data.labels.size() << " users, " << data.graph.edge_count()
                << " edges, " << data.events.calls.size() << " calls, "
                << data.events.sms.size() << " sms\n";
    } else if (ingest->parsed()) {
      std::vector<RowError> call_errors, sms_errors;
      const auto calls = load_calls(in_calls, tz, strict ? nullptr : &call_errors);
      const auto sms = load_sms(in_sms, tz, strict ? nullptr : &sms_errors);
      const LabelStore labels = load_labels(in_labels);
      const auto art = build_graph_artifacts(calls, sms, labels, max_degree);
      write_graph_artifacts(g.out_dir, art, labels);
      write_output(g.out("ingest_errors.csv"), [&](std::ostream& o) {
        o << "file,line,message\n";
        for (const auto& e : call_errors) o << "calls," << e.line << ',' << e.message << '\n';
        for (const auto& e : sms_errors) o << "sms," << e.line << ',' << e.message << '\n';
      });
      for (const auto& w : art.prune.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "graph: " << art.prune.graph.node_count() << " nodes, "
                << art.prune.graph.edge_count() << " edges (" << art.prune.removed_by_degree
                << " removed by degree, " << art.prune.removed_seedless << " seedless); "
                << call_errors.size() + sms_errors.size() << " malformed rows skipped\n";
    } else if (features->parsed()) {
      ExtractOptions opts;
      opts.tz = tz;
      opts.threads = g.threads;
      opts.day_split = {daylight_begin, daylight_end};
      if (!window_begin.empty()) opts.window.begin = parse_timestamp(window_begin, tz);
      if (!window_end.empty()) opts.window.end = parse_timestamp(window_end, tz);
      std::optional<SocialGraph> graph;
      if (!f_graph.empty()) graph = load_graph(f_graph);
      write_feature_outputs(g.out_dir, load_calls(in_calls, tz), load_sms(in_sms, tz),
                            graph ? &*graph : nullptr, opts, f_pca);
    } else if (pca_cmd->parsed()) {
      auto in = open_input(p_features);
      const FeatureMatrix m = read_feature_csv(in, true);
      std::vector<std::size_t> cols;
      if (p_columns.empty()) {
        for (std::size_t c = 0; c < m.cols(); ++c) cols.push_back(c);
      } else {
        for (auto name : io::split_fields(p_columns)) {
          const auto c = m.column_index(io::trim(name));
          if (!c) throw UsageError("unknown column '" + std::string(name) + "'");
          cols.push_back(*c);
        }
      }
      const auto r = pca(m, cols, std::min(p_k, cols.size()));
      write_output(g.out("pca.csv"), [&](std::ostream& o) { write_pca_csv(o, r); });
    } else if (stats->parsed()) {
      s_opts.seed = derive_seed(g.seed_or(1), "stats");
      auto fin = open_input(s_features);
      write_stats_outputs(g.out_dir, load_graph(s_graph), load_labels(in_labels),
                          load_calls(in_calls, tz), read_feature_csv(fin, false), s_opts);
    } else if (train->parsed()) {
      t_grid.penalties.clear();
      for (const auto& p : t_penalties) t_grid.penalties.push_back(parse_penalty(p));
      auto fin = open_input(t_features);
      const FeatureMatrix m = read_feature_csv(fin, true);
      const SocialGraph graph = load_graph(t_graph);
      const LabelStore labels = load_labels(in_labels);
      const std::uint64_t seed = derive_seed(g.seed_or(1), "classify");
      if (t_target == "age") {
        const auto r = train_age_model(m, graph, labels, t_grid.expand(), t_split, seed, g.threads);
        write_output(g.out("model.json"), [&](std::ostream& o) { write_model_json(o, r.grid.model); });
        write_output(g.out("grid.csv"), [&](std::ostream& o) { write_grid_csv(o, r.grid); });
        write_output(g.out("ml_probs.csv"),
                     [&](std::ostream& o) { write_prediction_csv(o, r.probabilities); });
        std::cerr << "best validation accuracy " << r.grid.best_accuracy << '\n';
      } else {
        const auto r = train_gender_model(m, graph, labels, t_grid.expand(), t_split,
                                          derive_seed(seed, "gender"), g.threads);
        const FeatureMatrix aligned = align_to_graph(m, graph);
        write_output(g.out("gender_model.json"), [&](std::ostream& o) { write_model_json(o, r.model); });
        write_output(g.out("gender_grid.csv"), [&](std::ostream& o) { write_grid_csv(o, r); });
        write_output(g.out("gender_probs.csv"),
                     [&](std::ostream& o) { write_prediction_csv(o, predict(r.model, aligned)); });
        std::cerr << "best validation accuracy " << r.best_accuracy << '\n';
      }
    } else if (diffuse->parsed()) {
      const SocialGraph graph = load_graph(d_graph);
      const LabelStore labels = load_labels(in_labels);
      std::optional<PredictionSet> ml;
      if (!d_ml.empty()) {
        auto in = open_input(d_ml);
        ml = read_prediction_csv(in);
      }
      d_cfg.threads = g.threads;
      const auto init =
          init_state(graph, labels, ml ? InitMode::kMl : InitMode::kUniform, ml ? &*ml : nullptr);
      const auto val = validation_targets(graph, labels);
      const auto r = run(graph, seed_categories(graph, labels), init, d_cfg, val);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      write_output(g.out("state.csv"), [&](std::ostream& o) { write_state_csv(o, graph, r.state); });
      write_output(g.out("trace.csv"), [&](std::ostream& o) { write_trace_csv(o, r.trace); });
    } else if (pps->parsed()) {
      auto in = open_input(q_probs);
      PredictionSet probs = read_prediction_csv(in);
      if (!in_labels.empty()) {
        if (q_graph.empty()) throw UsageError("--labels needs --graph");
        probs = non_seed_rows(probs, load_graph(q_graph), load_labels(in_labels));
      }
      std::vector<double> pyramid = kDefaultAgePyramid;
      if (!q_pyramid.empty()) {
        auto pin = open_input(q_pyramid);
        pyramid = read_pyramid_csv(pin);
      }
      const auto a = pps_assign(probs, compute_quotas(probs.user_ids.size(), q, pyramid));
      for (std::size_t k = 0; k < a.shortfall.size(); ++k) {
        if (a.shortfall[k] > 0) {
          std::cerr << "warning: category " << k << " short by " << a.shortfall[k] << '\n';
        }
      }
      const fs::path out = q_out.empty() ? g.out("assignments.csv") : fs::path(q_out);
      write_output(out, [&](std::ostream& o) { write_assignment_csv(o, a); });
    } else if (evaluate_cmd->parsed()) {
      if (e_state.empty() && e_assign.empty()) throw UsageError("give --state or --assignments");
      const SocialGraph graph = load_graph(e_graph);
      const LabelStore labels = load_labels(in_labels);
      std::vector<Category> pred;
      if (!e_state.empty()) {
        auto in = open_input(e_state);
        pred = argmax_by_node(graph, read_prediction_csv(in));
      } else {
        auto in = open_input(e_assign);
        const auto a = read_assignment_csv(in, labels.categories());
        pred.assign(graph.node_count(), kNoCategory);
        for (std::size_t i = 0; i < a.user_ids.size(); ++i) {
          if (auto x = graph.find(a.user_ids[i])) pred[*x] = a.assigned[i];
        }
      }
      const auto topo = compute_topo_metrics(graph, seed_nodes(graph, labels));
      const auto r = evaluate(pred, validation_targets(graph, labels), topo, labels.categories(),
                              e_buckets);
      write_output(g.out("eval_report.json"), [&](std::ostream& o) { write_eval_json(o, r); });
      write_output(g.out("strata.csv"), [&](std::ostream& o) { write_strata_csv(o, r); });
      write_output(g.out("crosstab.csv"), [&](std::ostream& o) { write_crosstab_csv(o, r); });
      std::cout << "accuracy " << io::format_double(r.overall_accuracy) << " coverage "
                << io::format_double(r.coverage) << '\n';
    } else if (pipeline->parsed()) {
      PipelineConfig cfg = read_pipeline_config(pl_config);
      if (g.seed) cfg.seed = *g.seed;
      if (app.get_option("--threads")->count() > 0) cfg.threads = g.threads;
      if (app.get_option("--out-dir")->count() > 0) cfg.out_dir = g.out_dir;
      const auto r = run_pipeline(cfg, &std::cerr);
      std::cerr << r.executed.size() << " stage(s) executed, " << r.skipped.size()
                << " skipped\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
