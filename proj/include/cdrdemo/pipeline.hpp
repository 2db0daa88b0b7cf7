#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cdrdemo/classify.hpp"
#include "cdrdemo/diffusion.hpp"
#include "cdrdemo/eval.hpp"
#include "cdrdemo/features.hpp"
#include "cdrdemo/graph.hpp"
#include "cdrdemo/labels.hpp"
#include "cdrdemo/records.hpp"

namespace cdrdemo {

namespace fs = std::filesystem;

// ---- building blocks shared by the CLI subcommands and the pipeline ----

struct GraphArtifacts {
  PruneResult prune;
  TopoMetrics topo;
  std::size_t input_nodes = 0;
  std::size_t input_edges = 0;
};

// Builds the contact graph, prunes it around the labeled seeds and computes
// degree / SIN / DTS on the pruned graph.
GraphArtifacts build_graph_artifacts(std::span<const CdrRecord> calls,
                                     std::span<const SmsRecord> sms, const LabelStore& labels,
                                     std::size_t max_degree = kDefaultMaxDegree);
// graph.bin, topo.csv (`user_id,degree,sin,dts,role`) and prune.json.
void write_graph_artifacts(const fs::path& dir, const GraphArtifacts& a, const LabelStore& labels);

// Seeds of `labels` present in `g`, ascending.
std::vector<NodeId> seed_nodes(const SocialGraph& g, const LabelStore& labels);

// Rows of `m` whose user id is a node of `g`, in node order. Nodes without
// a row get all-zero features.
FeatureMatrix align_to_graph(const FeatureMatrix& m, const SocialGraph& g);

// features_raw.csv (rows aligned to `graph` when given), features.csv
// (preprocessed), skew.csv and pca.csv over every preprocessed column.
void write_feature_outputs(const fs::path& dir, std::span<const CdrRecord> calls,
                           std::span<const SmsRecord> sms, const SocialGraph* graph,
                           const ExtractOptions& opts, std::size_t pca_components);

struct StatsOptions {
  std::uint64_t seed = 1;
  std::size_t bootstrap_resamples = 400;
  // Raw feature names; a `log-` prefix applies log10(x + 1).
  std::string tukey_variable = "log-in-time-total";
  std::string bootstrap_variable = "out-time-total";
};

// Gender conditionals, homophily matrices, Tukey HSD of `tukey_variable`
// over age groups and per-gender bootstrap ranges of `bootstrap_variable`,
// all over labeled (seed and validation) users.
void write_stats_outputs(const fs::path& dir, const SocialGraph& g, const LabelStore& labels,
                         std::span<const CdrRecord> calls, const FeatureMatrix& raw,
                         const StatsOptions& opts);

// Multinomial age model trained on the seeds.
struct AgeModelOutput {
  GridSearchResult grid;
  PredictionSet probabilities;  // one row per graph node
};
AgeModelOutput train_age_model(const FeatureMatrix& features, const SocialGraph& g,
                               const LabelStore& labels, const std::vector<GridConfig>& grid,
                               double split, std::uint64_t seed, unsigned threads,
                               const OptimizerOptions& opts = {});
// Logistic gender model (female = +1) trained on the seeds.
GridSearchResult train_gender_model(const FeatureMatrix& features, const SocialGraph& g,
                                    const LabelStore& labels,
                                    const std::vector<GridConfig>& grid, double split,
                                    std::uint64_t seed, unsigned threads,
                                    const OptimizerOptions& opts = {});
// `c,k,penalty,effective_k,validation_accuracy`
void write_grid_csv(std::ostream& out, const GridSearchResult& r);

// Predictions restricted to graph nodes that are not seeds.
PredictionSet non_seed_rows(const PredictionSet& p, const SocialGraph& g,
                            const LabelStore& labels);
// Seed category shares, or the default pyramid when there are no seeds.
std::vector<double> seed_pyramid(const SocialGraph& g, const LabelStore& labels);

// ---- pipeline ----

struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  fs::path out_dir = "out";
  fs::path base_dir = ".";  // relative input paths resolve against this
  std::vector<std::string> stages;

  std::optional<fs::path> synth_config;
  std::optional<std::size_t> synth_population;

  fs::path calls, sms, labels;  // ingest inputs
  int utc_offset_minutes = 0;
  std::size_t max_degree = kDefaultMaxDegree;

  DaySplit day_split;
  std::optional<std::string> window_begin, window_end;
  std::size_t pca_components = 10;

  std::size_t bootstrap_resamples = 400;
  std::string tukey_variable = "log-in-time-total";
  std::string bootstrap_variable = "out-time-total";

  double split = 0.8;
  GridSpec grid;
  OptimizerOptions optimizer;
  bool gender_model = false;

  DiffusionConfig diffusion;
  std::vector<double> lambda_sweep = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::vector<double> q_values = {1.0, 0.5, 0.25, 0.125};
  std::optional<fs::path> pyramid;

  std::vector<std::uint32_t> degree_buckets = kDefaultDegreeBuckets;
};

// JSON config; unknown keys are usage errors. Relative paths, including the
// default out_dir "out", resolve against the config file's directory.
PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir);
PipelineConfig read_pipeline_config(const fs::path& path);

struct PipelineRun {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
};

// Runs the configured stages in order, writing artifacts and
// manifest.json under out_dir. A stage whose recorded parameters, input
// hashes and output hashes all still match is skipped. Artifacts do not
// depend on `threads`.
PipelineRun run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr);

}  // namespace cdrdemo
