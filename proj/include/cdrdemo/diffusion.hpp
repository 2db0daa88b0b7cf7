#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrdemo/classify.hpp"
#include "cdrdemo/graph.hpp"
#include "cdrdemo/labels.hpp"

namespace cdrdemo {

// Per-node probability vectors over `categories` classes, row-major.
struct ProbabilityState {
  std::size_t nodes = 0;
  std::size_t categories = 0;
  std::size_t iteration = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t x) const {
    return {values.data() + x * categories, categories};
  }
  std::span<double> row(std::size_t x) { return {values.data() + x * categories, categories}; }
  Category argmax(std::size_t x) const;
};

enum class InitMode : std::uint8_t { kUniform, kMl };

struct DiffusionConfig {
  double lambda = 0.5;
  std::size_t max_iterations = 30;
  // Stop once the infinity norm of g_t - g_{t-1} drops below this.
  double convergence_tol = 1e-8;
  InitMode mode = InitMode::kUniform;
  unsigned threads = 1;
};

// Seed category for every node of `g` (kNoCategory for non-seeds). Throws
// if a seed has no age.
std::vector<Category> seed_categories(const SocialGraph& g, const LabelStore& labels);
// (node, true category) for every validation user present in `g`.
std::vector<std::pair<NodeId, Category>> validation_targets(const SocialGraph& g,
                                                            const LabelStore& labels);

// Seeds get one-hot rows; others get 1/C, or their `ml` row (renormalized
// when its sum is off by more than 1e-9) in kMl mode.
ProbabilityState init_state(std::span<const Category> seed_category, std::size_t categories,
                            InitMode mode, const ProbabilityState* ml = nullptr);
ProbabilityState init_state(const SocialGraph& g, const LabelStore& labels, InitMode mode,
                            const PredictionSet* ml = nullptr);

// One Jacobi sweep:
//   g_t(x) = (1 - lambda) g_0(x) + lambda * sum_y w_xy g_{t-1}(y) / sum_y w_xy
// reading only `prev`. A node without neighbors keeps g_0 when it is a seed
// (reported through `isolated_seeds`) and is an error otherwise. Row sums
// are checked against 1 within 1e-9 after the sweep.
ProbabilityState step(const ProbabilityState& prev, const ProbabilityState& initial,
                      const SocialGraph& g, std::span<const Category> seed_category,
                      double lambda, unsigned threads = 1,
                      std::vector<NodeId>* isolated_seeds = nullptr);

// Scalar version of the same sweep for one category column; the vectorized
// step performs identical arithmetic per column.
std::vector<double> step_column(std::span<const double> prev, std::span<const double> initial,
                                const SocialGraph& g, std::span<const Category> seed_category,
                                double lambda);

struct TraceRow {
  std::size_t iteration = 0;
  double delta_inf = 0.0;
  std::optional<double> validation_accuracy;
};

struct RunResult {
  ProbabilityState state;
  std::vector<TraceRow> trace;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Iterates until convergence_tol or max_iterations. Row 0 of the trace is
// the initial state (delta 0).
RunResult run(const SocialGraph& g, std::span<const Category> seed_category,
              const ProbabilityState& initial, const DiffusionConfig& cfg,
              std::span<const std::pair<NodeId, Category>> validation = {});

// || (I - lambda D^-1 A) g - (1 - lambda) g0 ||_inf over all categories;
// rows of isolated nodes are measured against g0.
double linear_system_residual(const ProbabilityState& state, const ProbabilityState& initial,
                              const SocialGraph& g, double lambda);

double argmax_accuracy(const ProbabilityState& state,
                       std::span<const std::pair<NodeId, Category>> targets);

struct LambdaPoint {
  double lambda = 0.0;
  double accuracy = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

std::vector<LambdaPoint> lambda_sweep(const SocialGraph& g, std::span<const Category> seed_category,
                                      const ProbabilityState& initial,
                                      std::span<const double> lambdas,
                                      const DiffusionConfig& base,
                                      std::span<const std::pair<NodeId, Category>> validation);

// `user_id,p_0,...,p_{C-1},argmax`
void write_state_csv(std::ostream& out, const SocialGraph& g, const ProbabilityState& s);
ProbabilityState read_state_csv(std::istream& in, const SocialGraph& g);
// `iteration,delta_inf,validation_accuracy`
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

// Converts a state to a PredictionSet keyed by the graph's external ids.
PredictionSet to_predictions(const SocialGraph& g, const ProbabilityState& s);

}  // namespace cdrdemo
