#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrdemo/common.hpp"
#include "cdrdemo/features.hpp"

namespace cdrdemo {

enum class Penalty : std::uint8_t { kL1, kL2 };

std::string_view to_string(Penalty p);

struct Regularization {
  Penalty kind = Penalty::kL1;
  // Loss weight C: minimizes R(w) + C * sum(loss), R = |w|_1 or |w|^2 / 2.
  double strength = 1.0;
};

struct OptimizerOptions {
  // Stop when the infinity norm of the gradient mapping of the per-sample
  // objective, (R(w) + C * sum(loss)) / n, falls below this.
  double gradient_tol = 1e-6;
  std::size_t max_iterations = 10000;
  // Record the objective at every accepted iterate.
  bool record_objective = false;
};

struct TrainReport {
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;  // per-sample objective at the returned iterate
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;
};

// Dense design matrix for training; rows are samples.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;  // row-major
  std::vector<std::string> feature_names;

  double at(std::size_t r, std::size_t c) const { return x[r * cols + c]; }
};

// Rows `row_indices` and columns `column_indices` of a feature matrix.
Dataset make_dataset(const FeatureMatrix& m, std::span<const std::size_t> row_indices,
                     std::span<const std::size_t> column_indices);

// Binary models keep a single weight row (scores for the +1 class).
// Multinomial models keep `classes` rows with the last row fixed at zero.
struct ClassifierModel {
  bool binary = false;
  std::size_t classes = 2;
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
  Regularization reg;
  std::vector<std::size_t> feature_subset;
  std::vector<std::string> feature_names;
};

// Labels in {-1, +1}. Female is +1 by convention elsewhere in the project.
ClassifierModel train_logistic(const Dataset& data, std::span<const int> labels,
                               const Regularization& reg, const OptimizerOptions& opts = {},
                               TrainReport* report = nullptr);

// Labels in [0, classes).
ClassifierModel train_multinomial(const Dataset& data, std::span<const int> labels,
                                  std::size_t classes, const Regularization& reg,
                                  const OptimizerOptions& opts = {},
                                  TrainReport* report = nullptr);

// Per-sample objectives and gradients. Parameters are laid out as
// weights row-major (rows x cols) followed by one intercept per row. For the
// multinomial loss there are classes - 1 free rows.
double logistic_objective(const Dataset& data, std::span<const int> labels,
                          const Regularization& reg, std::span<const double> params);
double multinomial_objective(const Dataset& data, std::span<const int> labels,
                             std::size_t classes, const Regularization& reg,
                             std::span<const double> params);
// Gradient of the smooth part: the loss, plus the L2 term when kind == L2.
std::vector<double> multinomial_smooth_gradient(const Dataset& data, std::span<const int> labels,
                                                std::size_t classes, const Regularization& reg,
                                                std::span<const double> params);

struct PredictionSet {
  std::vector<std::string> user_ids;
  std::size_t classes = 0;
  std::vector<double> prob;  // row-major users x classes
  std::vector<Category> argmax;

  std::span<const double> row(std::size_t i) const {
    return {prob.data() + i * classes, classes};
  }
};

// Class-probability rows; column order follows the model's class order
// (for binary models: column 0 = label -1, column 1 = label +1).
PredictionSet predict(const ClassifierModel& model, const FeatureMatrix& features);
PredictionSet predict(const ClassifierModel& model, const Dataset& data);

// Scores used for feature selection: per column, the absolute Welch
// t-statistic between the classes (binary) or the largest one-vs-rest
// absolute t-statistic (multiclass).
std::vector<double> separation_scores(const Dataset& data, std::span<const int> labels);
// Top-k columns by score (ties to lower index), returned ascending.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);

struct GridConfig {
  double c = 1.0;
  std::size_t k = 0;  // 0 selects every column
  Penalty penalty = Penalty::kL1;

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct GridSpec {
  std::vector<double> c_values = {0.1, 0.3, 1, 3, 10};
  std::vector<std::size_t> k_values = {10, 30, 0};
  std::vector<Penalty> penalties = {Penalty::kL1, Penalty::kL2};

  std::vector<GridConfig> expand() const;
};

struct GridResultRow {
  GridConfig config;
  std::size_t effective_k = 0;
  double validation_accuracy = 0.0;
};

struct GridSearchResult {
  GridConfig best;
  double best_accuracy = 0.0;
  ClassifierModel model;  // refit on the training split
  std::vector<GridResultRow> rows;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};

enum class TargetKind : std::uint8_t { kBinary, kMulticlass };

// `labels` are per-row targets (binary: -1/+1, multiclass: 0..classes-1).
// Rows are shuffled with Rng(rng_seed) and the first round(split * n)
// become the training set. Ties between configurations go to higher
// accuracy, then smaller effective k, then smaller C, then L2 before L1.
GridSearchResult grid_search(const Dataset& data, std::span<const int> labels,
                             TargetKind target, std::size_t classes,
                             const std::vector<GridConfig>& grid, double split,
                             std::uint64_t rng_seed, unsigned threads = 1,
                             const OptimizerOptions& opts = {});

double accuracy(const PredictionSet& p, std::span<const int> class_labels);

void write_model_json(std::ostream& out, const ClassifierModel& model);
ClassifierModel read_model_json(std::istream& in);

// `user_id,p_0,...,p_{C-1},argmax`
void write_prediction_csv(std::ostream& out, const PredictionSet& p);
PredictionSet read_prediction_csv(std::istream& in);

}  // namespace cdrdemo
