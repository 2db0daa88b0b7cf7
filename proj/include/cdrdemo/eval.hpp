#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cdrdemo/common.hpp"
#include "cdrdemo/graph.hpp"

namespace cdrdemo {

// Upper bounds of the degree buckets; bucket i covers (ub[i-1], ub[i]] with
// ub[-1] = 0, so the defaults read [1,2], (2,29], (29,48], (48,66], (66,100].
inline const std::vector<std::uint32_t> kDefaultDegreeBuckets = {2, 29, 48, 66, 100};

struct StratumRow {
  std::string bin;
  std::size_t validation = 0;  // validation nodes in the bin
  std::size_t evaluated = 0;   // of which carry a prediction
  std::size_t correct = 0;

  double accuracy() const {
    return evaluated == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(evaluated);
  }
};

struct CrossCell {
  std::string degree_bin;
  std::uint32_t dts = 0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  std::size_t validation = 0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  double overall_accuracy = 0.0;
  double coverage = 0.0;  // evaluated / validation
  std::vector<StratumRow> by_age_group;
  std::vector<StratumRow> by_sin;
  std::vector<StratumRow> by_dts;
  std::vector<StratumRow> by_degree;
  std::vector<CrossCell> dts_degree_crosstab;
};

// Bin label of a degree; degrees above the last bound go to ">last".
std::string degree_bin(std::uint32_t degree, std::span<const std::uint32_t> buckets);

// `predicted` holds one category per graph node (kNoCategory when PPS left
// the node unassigned). Accuracy is over validation nodes with a
// prediction. Throws DataError when `targets` is empty.
EvalReport evaluate(std::span<const Category> predicted,
                    std::span<const std::pair<NodeId, Category>> targets,
                    const TopoMetrics& topo, std::size_t categories,
                    std::span<const std::uint32_t> degree_buckets = kDefaultDegreeBuckets);

void write_eval_json(std::ostream& out, const EvalReport& r);
// `stratum,bin,validation,evaluated,correct,accuracy`
void write_strata_csv(std::ostream& out, const EvalReport& r);
// `degree_bin,dts,evaluated,correct,accuracy`
void write_crosstab_csv(std::ostream& out, const EvalReport& r);

// Expected accuracy of guessing category k with probability guess[k] when
// the true categories are `truth`: sum_k guess[k] * share_k.
double distribution_guess_accuracy(std::span<const double> guess,
                                   std::span<const std::pair<NodeId, Category>> truth);

}  // namespace cdrdemo
