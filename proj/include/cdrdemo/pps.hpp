#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cdrdemo/classify.hpp"
#include "cdrdemo/common.hpp"

namespace cdrdemo {

// Age-group shares of the labeled training population in the original study.
inline const std::vector<double> kDefaultAgePyramid = {0.121, 0.3545, 0.3745, 0.15};

struct QuotaSpec {
  double q = 1.0;
  std::vector<double> target_distribution;
  std::vector<std::size_t> quotas;
  std::size_t total = 0;  // N = round(q * population)
};

// Largest-remainder apportionment of round(q * population) over the
// distribution; equal remainders favour the lower category.
QuotaSpec compute_quotas(std::size_t population, double q, std::span<const double> distribution);

struct PpsAssignment {
  std::vector<std::string> user_ids;
  std::vector<Category> assigned;  // kNoCategory when left unassigned
  std::vector<double> confidence;  // p_{i,k} of the assigned category, 0 otherwise
  std::vector<std::size_t> counts;
  std::vector<std::size_t> shortfall;  // quota minus count per category

  std::size_t assigned_count() const;
};

// Greedy scan over (user, category, p) tuples sorted by p descending, then
// row index, then category. Throws when N exceeds the number of rows.
PpsAssignment pps_assign(const PredictionSet& predictions, const QuotaSpec& spec);

// `category,fraction`
std::vector<double> read_pyramid_csv(std::istream& in);
void write_pyramid_csv(std::ostream& out, std::span<const double> distribution);

// `user_id,category,confidence`; category is empty when unassigned.
void write_assignment_csv(std::ostream& out, const PpsAssignment& a);
PpsAssignment read_assignment_csv(std::istream& in, std::size_t categories);

}  // namespace cdrdemo
