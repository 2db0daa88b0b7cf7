#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdrdemo/graph.hpp"
#include "cdrdemo/labels.hpp"

namespace cdrdemo {

// Means of `resamples` bootstrap samples, each of |values| draws with
// replacement. Draw j of resample r is values[rng.below(|values|)] from a
// single Rng(rng_seed) stream consumed in (r, j) order.
std::vector<double> bootstrap_means(std::span<const double> values, std::size_t resamples,
                                    std::uint64_t rng_seed);

// Studentized range distribution for k means and df degrees of freedom
// (df = +inf allowed). The CDF is a nested numeric integral; the quantile
// inverts it by bisection to 1e-6.
double studentized_range_cdf(double q, std::size_t k, double df);
double studentized_range_quantile(double p, std::size_t k, double df);

struct TukeyPair {
  std::size_t group1 = 0;
  std::size_t group2 = 0;
  // mean(group2) - mean(group1)
  double meandiff = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool reject = false;
};

struct TukeyResult {
  std::vector<TukeyPair> pairs;  // (0,1), (0,2), ..., (k-2,k-1)
  double q_critical = 0.0;
  double mse = 0.0;
  double df = 0.0;
};

// Tukey-Kramer simultaneous intervals:
//   meandiff +- q_crit(1 - fwer; k, N - k) * sqrt(mse / 2 * (1/n_i + 1/n_j))
TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups, double fwer = 0.05);

struct GenderConditionals {
  // p(recipient gender | caller gender)
  double f_given_m = 0.0;
  double m_given_m = 0.0;
  double f_given_f = 0.0;
  double m_given_f = 0.0;
  // Share of labeled users of each gender among those counted.
  double p_m = 0.0;
  double p_f = 0.0;
  std::size_t calls_counted = 0;
};

// `calls` holds (originator, recipient) external ids. Calls where either
// end lacks a gender label are ignored. p(M), p(F) are population shares
// over every gender-labeled user in `labels`.
GenderConditionals gender_conditionals(
    std::span<const std::pair<std::string, std::string>> calls, const LabelStore& labels);

struct AgeRegression {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  std::size_t points = 0;
};

struct HomophilyReport {
  int age_min = 0;  // row/column 0 corresponds to this age in years
  std::size_t size = 0;
  // size x size, row-major.
  std::vector<double> comm;  // C
  std::vector<double> null;  // R
  std::vector<double> log_diff;
  // delta_curve[d] = sum of C over |i - j| = d.
  std::vector<double> delta_curve;
  std::size_t labeled_nodes = 0;
  std::size_t labeled_edges = 0;
  AgeRegression regression;
  std::vector<std::string> warnings;

  double c(std::size_t i, std::size_t j) const { return comm[i * size + j]; }
  double r(std::size_t i, std::size_t j) const { return null[i * size + j]; }
};

inline constexpr double kDefaultLogFloor = -0.30102999566398119521;  // log10(0.5)

// C counts every labeled-labeled undirected edge at (i,j) and (j,i).
// R_ij = 2 |E_GT| p_i p_j with p_i the share of labeled nodes aged i.
// Zero cells of C or R enter log_diff as `log_floor`.
HomophilyReport homophily_matrices(const SocialGraph& g, const LabelStore& labels,
                                   double log_floor = kDefaultLogFloor);

// Dense log10 difference with the same zero-cell floor; exposed for reuse
// when C and R come from elsewhere.
std::vector<double> log_difference(std::span<const double> c, std::span<const double> r,
                                   double log_floor = kDefaultLogFloor);

void write_matrix_csv(std::ostream& out, const HomophilyReport& rep,
                      const std::vector<double>& matrix);
void write_delta_csv(std::ostream& out, const HomophilyReport& rep);

}  // namespace cdrdemo
