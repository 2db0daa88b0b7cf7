#include "cdrdemo/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <unordered_map>

#include "cdrdemo/io.hpp"
#include "cdrdemo/rng.hpp"

namespace cdrdemo {

std::vector<double> bootstrap_means(std::span<const double> values, std::size_t resamples,
                                    std::uint64_t rng_seed) {
  if (values.empty()) throw DataError("bootstrap of empty sample");
  if (resamples < 1) throw UsageError("bootstrap needs at least one resample");
  Rng rng(rng_seed);
  const std::size_t m = values.size();
  std::vector<double> means;
  means.reserve(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) sum += values[rng.below(m)];
    means.push_back(sum / static_cast<double>(m));
  }
  return means;
}

namespace {

using boost::math::quadrature::gauss_kronrod;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// P(range of k iid standard normals <= w).
double normal_range_cdf(double w, std::size_t k) {
  if (w <= 0.0) return 0.0;
  const double km1 = static_cast<double>(k - 1);
  auto f = [&](double z) {
    const double inner = norm_cdf(z) - norm_cdf(z - w);
    return inner > 0.0 ? norm_pdf(z) * std::pow(inner, km1) : 0.0;
  };
  const double v = gauss_kronrod<double, 31>::integrate(f, -8.5, 8.5, 8, 1e-11);
  return std::clamp(static_cast<double>(k) * v, 0.0, 1.0);
}

}  // namespace

double studentized_range_cdf(double q, std::size_t k, double df) {
  if (k < 2) throw UsageError("studentized range needs k >= 2");
  if (!(df > 0.0)) throw UsageError("studentized range needs df > 0");
  if (q <= 0.0) return 0.0;
  if (std::isinf(df)) return normal_range_cdf(q, k);

  // s = sqrt(chi2_df / df) has density
  //   df^(df/2) / (Gamma(df/2) 2^(df/2 - 1)) s^(df-1) exp(-df s^2 / 2).
  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) -
                          (0.5 * df - 1.0) * std::numbers::ln2;
  auto density = [&](double s) {
    if (s <= 0.0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  const boost::math::chi_squared_distribution<double> chi2(df);
  const double s_lo = std::sqrt(boost::math::quantile(chi2, 1e-15) / df);
  const double s_hi = std::sqrt(boost::math::quantile(boost::math::complement(chi2, 1e-15)) / df);
  auto f = [&](double s) { return density(s) * normal_range_cdf(q * s, k); };
  // Split at the mode so the adaptive rule sees the peak.
  const double mode = std::sqrt(std::max(df - 1.0, 0.0) / df);
  double v = 0.0;
  if (mode > s_lo && mode < s_hi) {
    v = gauss_kronrod<double, 31>::integrate(f, s_lo, mode, 8, 1e-10) +
        gauss_kronrod<double, 31>::integrate(f, mode, s_hi, 8, 1e-10);
  } else {
    v = gauss_kronrod<double, 31>::integrate(f, s_lo, s_hi, 8, 1e-10);
  }
  return std::clamp(v, 0.0, 1.0);
}

double studentized_range_quantile(double p, std::size_t k, double df) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("quantile probability must be in (0,1)");
  double lo = 0.0;
  double hi = 4.0;
  while (studentized_range_cdf(hi, k, df) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw DataError("studentized range quantile did not bracket");
  }
  while (hi - lo > 1e-7) {
    const double mid = 0.5 * (lo + hi);
    if (studentized_range_cdf(mid, k, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups, double fwer) {
  if (groups.size() < 2) throw DataError("Tukey HSD needs at least 2 groups");
  if (!(fwer > 0.0 && fwer < 1.0)) throw UsageError("fwer must be in (0,1)");
  const std::size_t k = groups.size();
  std::vector<double> means(k);
  double ss_within = 0.0;
  std::size_t total = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const auto& v = groups[g];
    if (v.size() < 2) throw DataError("Tukey HSD needs at least 2 values per group");
    double sum = 0.0;
    for (double x : v) sum += x;
    means[g] = sum / static_cast<double>(v.size());
    for (double x : v) ss_within += (x - means[g]) * (x - means[g]);
    total += v.size();
  }
  TukeyResult out;
  out.df = static_cast<double>(total - k);
  out.mse = ss_within / out.df;
  out.q_critical = studentized_range_quantile(1.0 - fwer, k, out.df);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      TukeyPair p;
      p.group1 = i;
      p.group2 = j;
      p.meandiff = means[j] - means[i];
      const double se = std::sqrt(out.mse / 2.0 *
                                  (1.0 / static_cast<double>(groups[i].size()) +
                                   1.0 / static_cast<double>(groups[j].size())));
      const double half = out.q_critical * se;
      p.lower = p.meandiff - half;
      p.upper = p.meandiff + half;
      p.reject = p.lower > 0.0 || p.upper < 0.0;
      out.pairs.push_back(p);
    }
  }
  return out;
}

GenderConditionals gender_conditionals(
    std::span<const std::pair<std::string, std::string>> calls, const LabelStore& labels) {
  std::size_t count[2][2] = {};  // [caller][recipient], 0 = M, 1 = F
  std::unordered_map<std::string_view, Gender> gender_of;
  std::size_t males = 0, females = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels.gender[i]) continue;
    gender_of.emplace(labels.user_ids[i], *labels.gender[i]);
    (*labels.gender[i] == Gender::kMale ? males : females) += 1;
  }
  GenderConditionals out;
  for (const auto& [from, to] : calls) {
    const auto a = gender_of.find(from);
    const auto b = gender_of.find(to);
    if (a == gender_of.end() || b == gender_of.end()) continue;
    ++count[a->second == Gender::kFemale][b->second == Gender::kFemale];
    ++out.calls_counted;
  }
  const double from_m = static_cast<double>(count[0][0] + count[0][1]);
  const double from_f = static_cast<double>(count[1][0] + count[1][1]);
  if (from_m > 0) {
    out.m_given_m = static_cast<double>(count[0][0]) / from_m;
    out.f_given_m = static_cast<double>(count[0][1]) / from_m;
  }
  if (from_f > 0) {
    out.m_given_f = static_cast<double>(count[1][0]) / from_f;
    out.f_given_f = static_cast<double>(count[1][1]) / from_f;
  }
  if (males + females > 0) {
    out.p_m = static_cast<double>(males) / static_cast<double>(males + females);
    out.p_f = static_cast<double>(females) / static_cast<double>(males + females);
  }
  return out;
}

std::vector<double> log_difference(std::span<const double> c, std::span<const double> r,
                                   double log_floor) {
  if (c.size() != r.size()) throw DataError("log_difference: size mismatch");
  std::vector<double> out(c.size());
  auto lg = [&](double v) { return v > 0.0 ? std::log10(v) : log_floor; };
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = lg(c[i]) - lg(r[i]);
  return out;
}

HomophilyReport homophily_matrices(const SocialGraph& g, const LabelStore& labels,
                                   double log_floor) {
  HomophilyReport rep;
  const std::size_t n = g.node_count();
  std::vector<int> age_of(n, -1);
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (NodeId x = 0; x < n; ++x) {
    const auto li = labels.find(g.external_id(x));
    if (!li || !labels.age[*li]) continue;
    age_of[x] = *labels.age[*li];
    lo = std::min(lo, age_of[x]);
    hi = std::max(hi, age_of[x]);
    ++rep.labeled_nodes;
  }
  if (rep.labeled_nodes == 0) {
    rep.warnings.push_back("no age-labeled nodes in graph");
    return rep;
  }
  rep.age_min = lo;
  rep.size = static_cast<std::size_t>(hi - lo + 1);
  const std::size_t a = rep.size;
  rep.comm.assign(a * a, 0.0);
  rep.null.assign(a * a, 0.0);
  std::vector<double> population(a, 0.0);
  for (NodeId x = 0; x < n; ++x) {
    if (age_of[x] >= 0) population[static_cast<std::size_t>(age_of[x] - lo)] += 1.0;
  }

  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  std::size_t pts = 0;
  for (NodeId x = 0; x < n; ++x) {
    if (age_of[x] < 0) continue;
    for (NodeId y : g.neighbors(x)) {
      if (age_of[y] < 0) continue;
      // Each undirected edge is visited from both ends, filling (i,j) and (j,i).
      const auto i = static_cast<std::size_t>(age_of[x] - lo);
      const auto j = static_cast<std::size_t>(age_of[y] - lo);
      rep.comm[i * a + j] += 1.0;
      const double ax = age_of[x], ay = age_of[y];
      sx += ax;
      sy += ay;
      sxx += ax * ax;
      syy += ay * ay;
      sxy += ax * ay;
      ++pts;
      if (x < y) ++rep.labeled_edges;
    }
  }
  if (rep.labeled_edges == 0) rep.warnings.push_back("no labeled-labeled edges");

  const double total_nodes = static_cast<double>(rep.labeled_nodes);
  const double twice_edges = 2.0 * static_cast<double>(rep.labeled_edges);
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < a; ++j) {
      rep.null[i * a + j] =
          twice_edges * (population[i] / total_nodes) * (population[j] / total_nodes);
    }
  }
  rep.log_diff = log_difference(rep.comm, rep.null, log_floor);
  rep.delta_curve.assign(a, 0.0);
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < a; ++j) {
      rep.delta_curve[i > j ? i - j : j - i] += rep.comm[i * a + j];
    }
  }

  rep.regression.points = pts;
  if (pts >= 2) {
    const double np = static_cast<double>(pts);
    const double cov = sxy - sx * sy / np;
    const double vx = sxx - sx * sx / np;
    const double vy = syy - sy * sy / np;
    if (vx > 0.0) {
      rep.regression.slope = cov / vx;
      rep.regression.intercept = (sy - rep.regression.slope * sx) / np;
    }
    if (vx > 0.0 && vy > 0.0) rep.regression.r = cov / std::sqrt(vx * vy);
  }
  return rep;
}

void write_matrix_csv(std::ostream& out, const HomophilyReport& rep,
                      const std::vector<double>& matrix) {
  out << "age";
  for (std::size_t j = 0; j < rep.size; ++j) out << ',' << rep.age_min + static_cast<int>(j);
  out << '\n';
  for (std::size_t i = 0; i < rep.size; ++i) {
    out << rep.age_min + static_cast<int>(i);
    for (std::size_t j = 0; j < rep.size; ++j) {
      out << ',' << io::format_double(matrix[i * rep.size + j]);
    }
    out << '\n';
  }
}

void write_delta_csv(std::ostream& out, const HomophilyReport& rep) {
  out << "delta,links\n";
  for (std::size_t d = 0; d < rep.delta_curve.size(); ++d) {
    out << d << ',' << io::format_double(rep.delta_curve[d]) << '\n';
  }
}

}  // namespace cdrdemo
