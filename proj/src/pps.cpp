#include "cdrdemo/pps.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "cdrdemo/io.hpp"

namespace cdrdemo {

QuotaSpec compute_quotas(std::size_t population, double q, std::span<const double> distribution) {
  if (!(q > 0.0 && q <= 1.0)) throw UsageError("q must be in (0,1]");
  if (distribution.empty()) throw UsageError("empty target distribution");
  double sum = 0.0;
  for (double f : distribution) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw DataError("negative or invalid target fraction");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw DataError("target distribution does not sum to 1");

  QuotaSpec spec;
  spec.q = q;
  spec.target_distribution.assign(distribution.begin(), distribution.end());
  spec.total = static_cast<std::size_t>(std::llround(q * static_cast<double>(population)));
  const std::size_t c = distribution.size();
  spec.quotas.resize(c);
  std::vector<double> remainder(c);
  std::size_t used = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double exact = distribution[k] * static_cast<double>(spec.total);
    spec.quotas[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    used += spec.quotas[k];
  }
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; used < spec.total; i = (i + 1) % c, ++used) ++spec.quotas[order[i]];
  return spec;
}

std::size_t PpsAssignment::assigned_count() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

PpsAssignment pps_assign(const PredictionSet& predictions, const QuotaSpec& spec) {
  const std::size_t n = predictions.user_ids.size();
  const std::size_t c = predictions.classes;
  if (spec.quotas.size() != c) throw DataError("quota count does not match probability columns");
  if (spec.total > n) throw DataError("quota total exceeds the number of users");

  struct Tuple {
    double p;
    std::uint32_t user;
    std::uint32_t cat;
  };
  std::vector<Tuple> tuples;
  tuples.reserve(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = predictions.row(i);
    for (std::size_t k = 0; k < c; ++k) {
      if (!(r[k] >= 0.0 && r[k] <= 1.0 + 1e-9)) {
        throw DataError("invalid probability for user " + predictions.user_ids[i]);
      }
      tuples.push_back({r[k], static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k)});
    }
  }
  std::sort(tuples.begin(), tuples.end(), [](const Tuple& a, const Tuple& b) {
    if (a.p != b.p) return a.p > b.p;
    if (a.user != b.user) return a.user < b.user;
    return a.cat < b.cat;
  });

  PpsAssignment out;
  out.user_ids = predictions.user_ids;
  out.assigned.assign(n, kNoCategory);
  out.confidence.assign(n, 0.0);
  out.counts.assign(c, 0);
  std::size_t total = 0;
  for (const Tuple& t : tuples) {
    if (total == spec.total) break;
    if (out.assigned[t.user] != kNoCategory || out.counts[t.cat] >= spec.quotas[t.cat]) continue;
    out.assigned[t.user] = static_cast<Category>(t.cat);
    out.confidence[t.user] = t.p;
    ++out.counts[t.cat];
    ++total;
  }
  out.shortfall.resize(c);
  for (std::size_t k = 0; k < c; ++k) out.shortfall[k] = spec.quotas[k] - out.counts[k];
  return out;
}

std::vector<double> read_pyramid_csv(std::istream& in) {
  std::vector<std::pair<long long, double>> rows;
  io::for_each_row(in, "category,fraction", [&](const auto& f, std::size_t line) {
    if (f.size() != 2) throw ParseError(line, "expected category,fraction");
    rows.emplace_back(io::parse_int(f[0], line), io::parse_double(f[1], line));
  });
  std::sort(rows.begin(), rows.end());
  std::vector<double> out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].first != static_cast<long long>(k)) {
      throw DataError("pyramid categories must be 0..C-1 without gaps");
    }
    out.push_back(rows[k].second);
  }
  if (out.empty()) throw DataError("empty pyramid file");
  return out;
}

void write_pyramid_csv(std::ostream& out, std::span<const double> distribution) {
  out << "category,fraction\n";
  for (std::size_t k = 0; k < distribution.size(); ++k) {
    out << k << ',' << io::format_double(distribution[k]) << '\n';
  }
}

void write_assignment_csv(std::ostream& out, const PpsAssignment& a) {
  out << "user_id,category,confidence\n";
  for (std::size_t i = 0; i < a.user_ids.size(); ++i) {
    out << a.user_ids[i] << ',';
    if (a.assigned[i] != kNoCategory) out << a.assigned[i];
    out << ',' << io::format_double(a.confidence[i]) << '\n';
  }
}

PpsAssignment read_assignment_csv(std::istream& in, std::size_t categories) {
  PpsAssignment a;
  a.counts.assign(categories, 0);
  a.shortfall.assign(categories, 0);
  io::for_each_row(in, "user_id,category,confidence", [&](const auto& f, std::size_t line) {
    if (f.size() != 3) throw ParseError(line, "expected user_id,category,confidence");
    a.user_ids.emplace_back(f[0]);
    Category cat = kNoCategory;
    if (!f[1].empty()) {
      const long long v = io::parse_int(f[1], line);
      if (v < 0 || static_cast<std::size_t>(v) >= categories) {
        throw ParseError(line, "category out of range");
      }
      cat = static_cast<Category>(v);
      ++a.counts[static_cast<std::size_t>(v)];
    }
    a.assigned.push_back(cat);
    a.confidence.push_back(io::parse_double(f[2], line));
  });
  return a;
}

}  // namespace cdrdemo
