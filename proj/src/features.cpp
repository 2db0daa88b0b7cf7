#include "cdrdemo/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "cdrdemo/common.hpp"
#include "cdrdemo/io.hpp"
#include "cdrdemo/parallel.hpp"

namespace cdrdemo {

namespace {

constexpr std::array<const char*, 3> kDirs = {"in", "out", "all"};
constexpr std::array<const char*, 4> kParts = {"weekdaylight", "weeknight", "weekend",
                                                "total"};

// Column offsets within the raw block.
constexpr std::size_t kCallCountBase = 0;
constexpr std::size_t kCallTimeBase = 12;
constexpr std::size_t kSmsBase = 24;
constexpr std::size_t kDaysBase = 36;
constexpr std::size_t kDegreeBase = 42;

constexpr std::size_t slot(std::size_t base, std::size_t dir, std::size_t part) {
  return base + dir * 4 + part;
}

enum : std::size_t { kIn = 0, kOut = 1 };

struct UserAcc {
  // [direction in/out][day part]
  std::int64_t call_count[2][3] = {};
  std::int64_t call_time[2][3] = {};
  std::int64_t sms_count[2][3] = {};
  // Totals accumulated independently of the day-part buckets as a check.
  std::int64_t call_count_total[2] = {};
  std::int64_t call_time_total[2] = {};
  std::int64_t sms_total[2] = {};
  // Local day numbers.
  std::vector<std::int64_t> call_days[2];
  std::vector<std::int64_t> sms_days[2];
  // Counterparts: [kIn] = who contacted this user, [kOut] = who this user contacted.
  std::vector<NodeId> contacts[2];
};

void sort_unique(std::vector<std::int64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

void sort_unique(std::vector<NodeId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::int64_t local_day(EpochSeconds t, TimeZone tz) {
  const EpochSeconds local = t + static_cast<EpochSeconds>(tz.utc_offset_minutes) * 60;
  return local >= 0 ? local / 86400 : (local - 86399) / 86400;
}

template <typename T>
std::size_t union_size(const std::vector<T>& a, const std::vector<T>& b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      ++i;
    } else if (i == a.size() || b[j] < a[i]) {
      ++j;
    } else {
      ++i;
      ++j;
    }
    ++n;
  }
  return n;
}

}  // namespace

const std::vector<std::string>& raw_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const char* kind : {"count", "time", "sms"}) {
      for (const char* dir : kDirs) {
        for (const char* part : kParts) {
          out.push_back(std::string(dir) + "-" + kind + "-" + part);
        }
      }
    }
    for (const char* medium : {"call", "sms"}) {
      for (const char* dir : kDirs) out.push_back(std::string(medium) + "-days-" + dir);
    }
    out.insert(out.end(), {"in-degree", "out-degree", "degree"});
    return out;
  }();
  return names;
}

std::vector<double> FeatureMatrix::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

std::optional<std::size_t> FeatureMatrix::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].name == name) return c;
  }
  return std::nullopt;
}

std::optional<std::size_t> FeatureMatrix::row_index(std::string_view user) const {
  const auto it = std::lower_bound(user_ids.begin(), user_ids.end(), user);
  if (it == user_ids.end() || *it != user) return std::nullopt;
  return static_cast<std::size_t>(it - user_ids.begin());
}

DayPart classify_day_part(EpochSeconds t, TimeZone tz, const DaySplit& split) {
  const std::int64_t day = local_day(t, tz);
  const EpochSeconds local = t + static_cast<EpochSeconds>(tz.utc_offset_minutes) * 60;
  const std::int64_t second_of_day = local - day * 86400;
  const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{day}}};
  if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) return DayPart::kWeekend;
  const std::int64_t hour = second_of_day / 3600;
  if (hour >= split.daylight_begin_hour && hour < split.daylight_end_hour) {
    return DayPart::kWeekdayLight;
  }
  return DayPart::kWeekNight;
}

FeatureMatrix extract_features(std::span<const CdrRecord> calls,
                               std::span<const SmsRecord> sms, const ExtractOptions& opts,
                               ExtractStats* stats) {
  FeatureMatrix m;
  {
    std::vector<std::string> ids;
    ids.reserve(2 * (calls.size() + sms.size()));
    for (const auto& r : calls) {
      ids.push_back(r.caller);
      ids.push_back(r.callee);
    }
    for (const auto& r : sms) {
      ids.push_back(r.sender);
      ids.push_back(r.receiver);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    m.user_ids = std::move(ids);
  }
  const std::size_t n = m.user_ids.size();
  std::unordered_map<std::string_view, NodeId> index;
  index.reserve(n);
  for (NodeId i = 0; i < n; ++i) index.emplace(m.user_ids[i], i);

  // Parallel fold: each shard owns its accumulators; merge is commutative
  // integer addition plus set union, so the result does not depend on the
  // shard count.
  const unsigned threads = std::max(1u, opts.threads);
  std::vector<std::vector<UserAcc>> shards(threads, std::vector<UserAcc>());
  std::vector<ExtractStats> shard_stats(threads);
  const std::size_t total_records = calls.size() + sms.size();
  parallel_for(total_records, threads, [&](std::size_t begin, std::size_t end, std::size_t c) {
    auto& acc = shards[c];
    acc.resize(n);
    auto& st = shard_stats[c];
    for (std::size_t i = begin; i < end; ++i) {
      const bool is_call = i < calls.size();
      const std::string& from =
          is_call ? calls[i].originator() : sms[i - calls.size()].originator();
      const std::string& to = is_call ? calls[i].recipient() : sms[i - calls.size()].recipient();
      const EpochSeconds t = is_call ? calls[i].timestamp : sms[i - calls.size()].timestamp;
      if (from == to) {
        ++st.skipped_self;
        continue;
      }
      if (!opts.window.contains(t)) {
        ++st.skipped_outside_window;
        continue;
      }
      const NodeId u = index.at(from);
      const NodeId v = index.at(to);
      const auto part = static_cast<std::size_t>(classify_day_part(t, opts.tz, opts.day_split));
      const std::int64_t day = local_day(t, opts.tz);
      if (is_call) {
        const std::int64_t dur = calls[i].duration_s;
        ++st.calls_used;
        for (auto [who, dir] : {std::pair{u, kOut}, std::pair{v, kIn}}) {
          auto& a = acc[who];
          ++a.call_count[dir][part];
          a.call_time[dir][part] += dur;
          ++a.call_count_total[dir];
          a.call_time_total[dir] += dur;
          a.call_days[dir].push_back(day);
        }
      } else {
        ++st.sms_used;
        for (auto [who, dir] : {std::pair{u, kOut}, std::pair{v, kIn}}) {
          auto& a = acc[who];
          ++a.sms_count[dir][part];
          ++a.sms_total[dir];
          a.sms_days[dir].push_back(day);
        }
      }
      acc[u].contacts[kOut].push_back(v);
      acc[v].contacts[kIn].push_back(u);
    }
  });

  ExtractStats total;
  for (const auto& s : shard_stats) {
    total.calls_used += s.calls_used;
    total.sms_used += s.sms_used;
    total.skipped_outside_window += s.skipped_outside_window;
    total.skipped_self += s.skipped_self;
  }
  if (stats) *stats = total;

  const auto& names = raw_feature_names();
  m.columns.reserve(names.size());
  for (const auto& name : names) m.columns.push_back({name, ColumnKind::kRaw, false});
  m.values.assign(n * kRawFeatureCount, 0.0);

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t u = begin; u < end; ++u) {
      UserAcc merged;
      for (auto& shard : shards) {
        if (shard.empty()) continue;
        auto& a = shard[u];
        for (std::size_t d = 0; d < 2; ++d) {
          for (std::size_t p = 0; p < 3; ++p) {
            merged.call_count[d][p] += a.call_count[d][p];
            merged.call_time[d][p] += a.call_time[d][p];
            merged.sms_count[d][p] += a.sms_count[d][p];
          }
          merged.call_count_total[d] += a.call_count_total[d];
          merged.call_time_total[d] += a.call_time_total[d];
          merged.sms_total[d] += a.sms_total[d];
          auto append = [](auto& dst, auto& src) {
            dst.insert(dst.end(), src.begin(), src.end());
            src.clear();
            src.shrink_to_fit();
          };
          append(merged.call_days[d], a.call_days[d]);
          append(merged.sms_days[d], a.sms_days[d]);
          append(merged.contacts[d], a.contacts[d]);
        }
      }
      double* row = m.values.data() + u * kRawFeatureCount;
      for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t d = 0; d < 2; ++d) {
          row[slot(kCallCountBase, d, p)] = static_cast<double>(merged.call_count[d][p]);
          row[slot(kCallTimeBase, d, p)] = static_cast<double>(merged.call_time[d][p]);
          row[slot(kSmsBase, d, p)] = static_cast<double>(merged.sms_count[d][p]);
        }
        row[slot(kCallCountBase, 2, p)] =
            static_cast<double>(merged.call_count[0][p] + merged.call_count[1][p]);
        row[slot(kCallTimeBase, 2, p)] =
            static_cast<double>(merged.call_time[0][p] + merged.call_time[1][p]);
        row[slot(kSmsBase, 2, p)] =
            static_cast<double>(merged.sms_count[0][p] + merged.sms_count[1][p]);
      }
      for (std::size_t d = 0; d < 2; ++d) {
        row[slot(kCallCountBase, d, 3)] = static_cast<double>(merged.call_count_total[d]);
        row[slot(kCallTimeBase, d, 3)] = static_cast<double>(merged.call_time_total[d]);
        row[slot(kSmsBase, d, 3)] = static_cast<double>(merged.sms_total[d]);
      }
      for (std::size_t base : {kCallCountBase, kCallTimeBase, kSmsBase}) {
        row[slot(base, 2, 3)] = row[slot(base, 0, 3)] + row[slot(base, 1, 3)];
        for (std::size_t d = 0; d < 3; ++d) {
          const double sum =
              row[slot(base, d, 0)] + row[slot(base, d, 1)] + row[slot(base, d, 2)];
          if (sum != row[slot(base, d, 3)]) {
            throw DataError("day-part buckets do not add up to total for " + m.user_ids[u]);
          }
        }
      }
      for (std::size_t d = 0; d < 2; ++d) {
        sort_unique(merged.call_days[d]);
        sort_unique(merged.sms_days[d]);
        sort_unique(merged.contacts[d]);
      }
      row[kDaysBase + 0] = static_cast<double>(merged.call_days[kIn].size());
      row[kDaysBase + 1] = static_cast<double>(merged.call_days[kOut].size());
      row[kDaysBase + 2] =
          static_cast<double>(union_size(merged.call_days[kIn], merged.call_days[kOut]));
      row[kDaysBase + 3] = static_cast<double>(merged.sms_days[kIn].size());
      row[kDaysBase + 4] = static_cast<double>(merged.sms_days[kOut].size());
      row[kDaysBase + 5] =
          static_cast<double>(union_size(merged.sms_days[kIn], merged.sms_days[kOut]));
      row[kDegreeBase + 0] = static_cast<double>(merged.contacts[kIn].size());
      row[kDegreeBase + 1] = static_cast<double>(merged.contacts[kOut].size());
      row[kDegreeBase + 2] =
          static_cast<double>(union_size(merged.contacts[kIn], merged.contacts[kOut]));
    }
  });
  return m;
}

double log_transform(double x) { return std::log10(x + 1.0); }

FeatureMatrix preprocess(const FeatureMatrix& raw) {
  for (const auto& c : raw.columns) {
    if (c.kind != ColumnKind::kRaw || c.rescaled) {
      throw DataError("preprocess expects raw, unscaled columns; got '" + c.name + "'");
    }
  }
  const std::size_t n = raw.rows();
  const std::size_t k = raw.cols();
  FeatureMatrix out;
  out.user_ids = raw.user_ids;
  out.columns.reserve(2 * k);
  for (const auto& c : raw.columns) out.columns.push_back({c.name, ColumnKind::kRaw, true});
  for (const auto& c : raw.columns) {
    out.columns.push_back({"log-" + c.name, ColumnKind::kLog, true});
  }
  const std::size_t w = 2 * k;
  out.unscaled.resize(n * w);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const double v = raw.at(r, c);
      if (!std::isfinite(v) || v < 0.0) {
        throw DataError("raw feature must be finite and non-negative: " + raw.columns[c].name);
      }
      out.unscaled[r * w + c] = v;
      out.unscaled[r * w + k + c] = log_transform(v);
    }
  }
  out.values.resize(n * w);
  for (std::size_t c = 0; c < w; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, out.unscaled[r * w + c]);
      hi = std::max(hi, out.unscaled[r * w + c]);
    }
    const double span = hi - lo;
    for (std::size_t r = 0; r < n; ++r) {
      out.values[r * w + c] = span > 0.0 ? (out.unscaled[r * w + c] - lo) / span : 0.0;
    }
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SkewRow skew_summary(std::string name, std::span<const double> values) {
  SkewRow row;
  row.column = std::move(name);
  row.count = values.size();
  if (values.empty()) return row;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double mean = sum / static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  row.mean = mean;
  row.std = sorted.size() > 1 ? std::sqrt(ss / static_cast<double>(sorted.size() - 1)) : 0.0;
  row.min = sorted.front();
  row.max = sorted.back();
  row.q1 = quantile_sorted(sorted, 0.25);
  row.q2 = quantile_sorted(sorted, 0.50);
  row.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = *row.q3 - *row.q1;
  if (iqr == 0.0) {
    row.iqr_over_q2 = 0.0;
  } else if (*row.q2 != 0.0) {
    row.iqr_over_q2 = iqr / *row.q2;
  }
  return row;
}

std::vector<SkewRow> skew_report(const FeatureMatrix& m) {
  std::vector<SkewRow> out;
  const bool use_unscaled = !m.unscaled.empty();
  for (std::size_t c = 0; c < m.cols(); ++c) {
    std::vector<double> col(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      col[r] = use_unscaled ? m.unscaled[r * m.cols() + c] : m.at(r, c);
    }
    out.push_back(skew_summary(m.columns[c].name, col));
  }
  return out;
}

void write_skew_csv(std::ostream& out, const std::vector<SkewRow>& rows) {
  out << "column,count,mean,std,min,q1,q2,q3,max,iqr_over_q2\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? io::format_double(*v) : std::string();
  };
  for (const auto& r : rows) {
    out << r.column << ',' << r.count << ',' << opt(r.mean) << ',' << opt(r.std) << ','
        << opt(r.min) << ',' << opt(r.q1) << ',' << opt(r.q2) << ',' << opt(r.q3) << ','
        << opt(r.max) << ',' << opt(r.iqr_over_q2) << '\n';
  }
}

PcaResult pca(const FeatureMatrix& m, std::span<const std::size_t> columns, std::size_t k) {
  const std::size_t n = m.rows();
  const std::size_t p = columns.size();
  if (n < 2) throw DataError("PCA needs at least 2 rows");
  if (p == 0) throw UsageError("PCA needs at least one column");
  if (k < 1 || k > p) throw UsageError("PCA k must be in [1, column count]");
  for (std::size_t c : columns) {
    if (c >= m.cols()) throw UsageError("PCA column index out of range");
  }

  Eigen::MatrixXd x(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) x(r, j) = m.at(r, columns[j]);
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DataError("eigen decomposition failed");

  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = solver.eigenvectors();
  double total = 0.0;
  for (Eigen::Index i = 0; i < evals.size(); ++i) total += std::max(0.0, evals(i));

  PcaResult out;
  for (std::size_t c : columns) out.columns.push_back(m.columns[c].name);
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index idx = static_cast<Eigen::Index>(p - 1 - i);
    const double lambda = std::max(0.0, evals(idx));
    Eigen::VectorXd v = evecs.col(idx);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.eigenvalues.push_back(lambda);
    out.eigenvectors.emplace_back(v.data(), v.data() + v.size());
    out.explained_variance_ratio.push_back(total > 0.0 ? lambda / total : 0.0);
  }
  return out;
}

void write_pca_csv(std::ostream& out, const PcaResult& r) {
  out << "component,eigenvalue,explained_variance_ratio";
  for (const auto& c : r.columns) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    out << i << ',' << io::format_double(r.eigenvalues[i]) << ','
        << io::format_double(r.explained_variance_ratio[i]);
    for (double v : r.eigenvectors[i]) out << ',' << io::format_double(v);
    out << '\n';
  }
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "user_id";
  for (const auto& c : m.columns) out << ',' << c.name;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.user_ids[r];
    for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << io::format_double(m.at(r, c));
    out << '\n';
  }
}

FeatureMatrix read_feature_csv(std::istream& in, bool rescaled) {
  FeatureMatrix m;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = io::split_fields(view);
    if (!header) {
      if (fields.empty() || fields[0] != "user_id") throw ParseError(lineno, "expected user_id header");
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const bool is_log = fields[i].starts_with("log-");
        m.columns.push_back(
            {std::string(fields[i]), is_log ? ColumnKind::kLog : ColumnKind::kRaw, rescaled});
      }
      header = true;
      continue;
    }
    if (fields.size() != m.cols() + 1) throw ParseError(lineno, "wrong field count");
    if (!m.user_ids.empty() && !(m.user_ids.back() < fields[0])) {
      throw ParseError(lineno, "user ids must be strictly ascending");
    }
    m.user_ids.emplace_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      m.values.push_back(io::parse_double(fields[i], lineno));
    }
  }
  if (!header) throw DataError("empty feature file");
  return m;
}

}  // namespace cdrdemo
