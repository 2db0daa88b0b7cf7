#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrdemo/records.hpp"

namespace cdrdemo {

enum class ColumnKind : std::uint8_t { kRaw, kLog };

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::kRaw;
  bool rescaled = false;
};

// Row-major per-user feature table. Rows are ordered by external user id,
// which is also the NodeId order of a graph built from the same records.
struct FeatureMatrix {
  std::vector<std::string> user_ids;
  std::vector<ColumnInfo> columns;
  std::vector<double> values;
  // After preprocess(): the same shape as `values`, holding the raw and
  // log-transformed numbers before rescaling. Empty for raw matrices.
  std::vector<double> unscaled;

  std::size_t rows() const { return user_ids.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  std::vector<double> column(std::size_t c) const;
  std::optional<std::size_t> column_index(std::string_view name) const;
  std::optional<std::size_t> row_index(std::string_view user) const;
};

// The 45 raw column names in their fixed order:
//   12 call counts   {in,out,all}-count-{weekdaylight,weeknight,weekend,total}
//   12 call seconds  {in,out,all}-time-{...}
//   12 sms counts    {in,out,all}-sms-{...}
//    6 contact days  call-days-{in,out,all}, sms-days-{in,out,all}
//    3 degrees       in-degree, out-degree, degree
const std::vector<std::string>& raw_feature_names();
inline constexpr std::size_t kRawFeatureCount = 45;

struct DaySplit {
  // Weekday local hours [daylight_begin, daylight_end) are "daylight"; the
  // rest of a weekday is "night"; Saturday and Sunday are "weekend".
  int daylight_begin_hour = 7;
  int daylight_end_hour = 19;
};

enum class DayPart : std::uint8_t { kWeekdayLight = 0, kWeekNight = 1, kWeekend = 2 };

DayPart classify_day_part(EpochSeconds t, TimeZone tz, const DaySplit& split);

struct TimeWindow {
  EpochSeconds begin = std::numeric_limits<EpochSeconds>::min();
  EpochSeconds end = std::numeric_limits<EpochSeconds>::max();  // exclusive
  bool contains(EpochSeconds t) const { return t >= begin && t < end; }
};

struct ExtractOptions {
  TimeWindow window;
  DaySplit day_split;
  TimeZone tz;
  unsigned threads = 1;
};

struct ExtractStats {
  std::size_t calls_used = 0;
  std::size_t sms_used = 0;
  std::size_t skipped_outside_window = 0;
  std::size_t skipped_self = 0;
};

// Every id appearing in any record gets a row, even if all of its records
// fall outside the window.
FeatureMatrix extract_features(std::span<const CdrRecord> calls,
                               std::span<const SmsRecord> sms, const ExtractOptions& opts,
                               ExtractStats* stats = nullptr);

// Appends log10(x + 1) of every raw column, then min-max rescales all
// columns to [0, 1] (constant columns become 0). The result has one raw and
// one `log-` column per input column; `unscaled` keeps the pre-rescale
// values.
FeatureMatrix preprocess(const FeatureMatrix& raw);

double log_transform(double x);

struct SkewRow {
  std::string column;
  std::size_t count = 0;
  std::optional<double> mean, std, min, q1, q2, q3, max, iqr_over_q2;
};

// Type-7 quantile (linear interpolation between order statistics) of
// sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

SkewRow skew_summary(std::string name, std::span<const double> values);
// Uses `unscaled` values when present, so log columns report log-scale
// statistics.
std::vector<SkewRow> skew_report(const FeatureMatrix& m);
void write_skew_csv(std::ostream& out, const std::vector<SkewRow>& rows);

struct PcaResult {
  std::vector<double> eigenvalues;
  // k rows, each of length `columns.size()`.
  std::vector<std::vector<double>> eigenvectors;
  std::vector<double> explained_variance_ratio;
  std::vector<std::string> columns;
};

// Top-k eigenpairs of the sample covariance (n - 1 denominator) of the
// selected columns. Each eigenvector's largest-magnitude component is made
// positive.
PcaResult pca(const FeatureMatrix& m, std::span<const std::size_t> columns, std::size_t k);
void write_pca_csv(std::ostream& out, const PcaResult& r);

// `user_id,<columns...>`. Reading infers kind from the `log-` prefix.
void write_feature_csv(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_feature_csv(std::istream& in, bool rescaled);

}  // namespace cdrdemo
