#include "cdrdemo/records.hpp"

#include <chrono>
#include <cstdio>
#include <istream>
#include <ostream>

#include "cdrdemo/common.hpp"
#include "cdrdemo/io.hpp"

namespace cdrdemo {

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw DataError("truncated timestamp");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') throw DataError("bad digit in timestamp");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

void expect_char(std::string_view s, std::size_t pos, char c) {
  if (pos >= s.size() || s[pos] != c) throw DataError("malformed timestamp");
}

Direction parse_direction(std::string_view s, std::size_t line) {
  if (s == "outgoing" || s == "out") return Direction::kOutgoing;
  if (s == "incoming" || s == "in") return Direction::kIncoming;
  throw ParseError(line, "bad direction '" + std::string(s) + "'");
}

template <typename Fn>
void guarded(std::size_t line, std::vector<RowError>* errors, Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    if (!errors) throw;
    errors->push_back({e.line(), e.what()});
  } catch (const DataError& e) {
    if (!errors) throw ParseError(line, e.what());
    errors->push_back({line, "line " + std::to_string(line) + ": " + e.what()});
  }
}

}  // namespace

std::string_view to_string(Direction d) {
  return d == Direction::kOutgoing ? "outgoing" : "incoming";
}

EpochSeconds parse_timestamp(std::string_view text, TimeZone tz) {
  using namespace std::chrono;
  const int y = digits(text, 0, 4);
  expect_char(text, 4, '-');
  const int mo = digits(text, 5, 2);
  expect_char(text, 7, '-');
  const int d = digits(text, 8, 2);
  if (text.size() < 11 || (text[10] != 'T' && text[10] != ' ')) {
    throw DataError("malformed timestamp");
  }
  const int hh = digits(text, 11, 2);
  expect_char(text, 13, ':');
  const int mm = digits(text, 14, 2);
  expect_char(text, 16, ':');
  const int ss = digits(text, 17, 2);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) {
    throw DataError("timestamp out of range: '" + std::string(text) + "'");
  }
  int offset_minutes = tz.utc_offset_minutes;
  const std::string_view rest = text.substr(19);
  if (rest == "Z") {
    offset_minutes = 0;
  } else if (!rest.empty()) {
    if (rest.size() != 6 || (rest[0] != '+' && rest[0] != '-') || rest[3] != ':') {
      throw DataError("bad timezone suffix in '" + std::string(text) + "'");
    }
    const int oh = digits(rest, 1, 2);
    const int om = digits(rest, 4, 2);
    offset_minutes = (rest[0] == '-' ? -1 : 1) * (oh * 60 + om);
  }
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<EpochSeconds>(days_since_epoch) * 86400 + hh * 3600 + mm * 60 + ss -
         static_cast<EpochSeconds>(offset_minutes) * 60;
}

std::string format_timestamp(EpochSeconds t, TimeZone tz) {
  using namespace std::chrono;
  const EpochSeconds local = t + static_cast<EpochSeconds>(tz.utc_offset_minutes) * 60;
  EpochSeconds days = local / 86400;
  EpochSeconds secs = local % 86400;
  if (secs < 0) {
    secs += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(secs / 3600),
                static_cast<int>((secs / 60) % 60), static_cast<int>(secs % 60));
  return buf;
}

std::vector<CdrRecord> read_cdr_csv(std::istream& in, TimeZone tz,
                                    std::vector<RowError>* errors) {
  std::vector<CdrRecord> out;
  io::for_each_row(in, kCdrHeader, [&](const auto& f, std::size_t line) {
    guarded(line, errors, [&] {
      if (f.size() != 6) throw ParseError(line, "expected 6 fields");
      CdrRecord r;
      r.caller = std::string(f[0]);
      r.callee = std::string(f[1]);
      if (r.caller.empty() || r.callee.empty()) throw ParseError(line, "empty id");
      r.timestamp = parse_timestamp(f[2], tz);
      r.duration_s = io::parse_int(f[3], line);
      if (r.duration_s < 0) throw ParseError(line, "negative duration");
      r.direction = parse_direction(f[4], line);
      r.tower = std::string(f[5]);
      out.push_back(std::move(r));
    });
  });
  return out;
}

std::vector<SmsRecord> read_sms_csv(std::istream& in, TimeZone tz,
                                    std::vector<RowError>* errors) {
  std::vector<SmsRecord> out;
  io::for_each_row(in, kSmsHeader, [&](const auto& f, std::size_t line) {
    guarded(line, errors, [&] {
      if (f.size() != 4) throw ParseError(line, "expected 4 fields");
      SmsRecord r;
      r.sender = std::string(f[0]);
      r.receiver = std::string(f[1]);
      if (r.sender.empty() || r.receiver.empty()) throw ParseError(line, "empty id");
      r.timestamp = parse_timestamp(f[2], tz);
      r.direction = parse_direction(f[3], line);
      out.push_back(std::move(r));
    });
  });
  return out;
}

void write_cdr_csv(std::ostream& out, const std::vector<CdrRecord>& records,
                   TimeZone tz) {
  out << kCdrHeader << '\n';
  for (const auto& r : records) {
    out << r.caller << ',' << r.callee << ',' << format_timestamp(r.timestamp, tz) << ','
        << r.duration_s << ',' << to_string(r.direction) << ',' << r.tower << '\n';
  }
}

void write_sms_csv(std::ostream& out, const std::vector<SmsRecord>& records,
                   TimeZone tz) {
  out << kSmsHeader << '\n';
  for (const auto& r : records) {
    out << r.sender << ',' << r.receiver << ',' << format_timestamp(r.timestamp, tz) << ','
        << to_string(r.direction) << '\n';
  }
}

}  // namespace cdrdemo
