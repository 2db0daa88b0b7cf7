#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdrdemo {

// Direction is relative to the first id column of a record. An outgoing
// record means the first column initiated the communication; an incoming
// record means the second column initiated it.
enum class Direction : std::uint8_t { kIncoming, kOutgoing };

std::string_view to_string(Direction d);

// Seconds since 1970-01-01T00:00:00Z.
using EpochSeconds = std::int64_t;

// A fixed UTC offset. Timestamps without an explicit offset are read in
// this zone, and day-part bucketing is done in its local time.
struct TimeZone {
  int utc_offset_minutes = 0;
};

// Parses `YYYY-MM-DDTHH:MM:SS` with an optional `Z` or `+HH:MM`/`-HH:MM`
// suffix. Throws DataError on malformed input.
EpochSeconds parse_timestamp(std::string_view text, TimeZone tz);
// Formats as naive local time `YYYY-MM-DDTHH:MM:SS` in `tz`.
std::string format_timestamp(EpochSeconds t, TimeZone tz);

struct CdrRecord {
  std::string caller;
  std::string callee;
  EpochSeconds timestamp = 0;
  std::int64_t duration_s = 0;
  Direction direction = Direction::kOutgoing;
  std::string tower;

  const std::string& originator() const {
    return direction == Direction::kOutgoing ? caller : callee;
  }
  const std::string& recipient() const {
    return direction == Direction::kOutgoing ? callee : caller;
  }
};

struct SmsRecord {
  std::string sender;
  std::string receiver;
  EpochSeconds timestamp = 0;
  Direction direction = Direction::kOutgoing;

  const std::string& originator() const {
    return direction == Direction::kOutgoing ? sender : receiver;
  }
  const std::string& recipient() const {
    return direction == Direction::kOutgoing ? receiver : sender;
  }
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

inline constexpr std::string_view kCdrHeader =
    "caller,callee,timestamp_iso8601,duration_s,direction,tower";
inline constexpr std::string_view kSmsHeader =
    "sender,receiver,timestamp_iso8601,direction";

// Readers skip malformed rows and append them to `errors`; with a null
// `errors` the first malformed row throws ParseError.
std::vector<CdrRecord> read_cdr_csv(std::istream& in, TimeZone tz,
                                    std::vector<RowError>* errors = nullptr);
std::vector<SmsRecord> read_sms_csv(std::istream& in, TimeZone tz,
                                    std::vector<RowError>* errors = nullptr);

void write_cdr_csv(std::ostream& out, const std::vector<CdrRecord>& records,
                   TimeZone tz);
void write_sms_csv(std::ostream& out, const std::vector<SmsRecord>& records,
                   TimeZone tz);

}  // namespace cdrdemo
