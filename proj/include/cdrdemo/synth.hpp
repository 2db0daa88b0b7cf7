#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cdrdemo/features.hpp"
#include "cdrdemo/graph.hpp"
#include "cdrdemo/labels.hpp"
#include "cdrdemo/records.hpp"

namespace cdrdemo {

// Relative edge propensity between ages a and b:
//   base + diagonal_strength * exp(-d^2 / 2 sigma^2)
//        + offset_strength * exp(-(d - generational_offset)^2 / 2 sigma^2),  d = |a - b|
struct MixingKernel {
  double base = 1.0;
  double diagonal_strength = 20.0;
  double generational_offset = 25.0;
  double offset_strength = 4.0;
  double sigma = 3.0;

  double operator()(int a, int b) const;
};

struct EventRates {
  // Expected calls / SMS per edge over the window, before activity
  // multipliers. Every edge carries at least one event unless both are 0.
  double calls_per_edge = 6.0;
  double sms_per_edge = 4.0;
  // Per-user activity: gender multiplier times max(0.1, 1 + slope * (age - 35)).
  // An edge's rate is scaled by the geometric mean of its endpoints.
  double male_activity = 1.0;
  double female_activity = 1.0;
  double age_activity_slope = 0.0;
  // Durations are lognormal in seconds, shifted by duration_age_slope per
  // year of the caller's age relative to 35, and multiplied by
  // male_outgoing_factor when a man places the call.
  double duration_log_mean = 4.5;
  double duration_log_sd = 1.0;
  double duration_age_slope = 0.0;
  double male_outgoing_factor = 1.25;
  // Hourly weight of hours outside 07:00-19:00 relative to daytime hours.
  double night_weight = 0.5;
  // Fraction of records logged from the recipient's side (direction incoming).
  double incoming_record_fraction = 0.25;
};

struct SynthConfig {
  std::size_t population = 10000;
  int min_age = 15;
  // Weight of each year of age starting at min_age.
  std::vector<double> age_pyramid;
  double gender_split = 0.5683;  // fraction male
  MixingKernel mixing;
  double mean_degree = 10.0;
  EventRates events;
  double seed_fraction = 0.1;
  double validation_fraction = 0.3;
  std::string window_start = "2009-01-01T00:00:00";
  int window_days = 90;
  int utc_offset_minutes = 0;
  std::size_t towers = 50;
  std::uint64_t rng_seed = 1;
  unsigned threads = 1;

  TimeZone tz() const { return {utc_offset_minutes}; }
  TimeWindow window() const;
  // Throws UsageError on out-of-range values.
  void validate() const;
};

// Flat within each default age group (<25, 25-34, 35-49, 50-79, starting at
// 15), with group shares 12.1%, 35.45%, 37.45% and 15%.
std::vector<double> default_age_pyramid();
SynthConfig default_synth_config();

// Reads a TOML document. Top-level keys mirror SynthConfig; the kernel and
// event parameters live in [mixing] and [events]. Unknown keys are errors.
SynthConfig parse_synth_config(std::string_view toml_text);
SynthConfig read_synth_config(const std::filesystem::path& path);
std::string format_synth_config(const SynthConfig& cfg);

// User ids are "u" followed by the 7-digit index, so sorted order equals
// generation order. Every user carries age and gender; roles are drawn by a
// seeded shuffle (seed_fraction seeds, then validation_fraction validation).
LabelStore generate_population(const SynthConfig& cfg);

// Block model over single-year age buckets: each bucket pair draws a
// Poisson number of uniformly placed edges with mean proportional to
// n_a * n_b * K(a, b), scaled so the expected degree is mean_degree.
// Duplicates are merged. Contains every user, including isolated ones.
SocialGraph generate_graph(const LabelStore& labels, const SynthConfig& cfg);

struct EventStreams {
  std::vector<CdrRecord> calls;
  std::vector<SmsRecord> sms;
};

// Records are sorted by timestamp and then by their fields.
EventStreams generate_events(const SocialGraph& g, const LabelStore& labels,
                             const SynthConfig& cfg, const TimeWindow& window);

struct SynthData {
  LabelStore labels;
  SocialGraph graph;
  EventStreams events;
};

SynthData synthesize(const SynthConfig& cfg);

// Writes calls.csv, sms.csv and labels.csv under `dir`. Unlabeled users are
// listed without age or gender.
void write_synth_data(const std::filesystem::path& dir, const SynthData& data,
                      const SynthConfig& cfg);

}  // namespace cdrdemo
