#include "cdrdemo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "cdrdemo/io.hpp"
#include "cdrdemo/parallel.hpp"
#include "cdrdemo/rng.hpp"

namespace cdrdemo {

double MixingKernel::operator()(int a, int b) const {
  const double d = std::abs(a - b);
  const double s2 = 2.0 * sigma * sigma;
  const double off = d - generational_offset;
  return base + diagonal_strength * std::exp(-d * d / s2) +
         offset_strength * std::exp(-off * off / s2);
}

TimeWindow SynthConfig::window() const {
  const EpochSeconds begin = parse_timestamp(window_start, tz());
  return {begin, begin + static_cast<EpochSeconds>(window_days) * 86400};
}

void SynthConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("synth config: ") + what);
  };
  need(population >= 1 && population <= 9'999'999, "population must be in [1, 9999999]");
  need(min_age >= 0, "min_age must be non-negative");
  need(!age_pyramid.empty(), "age_pyramid is empty");
  double total = 0.0;
  for (double w : age_pyramid) {
    need(w >= 0.0 && std::isfinite(w), "age_pyramid weights must be non-negative");
    total += w;
  }
  need(total > 0.0, "age_pyramid has no mass");
  need(gender_split >= 0.0 && gender_split <= 1.0, "gender_split must be in [0,1]");
  need(mean_degree > 0.0, "mean_degree must be positive");
  need(mixing.base >= 0.0 && mixing.diagonal_strength >= 0.0 && mixing.offset_strength >= 0.0,
       "mixing weights must be non-negative");
  need(mixing.sigma > 0.0, "mixing.sigma must be positive");
  need(events.calls_per_edge >= 0.0 && events.sms_per_edge >= 0.0, "event rates must be >= 0");
  need(events.male_activity > 0.0 && events.female_activity > 0.0,
       "activity multipliers must be positive");
  need(events.duration_log_sd >= 0.0, "duration_log_sd must be >= 0");
  need(events.male_outgoing_factor > 0.0, "male_outgoing_factor must be positive");
  need(events.night_weight >= 0.0, "night_weight must be >= 0");
  need(events.incoming_record_fraction >= 0.0 && events.incoming_record_fraction <= 1.0,
       "incoming_record_fraction must be in [0,1]");
  need(seed_fraction >= 0.0 && validation_fraction >= 0.0 &&
           seed_fraction + validation_fraction <= 1.0,
       "seed and validation fractions must be non-negative and sum to at most 1");
  need(window_days > 0, "window_days must be positive");
  need(towers >= 1, "towers must be positive");
}

std::vector<double> default_age_pyramid() {
  // (first age, last age, share)
  const std::tuple<int, int, double> groups[] = {
      {15, 24, 0.121}, {25, 34, 0.3545}, {35, 49, 0.3745}, {50, 79, 0.15}};
  std::vector<double> w;
  for (auto [lo, hi, share] : groups) {
    for (int a = lo; a <= hi; ++a) w.push_back(share / (hi - lo + 1));
  }
  return w;
}

SynthConfig default_synth_config() {
  SynthConfig cfg;
  cfg.age_pyramid = default_age_pyramid();
  return cfg;
}

namespace {

template <typename T>
T get_number(const toml::node& node, std::string_view key) {
  if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node.value<double>()) return *v;
  } else if (auto v = node.value<std::int64_t>()) {
    if (*v < 0 && std::is_unsigned_v<T>) {
      throw UsageError("synth config: '" + std::string(key) + "' must be non-negative");
    }
    return static_cast<T>(*v);
  }
  throw UsageError("synth config: '" + std::string(key) + "' must be a number");
}

void apply_mixing(const toml::table& t, MixingKernel& k) {
  for (const auto& [key, node] : t) {
    const std::string_view name = key.str();
    if (name == "base") k.base = get_number<double>(node, name);
    else if (name == "diagonal_strength") k.diagonal_strength = get_number<double>(node, name);
    else if (name == "generational_offset") k.generational_offset = get_number<double>(node, name);
    else if (name == "offset_strength") k.offset_strength = get_number<double>(node, name);
    else if (name == "sigma") k.sigma = get_number<double>(node, name);
    else throw UsageError("synth config: unknown key mixing." + std::string(name));
  }
}

void apply_events(const toml::table& t, EventRates& e) {
  const std::pair<std::string_view, double EventRates::*> fields[] = {
      {"calls_per_edge", &EventRates::calls_per_edge},
      {"sms_per_edge", &EventRates::sms_per_edge},
      {"male_activity", &EventRates::male_activity},
      {"female_activity", &EventRates::female_activity},
      {"age_activity_slope", &EventRates::age_activity_slope},
      {"duration_log_mean", &EventRates::duration_log_mean},
      {"duration_log_sd", &EventRates::duration_log_sd},
      {"duration_age_slope", &EventRates::duration_age_slope},
      {"male_outgoing_factor", &EventRates::male_outgoing_factor},
      {"night_weight", &EventRates::night_weight},
      {"incoming_record_fraction", &EventRates::incoming_record_fraction},
  };
  for (const auto& [key, node] : t) {
    const std::string_view name = key.str();
    auto it = std::find_if(std::begin(fields), std::end(fields),
                           [&](const auto& f) { return f.first == name; });
    if (it == std::end(fields)) {
      throw UsageError("synth config: unknown key events." + std::string(name));
    }
    e.*(it->second) = get_number<double>(node, name);
  }
}

}  // namespace

SynthConfig parse_synth_config(std::string_view toml_text) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "synth config line " << e.source().begin.line << ": " << e.description();
    throw UsageError(msg.str());
  }
  SynthConfig cfg = default_synth_config();
  for (const auto& [key, node] : doc) {
    const std::string_view name = key.str();
    if (name == "mixing" || name == "events") {
      const auto* t = node.as_table();
      if (!t) throw UsageError("synth config: [" + std::string(name) + "] must be a table");
      if (name == "mixing") apply_mixing(*t, cfg.mixing);
      else apply_events(*t, cfg.events);
    } else if (name == "population") {
      cfg.population = get_number<std::size_t>(node, name);
    } else if (name == "min_age") {
      cfg.min_age = get_number<int>(node, name);
    } else if (name == "age_pyramid") {
      const auto* arr = node.as_array();
      if (!arr) throw UsageError("synth config: age_pyramid must be an array");
      cfg.age_pyramid.clear();
      for (const auto& v : *arr) cfg.age_pyramid.push_back(get_number<double>(v, name));
    } else if (name == "gender_split") {
      cfg.gender_split = get_number<double>(node, name);
    } else if (name == "mean_degree") {
      cfg.mean_degree = get_number<double>(node, name);
    } else if (name == "seed_fraction") {
      cfg.seed_fraction = get_number<double>(node, name);
    } else if (name == "validation_fraction") {
      cfg.validation_fraction = get_number<double>(node, name);
    } else if (name == "window_start") {
      auto v = node.value<std::string>();
      if (!v) throw UsageError("synth config: window_start must be a string");
      cfg.window_start = *v;
    } else if (name == "window_days") {
      cfg.window_days = get_number<int>(node, name);
    } else if (name == "utc_offset_minutes") {
      cfg.utc_offset_minutes = get_number<int>(node, name);
    } else if (name == "towers") {
      cfg.towers = get_number<std::size_t>(node, name);
    } else if (name == "rng_seed") {
      cfg.rng_seed = get_number<std::uint64_t>(node, name);
    } else {
      throw UsageError("synth config: unknown key " + std::string(name));
    }
  }
  cfg.validate();
  try {
    (void)cfg.window();
  } catch (const DataError& e) {
    throw UsageError(std::string("synth config: window_start: ") + e.what());
  }
  return cfg;
}

SynthConfig read_synth_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError&) {
    throw UsageError("cannot read synth config " + path.string());
  }
  return parse_synth_config(text);
}

std::string format_synth_config(const SynthConfig& cfg) {
  toml::array pyramid;
  for (double w : cfg.age_pyramid) pyramid.push_back(w);
  const auto& k = cfg.mixing;
  const auto& e = cfg.events;
  toml::table doc{
      {"population", static_cast<std::int64_t>(cfg.population)},
      {"min_age", cfg.min_age},
      {"age_pyramid", pyramid},
      {"gender_split", cfg.gender_split},
      {"mean_degree", cfg.mean_degree},
      {"seed_fraction", cfg.seed_fraction},
      {"validation_fraction", cfg.validation_fraction},
      {"window_start", cfg.window_start},
      {"window_days", cfg.window_days},
      {"utc_offset_minutes", cfg.utc_offset_minutes},
      {"towers", static_cast<std::int64_t>(cfg.towers)},
      {"rng_seed", static_cast<std::int64_t>(cfg.rng_seed)},
      {"mixing", toml::table{{"base", k.base},
                             {"diagonal_strength", k.diagonal_strength},
                             {"generational_offset", k.generational_offset},
                             {"offset_strength", k.offset_strength},
                             {"sigma", k.sigma}}},
      {"events", toml::table{{"calls_per_edge", e.calls_per_edge},
                             {"sms_per_edge", e.sms_per_edge},
                             {"male_activity", e.male_activity},
                             {"female_activity", e.female_activity},
                             {"age_activity_slope", e.age_activity_slope},
                             {"duration_log_mean", e.duration_log_mean},
                             {"duration_log_sd", e.duration_log_sd},
                             {"duration_age_slope", e.duration_age_slope},
                             {"male_outgoing_factor", e.male_outgoing_factor},
                             {"night_weight", e.night_weight},
                             {"incoming_record_fraction", e.incoming_record_fraction}}},
  };
  std::ostringstream out;
  out << doc << '\n';
  return out.str();
}

namespace {

std::string user_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%07zu", i);
  return buf;
}

}  // namespace

LabelStore generate_population(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.population;
  std::vector<double> cumulative(cfg.age_pyramid.size());
  std::partial_sum(cfg.age_pyramid.begin(), cfg.age_pyramid.end(), cumulative.begin());
  const double total = cumulative.back();

  LabelStore labels;
  labels.user_ids.reserve(n);
  labels.age.reserve(n);
  labels.gender.reserve(n);
  Rng rng(derive_seed(cfg.rng_seed, "population"));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    // First year whose cumulative weight exceeds u; zero-weight years are
    // never selected.
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    while (cfg.age_pyramid[static_cast<std::size_t>(it - cumulative.begin())] == 0.0) --it;
    const int age = cfg.min_age + static_cast<int>(it - cumulative.begin());
    labels.user_ids.push_back(user_id(i));
    labels.age.emplace_back(age);
    labels.gender.emplace_back(rng.bernoulli(cfg.gender_split) ? Gender::kMale : Gender::kFemale);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(derive_seed(cfg.rng_seed, "roles"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
  const auto n_seed = static_cast<std::size_t>(std::llround(cfg.seed_fraction * n));
  const auto n_val =
      std::min(n - n_seed, static_cast<std::size_t>(std::llround(cfg.validation_fraction * n)));
  labels.role.assign(n, Role::kUnlabeled);
  for (std::size_t i = 0; i < n_seed; ++i) labels.role[order[i]] = Role::kSeed;
  for (std::size_t i = n_seed; i < n_seed + n_val; ++i) labels.role[order[i]] = Role::kValidation;
  labels.normalize();
  return labels;
}

SocialGraph generate_graph(const LabelStore& labels, const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = labels.size();
  if (n < 2) throw UsageError("graph generation needs at least two users");

  std::vector<int> ages;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels.age[i]) throw DataError("synthetic user without age: " + labels.user_ids[i]);
    ages.push_back(*labels.age[i]);
  }
  const int lo = *std::min_element(ages.begin(), ages.end());
  const int hi = *std::max_element(ages.begin(), ages.end());
  std::vector<std::vector<NodeId>> members(static_cast<std::size_t>(hi - lo + 1));
  for (std::size_t i = 0; i < n; ++i) {
    members[static_cast<std::size_t>(ages[i] - lo)].push_back(static_cast<NodeId>(i));
  }
  std::vector<std::size_t> buckets;
  for (std::size_t b = 0; b < members.size(); ++b) {
    if (!members[b].empty()) buckets.push_back(b);
  }

  struct Block {
    std::size_t a, b;
    double weight;  // unscaled expected edge count
  };
  std::vector<Block> blocks;
  double total = 0.0;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    for (std::size_t j = i; j < buckets.size(); ++j) {
      const std::size_t a = buckets[i], b = buckets[j];
      const double na = static_cast<double>(members[a].size());
      const double nb = static_cast<double>(members[b].size());
      const double pairs = a == b ? na * (na - 1.0) / 2.0 : na * nb;
      const double w = pairs * cfg.mixing(lo + static_cast<int>(a), lo + static_cast<int>(b));
      blocks.push_back({a, b, w});
      total += w;
    }
  }
  if (!(total > 0.0)) throw UsageError("mixing kernel gives zero edge propensity");
  const double scale = cfg.mean_degree * static_cast<double>(n) / 2.0 / total;

  const std::uint64_t graph_seed = derive_seed(cfg.rng_seed, "graph");
  const unsigned threads = std::max(1u, cfg.threads);
  std::vector<std::vector<std::pair<NodeId, NodeId>>> shards(threads);
  parallel_for(blocks.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
    auto& out = shards[chunk];
    for (std::size_t p = begin; p < end; ++p) {
      const Block& blk = blocks[p];
      if (blk.weight == 0.0) continue;
      Rng rng(derive_seed(graph_seed, p));
      const auto& ma = members[blk.a];
      const auto& mb = members[blk.b];
      const std::uint64_t count = rng.poisson(blk.weight * scale);
      for (std::uint64_t e = 0; e < count; ++e) {
        NodeId u = ma[rng.below(ma.size())];
        NodeId v;
        if (blk.a == blk.b) {
          // Uniform over the other members of the bucket.
          std::size_t k = rng.below(ma.size() - 1);
          if (ma[k] >= u) ++k;
          v = ma[k];
        } else {
          v = mb[rng.below(mb.size())];
        }
        out.emplace_back(std::min(u, v), std::max(u, v));
      }
    }
  });
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (auto& s : shards) edges.insert(edges.end(), s.begin(), s.end());
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return SocialGraph::from_edges(labels.user_ids, std::move(edges));
}

namespace {

struct EventDrawer {
  const SynthConfig& cfg;
  const TimeWindow& window;
  std::vector<double> hour_cumulative;
  std::int64_t days;

  EventDrawer(const SynthConfig& c, const TimeWindow& w) : cfg(c), window(w) {
    double acc = 0.0;
    for (int h = 0; h < 24; ++h) {
      acc += (h >= 7 && h < 19) ? 1.0 : cfg.events.night_weight;
      hour_cumulative.push_back(acc);
    }
    days = (window.end - window.begin + 86399) / 86400;
  }

  EpochSeconds timestamp(Rng& rng) const {
    for (;;) {
      const auto day = static_cast<EpochSeconds>(rng.below(static_cast<std::uint64_t>(days)));
      const double u = rng.uniform() * hour_cumulative.back();
      const auto hour = static_cast<EpochSeconds>(
          std::upper_bound(hour_cumulative.begin(), hour_cumulative.end(), u) -
          hour_cumulative.begin());
      const auto sec = static_cast<EpochSeconds>(rng.below(3600));
      const EpochSeconds t = window.begin + day * 86400 + std::min<EpochSeconds>(hour, 23) * 3600 + sec;
      if (window.contains(t)) return t;
    }
  }
};

double activity(const EventRates& e, int age, Gender g) {
  const double base = g == Gender::kMale ? e.male_activity : e.female_activity;
  return base * std::max(0.1, 1.0 + e.age_activity_slope * (age - 35));
}

}  // namespace

EventStreams generate_events(const SocialGraph& g, const LabelStore& labels,
                             const SynthConfig& cfg, const TimeWindow& window) {
  cfg.validate();
  if (!(window.end > window.begin)) throw UsageError("event window is empty");
  const auto& ev = cfg.events;
  const std::size_t n = g.node_count();
  std::vector<int> age(n);
  std::vector<Gender> gender(n);
  std::vector<double> act(n);
  for (NodeId x = 0; x < n; ++x) {
    const auto i = labels.find(g.external_id(x));
    if (!i || !labels.age[*i] || !labels.gender[*i]) {
      throw DataError("no synthetic demographics for " + g.external_id(x));
    }
    age[x] = *labels.age[*i];
    gender[x] = *labels.gender[*i];
    act[x] = activity(ev, age[x], gender[x]);
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId x = 0; x < n; ++x) {
    for (NodeId y : g.neighbors(x)) {
      if (x < y) edges.emplace_back(x, y);
    }
  }

  const EventDrawer drawer(cfg, window);
  const std::uint64_t seed = derive_seed(cfg.rng_seed, "events");
  const unsigned threads = std::max(1u, cfg.threads);
  std::vector<EventStreams> shards(threads);
  parallel_for(edges.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
    auto& out = shards[chunk];
    for (std::size_t e = begin; e < end; ++e) {
      Rng rng(derive_seed(seed, e));
      const auto [u, v] = edges[e];
      const double mult = std::sqrt(act[u] * act[v]);
      std::uint64_t calls = rng.poisson(ev.calls_per_edge * mult);
      std::uint64_t sms = rng.poisson(ev.sms_per_edge * mult);
      if (calls + sms == 0) {
        if (ev.calls_per_edge > 0.0) calls = 1;
        else if (ev.sms_per_edge > 0.0) sms = 1;
      }
      for (std::uint64_t k = 0; k < calls; ++k) {
        const NodeId from = rng.bernoulli(0.5) ? u : v;
        const NodeId to = from == u ? v : u;
        CdrRecord r;
        r.timestamp = drawer.timestamp(rng);
        double d = rng.lognormal(ev.duration_log_mean + ev.duration_age_slope * (age[from] - 35),
                                 ev.duration_log_sd);
        if (gender[from] == Gender::kMale) d *= ev.male_outgoing_factor;
        r.duration_s = std::max<std::int64_t>(1, std::llround(d));
        const bool incoming = rng.bernoulli(ev.incoming_record_fraction);
        r.caller = g.external_id(incoming ? to : from);
        r.callee = g.external_id(incoming ? from : to);
        r.direction = incoming ? Direction::kIncoming : Direction::kOutgoing;
        r.tower = "T" + std::to_string(rng.below(cfg.towers));
        out.calls.push_back(std::move(r));
      }
      for (std::uint64_t k = 0; k < sms; ++k) {
        const NodeId from = rng.bernoulli(0.5) ? u : v;
        const NodeId to = from == u ? v : u;
        SmsRecord r;
        r.timestamp = drawer.timestamp(rng);
        const bool incoming = rng.bernoulli(ev.incoming_record_fraction);
        r.sender = g.external_id(incoming ? to : from);
        r.receiver = g.external_id(incoming ? from : to);
        r.direction = incoming ? Direction::kIncoming : Direction::kOutgoing;
        out.sms.push_back(std::move(r));
      }
    }
  });

  EventStreams all;
  for (auto& s : shards) {
    std::move(s.calls.begin(), s.calls.end(), std::back_inserter(all.calls));
    std::move(s.sms.begin(), s.sms.end(), std::back_inserter(all.sms));
  }
  std::sort(all.calls.begin(), all.calls.end(), [](const CdrRecord& a, const CdrRecord& b) {
    return std::tie(a.timestamp, a.caller, a.callee, a.duration_s, a.direction, a.tower) <
           std::tie(b.timestamp, b.caller, b.callee, b.duration_s, b.direction, b.tower);
  });
  std::sort(all.sms.begin(), all.sms.end(), [](const SmsRecord& a, const SmsRecord& b) {
    return std::tie(a.timestamp, a.sender, a.receiver, a.direction) <
           std::tie(b.timestamp, b.sender, b.receiver, b.direction);
  });
  return all;
}

SynthData synthesize(const SynthConfig& cfg) {
  SynthData d;
  d.labels = generate_population(cfg);
  d.graph = generate_graph(d.labels, cfg);
  d.events = generate_events(d.graph, d.labels, cfg, cfg.window());
  return d;
}

void write_synth_data(const std::filesystem::path& dir, const SynthData& data,
                      const SynthConfig& cfg) {
  std::ostringstream calls, sms, labels;
  write_cdr_csv(calls, data.events.calls, cfg.tz());
  write_sms_csv(sms, data.events.sms, cfg.tz());
  LabelStore published = data.labels;
  for (std::size_t i = 0; i < published.size(); ++i) {
    if (published.role[i] == Role::kUnlabeled) {
      published.age[i].reset();
      published.gender[i].reset();
    }
  }
  write_labels_csv(labels, published);
  io::write_file(dir / "calls.csv", calls.str());
  io::write_file(dir / "sms.csv", sms.str());
  io::write_file(dir / "labels.csv", labels.str());
}

}  // namespace cdrdemo
