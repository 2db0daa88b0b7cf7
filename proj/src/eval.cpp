#include "cdrdemo/eval.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include <json.hpp>

#include "cdrdemo/io.hpp"

namespace cdrdemo {

std::string degree_bin(std::uint32_t degree, std::span<const std::uint32_t> buckets) {
  std::uint32_t lower = 0;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (degree <= buckets[i]) {
      if (i == 0) return "[1," + std::to_string(buckets[0]) + "]";
      return "(" + std::to_string(lower) + "," + std::to_string(buckets[i]) + "]";
    }
    lower = buckets[i];
  }
  return ">" + std::to_string(lower);
}

namespace {

std::string dts_label(std::uint32_t d) {
  return d == kUnreachable ? "unreachable" : std::to_string(d);
}

void tally(StratumRow& row, bool has_prediction, bool hit) {
  ++row.validation;
  if (has_prediction) {
    ++row.evaluated;
    row.correct += hit;
  }
}

template <typename Key>
std::vector<StratumRow> flatten(const std::map<Key, StratumRow>& m) {
  std::vector<StratumRow> out;
  for (const auto& [k, row] : m) out.push_back(row);
  return out;
}

}  // namespace

EvalReport evaluate(std::span<const Category> predicted,
                    std::span<const std::pair<NodeId, Category>> targets,
                    const TopoMetrics& topo, std::size_t categories,
                    std::span<const std::uint32_t> degree_buckets) {
  if (targets.empty()) throw DataError("no validation nodes to evaluate");
  if (!std::is_sorted(degree_buckets.begin(), degree_buckets.end()) || degree_buckets.empty()) {
    throw UsageError("degree buckets must be a non-empty ascending list");
  }
  EvalReport r;
  r.by_age_group.resize(categories);
  for (std::size_t k = 0; k < categories; ++k) r.by_age_group[k].bin = std::to_string(k);
  std::map<std::uint32_t, StratumRow> sin, dts;
  std::vector<StratumRow> deg(degree_buckets.size() + 1);
  for (std::size_t i = 0; i < deg.size(); ++i) {
    deg[i].bin = degree_bin(i < degree_buckets.size() ? degree_buckets[i]
                                                      : degree_buckets.back() + 1,
                            degree_buckets);
  }
  std::map<std::pair<std::size_t, std::uint32_t>, CrossCell> cross;

  for (auto [x, truth] : targets) {
    if (x >= predicted.size()) throw DataError("validation node outside the graph");
    if (truth < 0 || static_cast<std::size_t>(truth) >= categories) {
      throw DataError("validation category out of range");
    }
    const bool has = predicted[x] != kNoCategory;
    const bool hit = has && predicted[x] == truth;
    ++r.validation;
    if (has) {
      ++r.evaluated;
      r.correct += hit;
    }
    tally(r.by_age_group[static_cast<std::size_t>(truth)], has, hit);
    auto& s = sin[topo.sin[x]];
    s.bin = std::to_string(topo.sin[x]);
    tally(s, has, hit);
    auto& d = dts[topo.dts[x]];
    d.bin = dts_label(topo.dts[x]);
    tally(d, has, hit);
    const auto b = static_cast<std::size_t>(
        std::lower_bound(degree_buckets.begin(), degree_buckets.end(), topo.degree[x]) -
        degree_buckets.begin());
    tally(deg[b], has, hit);
    if (has) {
      auto& c = cross[{b, topo.dts[x]}];
      c.degree_bin = deg[b].bin;
      c.dts = topo.dts[x];
      ++c.evaluated;
      c.correct += hit;
    }
  }
  r.overall_accuracy =
      r.evaluated == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.evaluated);
  r.coverage = static_cast<double>(r.evaluated) / static_cast<double>(r.validation);
  r.by_sin = flatten(sin);
  r.by_dts = flatten(dts);
  // The overflow bucket is reported only when populated.
  if (deg.back().validation == 0) deg.pop_back();
  r.by_degree = std::move(deg);
  for (const auto& [k, c] : cross) r.dts_degree_crosstab.push_back(c);
  return r;
}

namespace {

nlohmann::ordered_json strata_json(const std::vector<StratumRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : rows) {
    arr.push_back({{"bin", s.bin},
                   {"validation", s.validation},
                   {"evaluated", s.evaluated},
                   {"correct", s.correct},
                   {"accuracy", s.accuracy()}});
  }
  return arr;
}

}  // namespace

void write_eval_json(std::ostream& out, const EvalReport& r) {
  nlohmann::ordered_json j;
  j["validation"] = r.validation;
  j["evaluated"] = r.evaluated;
  j["correct"] = r.correct;
  j["overall_accuracy"] = r.overall_accuracy;
  j["coverage"] = r.coverage;
  j["by_age_group"] = strata_json(r.by_age_group);
  j["by_sin"] = strata_json(r.by_sin);
  j["by_dts"] = strata_json(r.by_dts);
  j["by_degree"] = strata_json(r.by_degree);
  auto cross = nlohmann::ordered_json::array();
  for (const auto& c : r.dts_degree_crosstab) {
    cross.push_back({{"degree_bin", c.degree_bin},
                     {"dts", c.dts},
                     {"evaluated", c.evaluated},
                     {"correct", c.correct},
                     {"accuracy", c.evaluated ? static_cast<double>(c.correct) /
                                                    static_cast<double>(c.evaluated)
                                              : 0.0}});
  }
  j["dts_degree_crosstab"] = cross;
  out << j.dump(2) << '\n';
}

void write_strata_csv(std::ostream& out, const EvalReport& r) {
  out << "stratum,bin,validation,evaluated,correct,accuracy\n";
  auto emit = [&](std::string_view name, const std::vector<StratumRow>& rows) {
    for (const auto& s : rows) {
      out << name << ',' << s.bin << ',' << s.validation << ',' << s.evaluated << ','
          << s.correct << ',' << io::format_double(s.accuracy()) << '\n';
    }
  };
  emit("age_group", r.by_age_group);
  emit("sin", r.by_sin);
  emit("dts", r.by_dts);
  emit("degree", r.by_degree);
}

void write_crosstab_csv(std::ostream& out, const EvalReport& r) {
  out << "degree_bin,dts,evaluated,correct,accuracy\n";
  for (const auto& c : r.dts_degree_crosstab) {
    const double acc =
        c.evaluated ? static_cast<double>(c.correct) / static_cast<double>(c.evaluated) : 0.0;
    out << c.degree_bin << ',' << dts_label(c.dts) << ',' << c.evaluated << ',' << c.correct
        << ',' << io::format_double(acc) << '\n';
  }
}

double distribution_guess_accuracy(std::span<const double> guess,
                                   std::span<const std::pair<NodeId, Category>> truth) {
  if (truth.empty()) throw DataError("no validation nodes to evaluate");
  std::vector<double> share(guess.size(), 0.0);
  for (auto [x, c] : truth) {
    if (c < 0 || static_cast<std::size_t>(c) >= guess.size()) {
      throw DataError("validation category out of range");
    }
    share[static_cast<std::size_t>(c)] += 1.0;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < guess.size(); ++k) {
    acc += guess[k] * share[k] / static_cast<double>(truth.size());
  }
  return acc;
}

}  // namespace cdrdemo
