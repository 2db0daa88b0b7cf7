#include "cdrdemo/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cdrdemo/io.hpp"
#include "cdrdemo/parallel.hpp"

namespace cdrdemo {

namespace {

constexpr double kRowSumTol = 1e-9;

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
}

void check_rows(const ProbabilityState& s) {
  for (std::size_t x = 0; x < s.nodes; ++x) {
    double sum = 0.0;
    for (double v : s.row(x)) {
      if (!(v >= -kRowSumTol && v <= 1.0 + kRowSumTol)) {
        throw std::logic_error("probability outside [0,1] at node " + std::to_string(x));
      }
      sum += v;
    }
    if (std::fabs(sum - 1.0) > kRowSumTol) {
      throw std::logic_error("row " + std::to_string(x) + " lost stochasticity (sum " +
                             io::format_double(sum) + ")");
    }
  }
}

}  // namespace

Category ProbabilityState::argmax(std::size_t x) const {
  const auto r = row(x);
  return static_cast<Category>(std::max_element(r.begin(), r.end()) - r.begin());
}

std::vector<Category> seed_categories(const SocialGraph& g, const LabelStore& labels) {
  std::vector<Category> out(g.node_count(), kNoCategory);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.role[i] != Role::kSeed) continue;
    const auto x = g.find(labels.user_ids[i]);
    if (!x) continue;
    const auto cat = labels.age_category(i);
    if (!cat) throw DataError("seed " + labels.user_ids[i] + " has no age category");
    out[*x] = *cat;
  }
  return out;
}

std::vector<std::pair<NodeId, Category>> validation_targets(const SocialGraph& g,
                                                            const LabelStore& labels) {
  std::vector<std::pair<NodeId, Category>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.role[i] != Role::kValidation) continue;
    const auto x = g.find(labels.user_ids[i]);
    const auto cat = labels.age_category(i);
    if (x && cat) out.emplace_back(*x, *cat);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ProbabilityState init_state(std::span<const Category> seed_category, std::size_t categories,
                            InitMode mode, const ProbabilityState* ml) {
  if (categories < 1) throw UsageError("need at least one category");
  ProbabilityState s;
  s.nodes = seed_category.size();
  s.categories = categories;
  s.values.assign(s.nodes * categories, 1.0 / static_cast<double>(categories));
  if (mode == InitMode::kMl) {
    if (!ml) throw UsageError("ml initialization needs ML probabilities");
    if (ml->nodes != s.nodes || ml->categories != categories) {
      throw DataError("ML probability table does not match the graph");
    }
  }
  for (std::size_t x = 0; x < s.nodes; ++x) {
    auto row = s.row(x);
    const Category c = seed_category[x];
    if (c != kNoCategory) {
      if (c < 0 || static_cast<std::size_t>(c) >= categories) {
        throw DataError("seed category out of range at node " + std::to_string(x));
      }
      std::fill(row.begin(), row.end(), 0.0);
      row[static_cast<std::size_t>(c)] = 1.0;
    } else if (mode == InitMode::kMl) {
      const auto src = ml->row(x);
      double sum = 0.0;
      for (double v : src) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw DataError("invalid ML probability at node " + std::to_string(x));
        }
        sum += v;
      }
      if (!(sum > 0.0)) throw DataError("ML row missing for node " + std::to_string(x));
      const bool renorm = std::fabs(sum - 1.0) > kRowSumTol;
      for (std::size_t a = 0; a < categories; ++a) row[a] = renorm ? src[a] / sum : src[a];
    }
  }
  return s;
}

ProbabilityState init_state(const SocialGraph& g, const LabelStore& labels, InitMode mode,
                            const PredictionSet* ml) {
  const auto seeds = seed_categories(g, labels);
  const std::size_t c = labels.categories();
  if (mode == InitMode::kUniform) return init_state(seeds, c, mode, nullptr);
  if (!ml) throw UsageError("ml initialization needs ML probabilities");
  if (ml->classes != c) throw DataError("ML class count does not match age categories");
  ProbabilityState table;
  table.nodes = g.node_count();
  table.categories = c;
  table.values.assign(table.nodes * c, 0.0);
  std::size_t next = 0;
  for (NodeId x = 0; x < g.node_count(); ++x) {
    // Both sides are sorted by external id.
    while (next < ml->user_ids.size() && ml->user_ids[next] < g.external_id(x)) ++next;
    if (next < ml->user_ids.size() && ml->user_ids[next] == g.external_id(x)) {
      const auto r = ml->row(next);
      std::copy(r.begin(), r.end(), table.row(x).begin());
    } else if (seeds[x] == kNoCategory) {
      throw DataError("ML row missing for node " + g.external_id(x));
    }
  }
  return init_state(seeds, c, mode, &table);
}

ProbabilityState step(const ProbabilityState& prev, const ProbabilityState& initial,
                      const SocialGraph& g, std::span<const Category> seed_category,
                      double lambda, unsigned threads, std::vector<NodeId>* isolated_seeds) {
  check_lambda(lambda);
  const std::size_t n = g.node_count();
  const std::size_t c = prev.categories;
  if (prev.nodes != n || initial.nodes != n || initial.categories != c ||
      seed_category.size() != n) {
    throw DataError("state, initial state and graph disagree in size");
  }
  ProbabilityState next;
  next.nodes = n;
  next.categories = c;
  next.iteration = prev.iteration + 1;
  next.values.resize(n * c);
  const unsigned workers = std::max(1u, threads);
  std::vector<std::vector<NodeId>> isolated(workers);
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
    std::vector<double> acc(c);
    for (std::size_t x = begin; x < end; ++x) {
      const auto nbrs = g.neighbors(static_cast<NodeId>(x));
      const auto w = g.weights(static_cast<NodeId>(x));
      const auto init = initial.row(x);
      auto out = next.row(x);
      if (nbrs.empty()) {
        if (seed_category[x] == kNoCategory) {
          throw DataError("isolated non-seed node " + g.external_id(static_cast<NodeId>(x)) +
                          " (graph must be pruned)");
        }
        std::copy(init.begin(), init.end(), out.begin());
        isolated[chunk].push_back(static_cast<NodeId>(x));
        continue;
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (std::size_t i = 0; i < nbrs.size(); ++i) {
        const auto src = prev.row(nbrs[i]);
        for (std::size_t a = 0; a < c; ++a) acc[a] += w[i] * src[a];
        wsum += w[i];
      }
      for (std::size_t a = 0; a < c; ++a) {
        out[a] = (1.0 - lambda) * init[a] + lambda * (acc[a] / wsum);
      }
    }
  });
  if (isolated_seeds) {
    isolated_seeds->clear();
    for (const auto& v : isolated) isolated_seeds->insert(isolated_seeds->end(), v.begin(), v.end());
  }
  check_rows(next);
  return next;
}

std::vector<double> step_column(std::span<const double> prev, std::span<const double> initial,
                                const SocialGraph& g, std::span<const Category> seed_category,
                                double lambda) {
  check_lambda(lambda);
  const std::size_t n = g.node_count();
  std::vector<double> out(n);
  for (NodeId x = 0; x < n; ++x) {
    const auto nbrs = g.neighbors(x);
    const auto w = g.weights(x);
    if (nbrs.empty()) {
      if (seed_category[x] == kNoCategory) {
        throw DataError("isolated non-seed node " + g.external_id(x));
      }
      out[x] = initial[x];
      continue;
    }
    double acc = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      acc += w[i] * prev[nbrs[i]];
      wsum += w[i];
    }
    out[x] = (1.0 - lambda) * initial[x] + lambda * (acc / wsum);
  }
  return out;
}

double argmax_accuracy(const ProbabilityState& state,
                       std::span<const std::pair<NodeId, Category>> targets) {
  if (targets.empty()) return 0.0;
  std::size_t hits = 0;
  for (auto [x, cat] : targets) hits += state.argmax(x) == cat;
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

RunResult run(const SocialGraph& g, std::span<const Category> seed_category,
              const ProbabilityState& initial, const DiffusionConfig& cfg,
              std::span<const std::pair<NodeId, Category>> validation) {
  check_lambda(cfg.lambda);
  check_rows(initial);
  RunResult res;
  res.state = initial;
  res.state.iteration = 0;
  auto record = [&](double delta) {
    TraceRow row{res.state.iteration, delta, std::nullopt};
    if (!validation.empty()) row.validation_accuracy = argmax_accuracy(res.state, validation);
    res.trace.push_back(row);
  };
  record(0.0);
  std::vector<NodeId> isolated;
  for (std::size_t t = 0; t < cfg.max_iterations; ++t) {
    ProbabilityState next =
        step(res.state, initial, g, seed_category, cfg.lambda, cfg.threads, &isolated);
    double delta = 0.0;
    for (std::size_t i = 0; i < next.values.size(); ++i) {
      delta = std::max(delta, std::fabs(next.values[i] - res.state.values[i]));
    }
    res.state = std::move(next);
    record(delta);
    if (delta < cfg.convergence_tol) {
      res.converged = true;
      break;
    }
  }
  if (!isolated.empty()) {
    res.warnings.push_back(std::to_string(isolated.size()) +
                           " isolated seed node(s) kept their initial rows");
  }
  if (!res.converged) {
    res.warnings.push_back("no convergence within " + std::to_string(cfg.max_iterations) +
                           " iterations");
  }
  return res;
}

double linear_system_residual(const ProbabilityState& state, const ProbabilityState& initial,
                              const SocialGraph& g, double lambda) {
  const std::size_t c = state.categories;
  double worst = 0.0;
  for (NodeId x = 0; x < g.node_count(); ++x) {
    const auto nbrs = g.neighbors(x);
    for (std::size_t a = 0; a < c; ++a) {
      // Isolated rows are pinned to g0 by step().
      double r = state.row(x)[a] - initial.row(x)[a];
      if (!nbrs.empty()) {
        double avg = 0.0;
        for (NodeId y : nbrs) avg += state.row(y)[a];
        avg /= static_cast<double>(nbrs.size());
        r = state.row(x)[a] - lambda * avg - (1.0 - lambda) * initial.row(x)[a];
      }
      worst = std::max(worst, std::fabs(r));
    }
  }
  return worst;
}

std::vector<LambdaPoint> lambda_sweep(const SocialGraph& g, std::span<const Category> seed_category,
                                      const ProbabilityState& initial,
                                      std::span<const double> lambdas,
                                      const DiffusionConfig& base,
                                      std::span<const std::pair<NodeId, Category>> validation) {
  if (validation.empty()) throw DataError("lambda sweep needs validation nodes");
  std::vector<LambdaPoint> out;
  for (double lambda : lambdas) {
    DiffusionConfig cfg = base;
    cfg.lambda = lambda;
    const auto r = run(g, seed_category, initial, cfg);
    out.push_back({lambda, argmax_accuracy(r.state, validation), r.state.iteration, r.converged});
  }
  return out;
}

void write_state_csv(std::ostream& out, const SocialGraph& g, const ProbabilityState& s) {
  out << "user_id";
  for (std::size_t a = 0; a < s.categories; ++a) out << ",p_" << a;
  out << ",argmax\n";
  for (NodeId x = 0; x < s.nodes; ++x) {
    out << g.external_id(x);
    for (double v : s.row(x)) out << ',' << io::format_double(v);
    out << ',' << s.argmax(x) << '\n';
  }
}

ProbabilityState read_state_csv(std::istream& in, const SocialGraph& g) {
  const PredictionSet p = read_prediction_csv(in);
  ProbabilityState s;
  s.nodes = g.node_count();
  s.categories = p.classes;
  s.values.assign(s.nodes * s.categories, 0.0);
  std::vector<bool> seen(s.nodes, false);
  for (std::size_t i = 0; i < p.user_ids.size(); ++i) {
    const auto x = g.find(p.user_ids[i]);
    if (!x) throw DataError("state row for unknown user " + p.user_ids[i]);
    const auto r = p.row(i);
    std::copy(r.begin(), r.end(), s.row(*x).begin());
    seen[*x] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError("state file does not cover every graph node");
  }
  return s;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,delta_inf,validation_accuracy\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << io::format_double(r.delta_inf) << ',';
    if (r.validation_accuracy) out << io::format_double(*r.validation_accuracy);
    out << '\n';
  }
}

PredictionSet to_predictions(const SocialGraph& g, const ProbabilityState& s) {
  PredictionSet p;
  p.classes = s.categories;
  p.user_ids.assign(g.ids().begin(), g.ids().end());
  p.prob = s.values;
  p.argmax.resize(s.nodes);
  for (std::size_t x = 0; x < s.nodes; ++x) p.argmax[x] = s.argmax(x);
  return p;
}

}  // namespace cdrdemo
