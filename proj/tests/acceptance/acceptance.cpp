// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cdrdemo/classify.hpp"
#include "cdrdemo/diffusion.hpp"
#include "cdrdemo/io.hpp"
#include "cdrdemo/pipeline.hpp"
#include "cdrdemo/pps.hpp"
#include "cdrdemo/stats.hpp"
#include "cdrdemo/synth.hpp"
#include "support/oracles.hpp"

using namespace cdrdemo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::vector<Category> random_seeds(std::size_t n, std::size_t c, double fraction, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Category> sc(n, kNoCategory);
  sc[0] = 0;
  for (std::size_t x = 1; x < n; ++x)
    if (u(gen) < fraction) sc[x] = static_cast<Category>(gen() % c);
  return sc;
}

ProbabilityState random_state(std::size_t n, std::size_t c, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0, 1);
  ProbabilityState s;
  s.nodes = n;
  s.categories = c;
  s.values.resize(n * c);
  for (std::size_t x = 0; x < n; ++x) {
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) sum += s.values[x * c + k] = u(gen);
    for (std::size_t k = 0; k < c; ++k) s.values[x * c + k] /= sum;
  }
  return s;
}

// Residual recomputed from the adjacency; isolated seeds are pinned to g0.
double residual(const SocialGraph& g, const ProbabilityState& s, const ProbabilityState& g0, double lambda) {
  double worst = 0.0;
  for (NodeId x = 0; x < g.node_count(); ++x) {
    for (std::size_t k = 0; k < s.categories; ++k) {
      double r;
      if (g.degree(x) == 0) {
        r = s.row(x)[k] - g0.row(x)[k];
      } else {
        double avg = 0.0;
        for (NodeId y : g.neighbors(x)) avg += s.row(y)[k];
        avg /= static_cast<double>(g.degree(x));
        r = s.row(x)[k] - lambda * avg - (1.0 - lambda) * g0.row(x)[k];
      }
      worst = std::max(worst, std::fabs(r));
    }
  }
  return worst;
}

void criterion_1() {
  std::mt19937_64 gen(101);
  double worst = 0.0, elapsed = 0.0;
  bool converged = true;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 200 + gen() % 801;
    auto raw = oracle::random_graph(n, n + gen() % (2 * n), gen);
    auto sc_raw = random_seeds(n, 4, 0.1, gen);
    std::vector<NodeId> seeds;
    for (NodeId x = 0; x < n; ++x)
      if (sc_raw[x] != kNoCategory) seeds.push_back(x);
    auto pr = prune_graph(raw, seeds);
    std::vector<Category> sc(pr.graph.node_count(), kNoCategory);
    for (NodeId x = 0; x < n; ++x)
      if (pr.old_to_new[x] != kInvalidNode) sc[pr.old_to_new[x]] = sc_raw[x];
    const auto t0 = Clock::now();
    auto g0 = init_state(sc, 4, InitMode::kUniform);
    DiffusionConfig cfg;
    cfg.lambda = 0.5;
    cfg.max_iterations = 1000;
    cfg.convergence_tol = 1e-12;
    auto r = run(pr.graph, sc, g0, cfg);
    elapsed += seconds_since(t0);
    converged = converged && r.converged;
    worst = std::max({worst, residual(pr.graph, r.state, g0, 0.5),
                      linear_system_residual(r.state, g0, pr.graph, 0.5)});
  }
  report(1, converged && worst < 1e-7 && elapsed < 5.0,
         "max residual " + fmt("%.3g", worst) + ", diffusion time " + fmt("%.3f", elapsed) + " s");
}

void criterion_2() {
  std::mt19937_64 gen(202);
  double worst_ratio = 0.0;
  bool ok = true;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 20 + gen() % 81;
    auto g = oracle::random_connected_graph(n, gen() % n, gen);
    const std::size_t c = 2 + gen() % 4;
    auto sc = random_seeds(n, c, 0.1, gen);
    auto g0 = init_state(sc, c, InitMode::kUniform);
    for (double lambda : {0.25, 0.5, 0.75}) {
      const auto star = oracle::diffusion_fixed_point(g, g0.values, c, lambda);
      const double d0 = max_abs_diff(g0.values, star);
      auto s = g0;
      double bound = d0;
      for (int t = 1; t <= 30; ++t) {
        s = step(s, g0, g, sc, lambda);
        bound *= lambda;
        const double d = max_abs_diff(s.values, star);
        if (d > bound + 1e-12) ok = false;
        if (bound > 1e-9) worst_ratio = std::max(worst_ratio, d / bound);
      }
    }
  }
  report(2, ok, "max distance / bound " + fmt("%.4f", worst_ratio) + " (bound slack 1e-12)");
}

void criterion_3() {
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0.0;
  std::size_t sweeps = 0;
  bool ok = true;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 10 + gen() % 300, c = 2 + gen() % 5;
    auto g = oracle::random_connected_graph(n, gen() % (2 * n), gen);
    auto sc = random_seeds(n, c, 0.05 + 0.3 * u(gen), gen);
    auto g0 = rep % 2 ? random_state(n, c, gen) : init_state(sc, c, InitMode::kUniform);
    for (NodeId x = 0; x < n; ++x) {
      if (sc[x] == kNoCategory) continue;
      for (std::size_t k = 0; k < c; ++k) g0.row(x)[k] = k == static_cast<std::size_t>(sc[x]) ? 1.0 : 0.0;
    }
    auto s = random_state(n, c, gen);
    const double lambda = u(gen);
    for (int t = 0; t < 30; ++t, ++sweeps) {
      try {
        s = step(s, g0, g, sc, lambda);
      } catch (const std::exception&) {
        ok = false;
        break;
      }
      for (NodeId x = 0; x < n; ++x) {
        const auto row = s.row(x);
        worst = std::max(worst, std::fabs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
      }
    }
  }
  report(3, ok && worst <= 1e-9,
         std::to_string(sweeps) + " sweeps, max |row sum - 1| " + fmt("%.3g", worst));
}

void criterion_4() {
  std::mt19937_64 gen(404);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t mismatches = 0, quota_misses = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + gen() % 50, c = 1 + gen() % 5;
    std::vector<std::vector<double>> rows(n, std::vector<double>(c));
    const bool coarse = rep % 2 == 0;
    for (auto& r : rows) {
      double s = 0.0;
      for (auto& v : r) s += v = coarse ? std::round(u(gen) * 4.0) + 0.5 : u(gen);
      for (auto& v : r) v /= s;
    }
    std::vector<double> dist(c);
    for (auto& v : dist) v = u(gen) + 0.05;
    const double ds = std::accumulate(dist.begin(), dist.end(), 0.0);
    for (auto& v : dist) v /= ds;
    const auto spec = compute_quotas(n, (1 + gen() % 8) / 8.0, dist);

    PredictionSet p;
    p.classes = c;
    for (std::size_t i = 0; i < n; ++i) {
      p.user_ids.push_back("u" + std::to_string(100 + i));
      p.prob.insert(p.prob.end(), rows[i].begin(), rows[i].end());
      p.argmax.push_back(0);
    }
    const auto a = pps_assign(p, spec);
    const auto expect = oracle::brute_pps(rows, spec.quotas);
    for (std::size_t i = 0; i < n; ++i) mismatches += a.assigned[i] != expect[i];
    for (std::size_t k = 0; k < c; ++k) quota_misses += a.counts[k] != spec.quotas[k];
  }
  report(4, mismatches == 0 && quota_misses == 0,
         "1000 instances, " + std::to_string(mismatches) + " assignment mismatches, " +
             std::to_string(quota_misses) + " unmet quotas");
}

// The 10^5-node planted-homophily population shared by criteria 5 to 8.
struct Fixture {
  SocialGraph graph;
  std::vector<NodeId> seeds;
  std::vector<Category> seed_category;
  std::vector<std::pair<NodeId, Category>> validation;
  ProbabilityState initial;
  RunResult run30;
  double build_seconds = 0.0;
  double total_seconds = 0.0;
};

Fixture make_fixture() {
  const auto t0 = Clock::now();
  Fixture f;
  SynthConfig cfg = default_synth_config();
  cfg.population = 100000;
  cfg.mean_degree = 10.0;
  cfg.seed_fraction = 0.1;
  cfg.validation_fraction = 0.9;
  cfg.mixing.base = 1.0;
  cfg.mixing.diagonal_strength = 20.0;
  cfg.mixing.offset_strength = 4.0;
  cfg.mixing.sigma = 3.0;
  cfg.rng_seed = 2024;
  const auto labels = generate_population(cfg);
  const auto raw = generate_graph(labels, cfg);
  auto pr = prune_graph(raw, seed_nodes(raw, labels));
  f.graph = std::move(pr.graph);
  f.seeds = std::move(pr.seeds);
  f.seed_category = seed_categories(f.graph, labels);
  f.validation = validation_targets(f.graph, labels);
  f.initial = init_state(f.seed_category, labels.categories(), InitMode::kUniform);
  f.build_seconds = seconds_since(t0);

  DiffusionConfig dc;
  dc.lambda = 0.5;
  dc.max_iterations = 30;
  dc.convergence_tol = 0.0;
  f.run30 = run(f.graph, f.seed_category, f.initial, dc, f.validation);
  f.total_seconds = seconds_since(t0);
  return f;
}

double pps_accuracy(const Fixture& f, double q) {
  PredictionSet ns;
  ns.classes = f.initial.categories;
  std::vector<NodeId> node;
  for (NodeId x = 0; x < f.graph.node_count(); ++x) {
    if (f.seed_category[x] != kNoCategory) continue;
    ns.user_ids.push_back(f.graph.external_id(x));
    const auto r = f.run30.state.row(x);
    ns.prob.insert(ns.prob.end(), r.begin(), r.end());
    ns.argmax.push_back(f.run30.state.argmax(x));
    node.push_back(x);
  }
  const auto a = pps_assign(ns, compute_quotas(ns.user_ids.size(), q, kDefaultAgePyramid));
  std::vector<Category> pred(f.graph.node_count(), kNoCategory);
  for (std::size_t i = 0; i < node.size(); ++i) pred[node[i]] = a.assigned[i];
  std::size_t hit = 0, tot = 0;
  for (auto [x, c] : f.validation) {
    if (pred[x] == kNoCategory) continue;
    ++tot;
    hit += pred[x] == c;
  }
  return static_cast<double>(hit) / static_cast<double>(tot);
}

void criterion_5(const Fixture& f) {
  const auto t0 = Clock::now();
  const double acc = argmax_accuracy(f.run30.state, f.validation);
  std::vector<std::size_t> count(f.initial.categories);
  for (auto [x, c] : f.validation) ++count[static_cast<std::size_t>(c)];
  const double constant = static_cast<double>(*std::max_element(count.begin(), count.end())) /
                          static_cast<double>(f.validation.size());
  const double q1 = pps_accuracy(f, 1.0);
  const double q8 = pps_accuracy(f, 0.125);
  const double total = f.total_seconds + seconds_since(t0);
  report(5, acc >= 0.45 && acc > constant && q8 > q1 && total < 120.0,
         "accuracy " + fmt("%.4f", acc) + " vs constant " + fmt("%.4f", constant) + "; PPS q=1 " +
             fmt("%.4f", q1) + ", q=1/8 " + fmt("%.4f", q8) + "; " + fmt("%.1f", total) + " s (" +
             std::to_string(f.graph.node_count()) + " nodes after pruning)");
}

void criterion_6(const Fixture& f) {
  DiffusionConfig dc;
  dc.max_iterations = 30;
  const std::vector<double> lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto pts = lambda_sweep(f.graph, f.seed_category, f.initial, lambdas, dc, f.validation);
  double lo = 1.0, hi = 0.0;
  for (const auto& p : pts) {
    lo = std::min(lo, p.accuracy);
    hi = std::max(hi, p.accuracy);
  }
  dc.lambda = 1.0;
  const auto one = run(f.graph, f.seed_category, f.initial, dc, f.validation);
  const std::size_t iters = one.trace.back().iteration;
  const bool guard = !one.converged && iters == dc.max_iterations;
  report(6, (hi - lo) * 100.0 <= 3.0 && guard,
         "accuracy range [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], spread " +
             fmt("%.2f", (hi - lo) * 100.0) + " pp; lambda=1 stopped at iteration " +
             std::to_string(iters) + (one.converged ? " (converged)" : " (guard)") + ", accuracy " +
             fmt("%.4f", argmax_accuracy(one.state, f.validation)));
}

void criterion_7(const Fixture& f) {
  const auto& tr = f.run30.trace;
  const bool have = tr.size() == 31 && tr[5].validation_accuracy && tr[30].validation_accuracy;
  const double a5 = have ? *tr[5].validation_accuracy : 0.0;
  const double a30 = have ? *tr[30].validation_accuracy : 0.0;
  report(7, have && std::fabs(a5 - a30) * 100.0 <= 1.0,
         "iteration 5 " + fmt("%.4f", a5) + ", iteration 30 " + fmt("%.4f", a30));
}

void criterion_8(const Fixture& f) {
  const auto topo = compute_topo_metrics(f.graph, f.seeds);
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> dts;  // hits, total
  std::pair<std::size_t, std::size_t> sin0{0, 0}, sin1{0, 0};
  for (auto [x, c] : f.validation) {
    const bool hit = f.run30.state.argmax(x) == c;
    auto& d = dts[topo.dts[x]];
    d.first += hit;
    ++d.second;
    auto& s = topo.sin[x] == 0 ? sin0 : sin1;
    s.first += hit;
    ++s.second;
  }
  auto acc = [](std::pair<std::size_t, std::size_t> p) {
    return p.second ? static_cast<double>(p.first) / static_cast<double>(p.second) : 0.0;
  };
  const double d1 = acc(dts[1]), d2 = acc(dts[2]), d3 = acc(dts[3]);
  const double s0 = acc(sin0), s1 = acc(sin1);
  const bool ok = dts[1].second && dts[2].second && dts[3].second && d1 >= d2 && d2 >= d3 && s1 > s0;
  report(8, ok,
         "DTS 1/2/3 " + fmt("%.4f", d1) + "/" + fmt("%.4f", d2) + "/" + fmt("%.4f", d3) + " (n=" +
             std::to_string(dts[1].second) + "/" + std::to_string(dts[2].second) + "/" +
             std::to_string(dts[3].second) + "); SIN=0 " + fmt("%.4f", s0) + ", SIN>=1 " +
             fmt("%.4f", s1));
}

Dataset random_dataset(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0, 1);
  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.x.resize(rows * cols);
  for (auto& v : d.x) v = u(gen);
  for (std::size_t c = 0; c < cols; ++c) d.feature_names.push_back("f" + std::to_string(c));
  return d;
}

std::vector<int> random_classes(std::size_t rows, std::size_t classes, std::mt19937_64& gen) {
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<int>(i < classes ? i : gen() % classes);
  return y;
}

void criterion_9() {
  std::mt19937_64 gen(909);
  double worst_fd = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t rows = 5 + gen() % 40, cols = 1 + gen() % 8, classes = 2 + gen() % 4;
    const auto d = random_dataset(rows, cols, gen);
    const auto y = random_classes(rows, classes, gen);
    const Regularization reg{rep % 2 ? Penalty::kL2 : Penalty::kL1, 0.1 + (gen() % 100) / 10.0};
    const std::size_t dim = (classes - 1) * (cols + 1), weights = (classes - 1) * cols;
    std::normal_distribution<double> z;
    std::vector<double> p(dim);
    for (auto& v : p) v = z(gen);
    const auto grad = multinomial_smooth_gradient(d, y, classes, reg, p);
    auto smooth = [&](const std::vector<double>& q) {
      double f = multinomial_objective(d, y, classes, reg, q);
      if (reg.kind == Penalty::kL1) {
        double l1 = 0.0;
        for (std::size_t k = 0; k < weights; ++k) l1 += std::fabs(q[k]);
        f -= l1 / static_cast<double>(rows);
      }
      return f;
    };
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      auto a = p, b = p;
      a[k] += 1e-5;
      b[k] -= 1e-5;
      const double fd = (smooth(a) - smooth(b)) / 2e-5;
      num += (fd - grad[k]) * (fd - grad[k]);
      den += fd * fd;
    }
    worst_fd = std::max(worst_fd, std::sqrt(num / den));
  }

  double worst_c2 = 0.0;
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = random_dataset(100, 5, gen);
    std::vector<int> y(100), cls(100);
    for (std::size_t i = 0; i < 100; ++i) {
      double s = -0.3;
      for (std::size_t c = 0; c < 5; ++c) s += (c % 2 ? 2.0 : -1.5) * d.at(i, c);
      cls[i] = u(gen) < 1.0 / (1.0 + std::exp(-s)) ? 1 : 0;
      y[i] = cls[i] ? 1 : -1;
    }
    for (Penalty pen : {Penalty::kL1, Penalty::kL2}) {
      const auto b = predict(train_logistic(d, y, {pen, 2.0}), d);
      const auto m = predict(train_multinomial(d, cls, 2, {pen, 2.0}), d);
      worst_c2 = std::max(worst_c2, max_abs_diff(b.prob, m.prob));
    }
  }

  std::size_t increases = 0, iterations = 0;
  OptimizerOptions opts;
  opts.record_objective = true;
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = random_dataset(150, 6, gen);
    const auto y = random_classes(150, 2 + rep % 4, gen);
    TrainReport tr;
    train_multinomial(d, y, 2 + rep % 4, {rep % 2 ? Penalty::kL1 : Penalty::kL2, 0.5 + rep}, opts, &tr);
    for (std::size_t i = 1; i < tr.objective_trace.size(); ++i)
      increases += tr.objective_trace[i] > tr.objective_trace[i - 1];
    iterations += tr.objective_trace.size();
  }
  report(9, worst_fd < 1e-4 && worst_c2 < 1e-6 && increases == 0,
         "gradient relative error " + fmt("%.2g", worst_fd) + "; C=2 max probability gap " +
             fmt("%.2g", worst_c2) + "; " + std::to_string(increases) + " objective increases in " +
             std::to_string(iterations) + " iterates");
}

void criterion_10() {
  std::mt19937_64 gen(1010);
  std::normal_distribution<double> z;
  double worst_tukey = 0.0;
  for (int fixture = 0; fixture < 10; ++fixture) {
    const std::size_t k = 2 + fixture % 4;
    std::vector<std::vector<double>> groups(k);
    for (std::size_t g = 0; g < k; ++g) {
      groups[g].resize(8 + gen() % 30);
      for (auto& x : groups[g]) x = 0.5 * static_cast<double>(g) + (1.0 + fixture * 0.2) * z(gen);
    }
    const auto res = tukey_hsd(groups);
    const double q = oracle::mc_studentized_range_quantile(0.95, k, res.df, 1000000, 77 + fixture);
    for (const auto& p : res.pairs) {
      const double se = std::sqrt(res.mse / 2.0 *
                                  (1.0 / static_cast<double>(groups[p.group1].size()) +
                                   1.0 / static_cast<double>(groups[p.group2].size())));
      worst_tukey = std::max({worst_tukey, std::fabs(p.lower - (p.meandiff - q * se)),
                              std::fabs(p.upper - (p.meandiff + q * se))});
    }
  }

  const std::vector<double> constant(57, 42.5);
  const auto means = bootstrap_means(constant, 1000, 5);
  double var = 0.0;
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  for (double m : means) var += (m - mu) * (m - mu);

  LabelStore labels;
  for (int i = 0; i < 200; ++i) {
    labels.user_ids.push_back("u" + std::to_string(1000 + i));
    labels.age.push_back(std::nullopt);
    labels.gender.push_back(gen() % 3 ? Gender::kMale : Gender::kFemale);
    labels.role.push_back(Role::kSeed);
  }
  labels.normalize();
  double worst_row = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::pair<std::string, std::string>> calls;
    for (int i = 0; i < 3000; ++i)
      calls.emplace_back("u" + std::to_string(1000 + gen() % 220), "u" + std::to_string(1000 + gen() % 220));
    const auto gc = gender_conditionals(calls, labels);
    worst_row = std::max({worst_row, std::fabs(gc.f_given_m + gc.m_given_m - 1.0),
                          std::fabs(gc.f_given_f + gc.m_given_f - 1.0)});
  }

  std::vector<double> c(60 * 60);
  for (auto& v : c) v = gen() % 4 == 0 ? 0.0 : static_cast<double>(gen() % 500);
  const auto ld = log_difference(c, c);
  const bool zero = std::all_of(ld.begin(), ld.end(), [](double v) { return v == 0.0; });

  report(10, worst_tukey < 0.005 && var == 0.0 && worst_row <= 1e-12 && zero,
         "Tukey endpoint gap " + fmt("%.4f", worst_tukey) + " over 10 fixtures; constant bootstrap variance " +
             fmt("%.3g", var) + "; conditional row error " + fmt("%.2g", worst_row) +
             "; C=R log-difference " + (zero ? "all zero" : "non-zero"));
}

void criterion_11(const fs::path& root) {
  auto config = [&](const fs::path& out, unsigned threads) {
    return parse_pipeline_config(R"({
      "seed": 11,
      "threads": )" + std::to_string(threads) + R"(,
      "out_dir": ")" + out.string() + R"(",
      "stages": ["synth", "features", "stats", "classify", "diffuse", "pps", "evaluate"],
      "synth": {"population": 5000},
      "classify": {"gender_model": true}
    })", root);
  };
  auto tree = [](const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = io::read_file(e.path());
    return out;
  };
  fs::remove_all(root);
  const auto a = root / "run_a", b = root / "run_b", c = root / "run_threads4";
  run_pipeline(config(a, 1));
  run_pipeline(config(b, 1));
  run_pipeline(config(c, 4));
  const auto ta = tree(a), tb = tree(b), tc = tree(c);
  std::size_t differ = 0;
  for (const auto& [name, bytes] : ta) {
    differ += !tb.count(name) || tb.at(name) != bytes;
    differ += !tc.count(name) || tc.at(name) != bytes;
  }
  const bool same_sets = ta.size() == tb.size() && ta.size() == tc.size();
  report(11, differ == 0 && same_sets,
         std::to_string(ta.size()) + " artifacts compared across 3 runs, " + std::to_string(differ) +
             " differences");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "cdrdemo_acceptance";
  const std::vector<std::function<void()>> early = {criterion_1, criterion_2, criterion_3, criterion_4};
  for (const auto& c : early) c();
  const Fixture f = make_fixture();
  criterion_5(f);
  criterion_6(f);
  criterion_7(f);
  criterion_8(f);
  criterion_9();
  criterion_10();
  criterion_11(work);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
