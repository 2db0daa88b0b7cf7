#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cdrdemo/classify.hpp"
#include "support/oracles.hpp"

using namespace cdrdemo;

namespace {

Dataset dataset(std::size_t rows, std::size_t cols, std::vector<double> x) {
  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.x = std::move(x);
  for (std::size_t c = 0; c < cols; ++c) d.feature_names.push_back("f" + std::to_string(c));
  return d;
}

Dataset random_dataset(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(rows * cols);
  for (auto& v : x) v = u(gen);
  return dataset(rows, cols, std::move(x));
}

// Labels drawn from a planted logistic model so both classes occur.
std::vector<int> planted_binary(const Dataset& d, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> w(d.cols);
  for (auto& v : w) v = 4.0 * u(gen) - 2.0;
  std::vector<int> y;
  for (std::size_t r = 0; r < d.rows; ++r) {
    double s = -0.5;
    for (std::size_t c = 0; c < d.cols; ++c) s += w[c] * d.at(r, c);
    y.push_back(u(gen) < 1.0 / (1.0 + std::exp(-s)) ? 1 : -1);
  }
  return y;
}

std::vector<int> random_classes(std::size_t rows, std::size_t classes, std::mt19937_64& gen) {
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<int>(i < classes ? i : gen() % classes);
  return y;
}

}  // namespace

TEST_CASE("two separable points are classified correctly") {
  auto d = dataset(2, 1, {0.0, 1.0});
  std::vector<int> y = {-1, 1};
  auto m = train_logistic(d, y, {Penalty::kL2, 100.0});
  const double boundary = -m.intercepts[0] / m.weights[0][0];
  CHECK(boundary > 0.0);
  CHECK(boundary < 1.0);
  auto p = predict(m, d);
  CHECK(p.argmax[0] == 0);
  CHECK(p.argmax[1] == 1);
}

TEST_CASE("a single training class gives an intercept-dominated model") {
  auto d = dataset(3, 2, {0.1, 0.5, 0.9, 0.2, 0.4, 0.4});
  std::vector<int> y = {1, 1, 1};
  auto m = train_logistic(d, y, {Penalty::kL2, 1.0});
  auto p = predict(m, dataset(2, 2, {0.0, 0.0, 1.0, 1.0}));
  for (std::size_t i = 0; i < 2; ++i) CHECK(p.argmax[i] == 1);
  CHECK(std::fabs(m.intercepts[0]) > std::fabs(m.weights[0][0]));
}

TEST_CASE("binary logistic reaches the coordinate-descent optimum") {
  std::mt19937_64 gen(31);
  for (int rep = 0; rep < 4; ++rep) {
    auto d = random_dataset(200, 5, gen);
    auto y = planted_binary(d, gen);
    oracle::Matrix x(200, std::vector<double>(5));
    for (std::size_t r = 0; r < 200; ++r)
      for (std::size_t c = 0; c < 5; ++c) x[r][c] = d.at(r, c);
    for (bool l1 : {true, false}) {
      const double c = rep % 2 ? 1.0 : 5.0;
      TrainReport rep_out;
      train_logistic(d, y, {l1 ? Penalty::kL1 : Penalty::kL2, c}, {}, &rep_out);
      const double expect = oracle::coordinate_descent_logistic(x, y, c, l1, 20000);
      INFO("l1=", l1, " c=", c);
      CHECK(rep_out.converged);
      CHECK(std::fabs(rep_out.objective - expect) < 1e-4);
    }
  }
}

TEST_CASE("two-class multinomial agrees with binary logistic") {
  std::mt19937_64 gen(12);
  for (int rep = 0; rep < 5; ++rep) {
    auto d = random_dataset(80, 4, gen);
    auto y = planted_binary(d, gen);
    std::vector<int> cls(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) cls[i] = y[i] > 0 ? 1 : 0;
    for (Penalty pen : {Penalty::kL1, Penalty::kL2}) {
      auto b = predict(train_logistic(d, y, {pen, 2.0}), d);
      auto m = predict(train_multinomial(d, cls, 2, {pen, 2.0}), d);
      for (std::size_t i = 0; i < b.prob.size(); ++i) CHECK(std::fabs(b.prob[i] - m.prob[i]) < 1e-6);
    }
  }
}

TEST_CASE("multinomial gradient matches central differences") {
  std::mt19937_64 gen(77);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t rows = 5 + gen() % 30, cols = 1 + gen() % 6, classes = 2 + gen() % 4;
    auto d = random_dataset(rows, cols, gen);
    auto y = random_classes(rows, classes, gen);
    const Regularization reg{rep % 2 ? Penalty::kL2 : Penalty::kL1, 0.1 + (gen() % 100) / 10.0};
    const std::size_t dim = (classes - 1) * (cols + 1);
    std::normal_distribution<double> z;
    std::vector<double> p(dim);
    for (auto& v : p) v = z(gen);
    const auto grad = multinomial_smooth_gradient(d, y, classes, reg, p);
    REQUIRE(grad.size() == dim);
    const std::size_t weights = (classes - 1) * cols;
    auto smooth = [&](std::vector<double> q) {
      double f = multinomial_objective(d, y, classes, reg, q);
      if (reg.kind == Penalty::kL1) {
        double l1 = 0.0;
        for (std::size_t k = 0; k < weights; ++k) l1 += std::fabs(q[k]);
        f -= l1 / static_cast<double>(rows);
      }
      return f;
    };
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      auto a = p, b = p;
      a[k] += h;
      b[k] -= h;
      const double fd = (smooth(a) - smooth(b)) / (2.0 * h);
      num += (fd - grad[k]) * (fd - grad[k]);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("objective never increases across iterations") {
  std::mt19937_64 gen(4);
  auto d = random_dataset(150, 6, gen);
  auto y = random_classes(150, 4, gen);
  OptimizerOptions opts;
  opts.record_objective = true;
  for (Penalty pen : {Penalty::kL1, Penalty::kL2}) {
    TrainReport rep;
    train_multinomial(d, y, 4, {pen, 3.0}, opts, &rep);
    REQUIRE(rep.objective_trace.size() > 2);
    for (std::size_t i = 1; i < rep.objective_trace.size(); ++i)
      CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1]);
  }
}

TEST_CASE("uninformative balanced features give uniform probabilities") {
  std::vector<double> x;
  std::vector<int> y;
  for (int c = 0; c < 3; ++c) {
    for (double v : {0.0, 0.5, 1.0}) {
      x.push_back(v);
      y.push_back(c);
    }
  }
  auto d = dataset(9, 1, x);
  auto p = predict(train_multinomial(d, y, 3, {Penalty::kL2, 1.0}), d);
  for (double v : p.prob) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("L1 keeps fewer weights as C shrinks") {
  std::mt19937_64 gen(8);
  auto d = random_dataset(200, 8, gen);
  auto y = planted_binary(d, gen);
  std::size_t prev = 9;
  for (double c : {10.0, 3.0, 1.0, 0.3, 0.1, 0.03}) {
    auto m = train_logistic(d, y, {Penalty::kL1, c});
    const auto nz = static_cast<std::size_t>(
        std::count_if(m.weights[0].begin(), m.weights[0].end(), [](double w) { return w != 0.0; }));
    CHECK(nz <= prev);
    prev = nz;
  }
  CHECK(prev < 8);
}

TEST_CASE("prediction arithmetic") {
  ClassifierModel zero;
  zero.classes = 3;
  zero.weights.assign(3, std::vector<double>(2, 0.0));
  zero.intercepts.assign(3, 0.0);
  zero.feature_names = {"a", "b"};
  auto d = dataset(1, 2, {0.3, 0.7});
  for (double v : predict(zero, d).prob) CHECK(v == doctest::Approx(1.0 / 3.0));

  ClassifierModel bin;
  bin.binary = true;
  bin.weights = {{1.0, -1.0}};
  bin.intercepts = {0.0};
  bin.feature_names = {"a", "b"};
  auto half = predict(bin, dataset(1, 2, {0.4, 0.4}));
  CHECK(half.prob[0] == doctest::Approx(0.5));
  CHECK(half.prob[1] == doctest::Approx(0.5));

  // Scores for rows (1,0) and (0,1): [1, 2, 0] and [0.5, -1, 0].
  ClassifierModel m;
  m.classes = 3;
  m.weights = {{1.0, 0.5}, {2.0, -1.0}, {0.0, 0.0}};
  m.intercepts = {0.0, 0.0, 0.0};
  m.feature_names = {"a", "b"};
  auto p = predict(m, dataset(2, 2, {1, 0, 0, 1}));
  const double z1 = std::exp(1.0) + std::exp(2.0) + 1.0;
  const double z2 = std::exp(0.5) + std::exp(-1.0) + 1.0;
  CHECK(p.prob[0] == doctest::Approx(std::exp(1.0) / z1));
  CHECK(p.prob[1] == doctest::Approx(std::exp(2.0) / z1));
  CHECK(p.prob[2] == doctest::Approx(1.0 / z1));
  CHECK(p.prob[3] == doctest::Approx(std::exp(0.5) / z2));
  CHECK(p.prob[5] == doctest::Approx(1.0 / z2));
  CHECK(p.argmax == std::vector<Category>{1, 0});

  auto shifted = m;
  for (auto& b : shifted.intercepts) b += 7.5;
  auto q = predict(shifted, dataset(2, 2, {1, 0, 0, 1}));
  for (std::size_t i = 0; i < p.prob.size(); ++i) CHECK(q.prob[i] == doctest::Approx(p.prob[i]));
  CHECK(q.argmax == p.argmax);

  CHECK_THROWS(predict(m, dataset(1, 3, {1, 2, 3})));
}

TEST_CASE("probability rows sum to one") {
  std::mt19937_64 gen(2);
  auto d = random_dataset(60, 3, gen);
  auto y = random_classes(60, 4, gen);
  auto p = predict(train_multinomial(d, y, 4, {Penalty::kL2, 1.0}), d);
  for (std::size_t i = 0; i < 60; ++i) {
    double s = 0.0;
    for (double v : p.row(i)) s += v;
    CHECK(std::fabs(s - 1.0) < 1e-9);
    auto r = p.row(i);
    CHECK(p.argmax[i] == std::max_element(r.begin(), r.end()) - r.begin());
  }
}

TEST_CASE("separation scores and top-k selection") {
  // Column 0 separates the classes, column 1 does not.
  auto d = dataset(6, 2, {0, 1, 0.1, 0, 0.2, 1, 1, 0, 0.9, 1, 0.8, 0});
  std::vector<int> y = {-1, -1, -1, 1, 1, 1};
  auto s = separation_scores(d, y);
  // Welch t for column 0: means 0.1 vs 0.9, variances 0.01 each, n = 3.
  CHECK(s[0] == doctest::Approx(0.8 / std::sqrt(0.01 / 3 + 0.01 / 3)));
  CHECK(s[1] < s[0]);
  std::vector<double> scores = {1.0, 3.0, 3.0, 0.5};
  CHECK(select_top_k(scores, 2) == std::vector<std::size_t>{1, 2});
  CHECK(select_top_k(scores, 1) == std::vector<std::size_t>{1});
  CHECK(select_top_k(scores, 0).size() == 4);
}

TEST_CASE("grid search selection rules") {
  std::mt19937_64 gen(5);
  auto d = random_dataset(120, 4, gen);
  std::vector<int> y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = d.at(i, 2) > 0.5 ? 1 : -1;

  std::vector<GridConfig> one = {{1.0, 0, Penalty::kL2}};
  auto r1 = grid_search(d, y, TargetKind::kBinary, 2, one, 0.7, 3);
  CHECK(r1.best == one[0]);
  CHECK(r1.rows.size() == 1);
  CHECK(r1.train_rows.size() == 84);

  GridSpec spec;
  spec.c_values = {1, 10};
  spec.k_values = {1, 0};
  auto grid = spec.expand();
  CHECK(grid.size() == 8);
  auto dup = grid;
  dup.insert(dup.end(), grid.begin(), grid.end());
  auto a = grid_search(d, y, TargetKind::kBinary, 2, grid, 0.7, 3);
  auto b = grid_search(d, y, TargetKind::kBinary, 2, dup, 0.7, 3, 4);
  CHECK(a.best == b.best);
  CHECK(a.best_accuracy == b.best_accuracy);
  CHECK(a.best_accuracy == 1.0);
  CHECK(a.best.k == 1);

  CHECK_THROWS_AS(grid_search(d, y, TargetKind::kBinary, 2, {}, 0.7, 3), UsageError);
  CHECK_THROWS_AS(grid_search(d, y, TargetKind::kBinary, 2, one, 1.0, 3), UsageError);
}

TEST_CASE("model json and prediction csv round trips") {
  std::mt19937_64 gen(3);
  auto d = random_dataset(40, 3, gen);
  auto y = random_classes(40, 3, gen);
  auto m = train_multinomial(d, y, 3, {Penalty::kL1, 1.0});
  m.feature_subset = {0, 1, 2};
  std::stringstream js;
  write_model_json(js, m);
  auto back = read_model_json(js);
  CHECK(back.weights == m.weights);
  CHECK(back.intercepts == m.intercepts);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.reg.kind == Penalty::kL1);

  auto p = predict(m, d);
  p.user_ids.clear();
  for (int i = 0; i < 40; ++i) p.user_ids.push_back("u" + std::to_string(100 + i));
  std::stringstream csv;
  write_prediction_csv(csv, p);
  auto q = read_prediction_csv(csv);
  CHECK(q.user_ids == p.user_ids);
  CHECK(q.prob == p.prob);
  CHECK(q.argmax == p.argmax);
}
