#include "cdrdemo/classify.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "cdrdemo/common.hpp"
#include "cdrdemo/io.hpp"
#include "cdrdemo/parallel.hpp"
#include "cdrdemo/rng.hpp"

namespace cdrdemo {

std::string_view to_string(Penalty p) { return p == Penalty::kL1 ? "L1" : "L2"; }

Dataset make_dataset(const FeatureMatrix& m, std::span<const std::size_t> row_indices,
                     std::span<const std::size_t> column_indices) {
  Dataset d;
  d.rows = row_indices.size();
  d.cols = column_indices.size();
  d.x.resize(d.rows * d.cols);
  for (std::size_t c : column_indices) {
    if (c >= m.cols()) throw UsageError("feature column out of range");
    d.feature_names.push_back(m.columns[c].name);
  }
  for (std::size_t i = 0; i < d.rows; ++i) {
    if (row_indices[i] >= m.rows()) throw UsageError("feature row out of range");
    for (std::size_t j = 0; j < d.cols; ++j) {
      const double v = m.at(row_indices[i], column_indices[j]);
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
      d.x[i * d.cols + j] = v;
    }
  }
  return d;
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Linear scores for either model family. `rows` free weight rows over
// `data.cols` features, followed by `rows` intercepts.
class LinearProblem {
 public:
  LinearProblem(const Dataset& data, std::span<const int> labels, std::size_t classes,
                bool binary, const Regularization& reg)
      : data_(data), labels_(labels), classes_(classes), binary_(binary), reg_(reg),
        rows_(binary ? 1 : classes - 1) {
    if (data.rows == 0) throw DataError("empty training set");
    if (labels.size() != data.rows) throw DataError("label count does not match rows");
    if (!(reg.strength > 0.0)) throw UsageError("regularization strength C must be > 0");
    for (double v : data.x) {
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
  }

  std::size_t dim() const { return rows_ * data_.cols + rows_; }
  std::size_t weight_count() const { return rows_ * data_.cols; }
  double inv_n() const { return 1.0 / static_cast<double>(data_.rows); }

  // Smooth part: C * mean(loss) (+ |w|^2 / 2n for L2). Fills `grad` when
  // non-null.
  double smooth(std::span<const double> p, std::vector<double>* grad) const {
    const std::size_t n = data_.rows, cols = data_.cols;
    if (grad) grad->assign(dim(), 0.0);
    double loss = 0.0;
    std::vector<double> scores(rows_);
    std::vector<double> coef(rows_);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = data_.x.data() + i * cols;
      for (std::size_t r = 0; r < rows_; ++r) {
        double s = p[weight_count() + r];
        const double* w = p.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) s += w[j] * xi[j];
        scores[r] = s;
      }
      if (binary_) {
        const double y = labels_[i];
        loss += softplus(-y * scores[0]);
        coef[0] = -y * sigmoid(-y * scores[0]);
      } else {
        double mx = 0.0;  // pinned class score
        for (double s : scores) mx = std::max(mx, s);
        double z = std::exp(-mx);
        for (double s : scores) z += std::exp(s - mx);
        const double lse = mx + std::log(z);
        const int y = labels_[i];
        loss += lse - (static_cast<std::size_t>(y) < rows_ ? scores[y] : 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
          coef[r] = std::exp(scores[r] - lse) - (static_cast<int>(r) == y ? 1.0 : 0.0);
        }
      }
      if (grad) {
        for (std::size_t r = 0; r < rows_; ++r) {
          double* g = grad->data() + r * cols;
          const double cr = coef[r];
          for (std::size_t j = 0; j < cols; ++j) g[j] += cr * xi[j];
          (*grad)[weight_count() + r] += cr;
        }
      }
    }
    const double scale = reg_.strength * inv_n();
    double value = scale * loss;
    if (grad) {
      for (double& g : *grad) g *= scale;
    }
    if (reg_.kind == Penalty::kL2) {
      double sq = 0.0;
      for (std::size_t k = 0; k < weight_count(); ++k) {
        sq += p[k] * p[k];
        if (grad) (*grad)[k] += p[k] * inv_n();
      }
      value += 0.5 * sq * inv_n();
    }
    return value;
  }

  double nonsmooth(std::span<const double> p) const {
    if (reg_.kind != Penalty::kL1) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < weight_count(); ++k) s += std::fabs(p[k]);
    return s * inv_n();
  }

  double objective(std::span<const double> p) const { return smooth(p, nullptr) + nonsmooth(p); }

  void prox(std::vector<double>& p, double step) const {
    if (reg_.kind != Penalty::kL1) return;
    const double thr = step * inv_n();
    for (std::size_t k = 0; k < weight_count(); ++k) {
      const double v = p[k];
      p[k] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
    }
  }

  // Infinity norm of the minimum-norm subgradient.
  double optimality(std::span<const double> p, const std::vector<double>& grad) const {
    double worst = 0.0;
    const double lam = inv_n();
    for (std::size_t k = 0; k < dim(); ++k) {
      double v = grad[k];
      if (reg_.kind == Penalty::kL1 && k < weight_count()) {
        if (p[k] > 0) {
          v += lam;
        } else if (p[k] < 0) {
          v -= lam;
        } else {
          v = std::max(0.0, std::fabs(v) - lam);
        }
      }
      worst = std::max(worst, std::fabs(v));
    }
    return worst;
  }

  std::size_t rows() const { return rows_; }

 private:
  const Dataset& data_;
  std::span<const int> labels_;
  std::size_t classes_;
  bool binary_;
  Regularization reg_;
  std::size_t rows_;
};

// Monotone FISTA from w = 0 with backtracking and function-value restart.
// The accepted iterate sequence never increases the full objective.
std::vector<double> minimize(const LinearProblem& prob, const OptimizerOptions& opts,
                             TrainReport* report) {
  const std::size_t d = prob.dim();
  std::vector<double> x(d, 0.0);
  std::vector<double> gx, y = x, gy, z(d), gz, x_prev = x;
  double fx = prob.smooth(x, &gx);
  double obj = fx + prob.nonsmooth(x);
  double fy = fx;
  gy = gx;
  double L = 1.0, t = 1.0;
  TrainReport rep;
  if (opts.record_objective) rep.objective_trace.push_back(obj);
  std::size_t it = 0;
  for (; it < opts.max_iterations; ++it) {
    rep.gradient_norm = prob.optimality(x, gx);
    if (rep.gradient_norm < opts.gradient_tol) {
      rep.converged = true;
      break;
    }
    L *= 0.9;
    double fz = 0.0;
    bool ok = false;
    for (int bt = 0; bt < 60; ++bt) {
      const double step = 1.0 / L;
      for (std::size_t k = 0; k < d; ++k) z[k] = y[k] - step * gy[k];
      prob.prox(z, step);
      fz = prob.smooth(z, &gz);
      double lin = 0.0, sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = z[k] - y[k];
        lin += gy[k] * diff;
        sq += diff * diff;
      }
      if (fz <= fy + lin + 0.5 * L * sq) {
        ok = true;
        break;
      }
      L *= 2.0;
    }
    if (!ok) break;
    const double obj_z = fz + prob.nonsmooth(z);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    x_prev = x;
    if (obj_z <= obj) {
      x = z;
      gx = gz;
      fx = fz;
      assert(obj_z <= obj);
      obj = obj_z;
      for (std::size_t k = 0; k < d; ++k) y[k] = x[k] + ((t - 1.0) / t_next) * (x[k] - x_prev[k]);
      t = t_next;
    } else {
      // Restart from the last accepted iterate.
      y = x;
      t = 1.0;
    }
    if (y == x) {
      fy = fx;
      gy = gx;
    } else {
      fy = prob.smooth(y, &gy);
    }
    if (opts.record_objective) rep.objective_trace.push_back(obj);
  }
  if (!rep.converged) rep.gradient_norm = prob.optimality(x, gx);
  rep.converged = rep.gradient_norm < opts.gradient_tol;
  rep.iterations = it;
  rep.objective = obj;
  if (report) *report = std::move(rep);
  return x;
}

ClassifierModel unpack(const LinearProblem& prob, std::span<const double> p,
                       const Dataset& data, std::size_t classes, bool binary,
                       const Regularization& reg) {
  ClassifierModel m;
  m.binary = binary;
  m.classes = classes;
  m.reg = reg;
  m.feature_names = data.feature_names;
  const std::size_t rows = prob.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    m.weights.emplace_back(p.begin() + static_cast<std::ptrdiff_t>(r * data.cols),
                           p.begin() + static_cast<std::ptrdiff_t>((r + 1) * data.cols));
    m.intercepts.push_back(p[prob.weight_count() + r]);
  }
  if (!binary) {
    m.weights.emplace_back(data.cols, 0.0);
    m.intercepts.push_back(0.0);
  }
  return m;
}

// Single-class data is accepted: the unregularized intercept grows until
// the gradient tolerance is met, so the model predicts that class everywhere.
void check_classes(std::span<const int> labels, bool binary, std::size_t classes) {
  for (int y : labels) {
    if (binary) {
      if (y != -1 && y != 1) throw DataError("binary labels must be -1 or +1");
    } else if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("class label out of range");
    }
  }
}

ClassifierModel fit(const Dataset& data, std::span<const int> labels, bool binary,
                    std::size_t classes, const Regularization& reg, const OptimizerOptions& opts,
                    TrainReport* report) {
  if (!binary && classes < 2) throw UsageError("multinomial model needs at least 2 classes");
  check_classes(labels, binary, classes);
  LinearProblem prob(data, labels, classes, binary, reg);
  auto p = minimize(prob, opts, report);
  return unpack(prob, p, data, classes, binary, reg);
}

}  // namespace

ClassifierModel train_logistic(const Dataset& data, std::span<const int> labels,
                               const Regularization& reg, const OptimizerOptions& opts,
                               TrainReport* report) {
  return fit(data, labels, true, 2, reg, opts, report);
}

ClassifierModel train_multinomial(const Dataset& data, std::span<const int> labels,
                                  std::size_t classes, const Regularization& reg,
                                  const OptimizerOptions& opts, TrainReport* report) {
  return fit(data, labels, false, classes, reg, opts, report);
}

double logistic_objective(const Dataset& data, std::span<const int> labels,
                          const Regularization& reg, std::span<const double> params) {
  LinearProblem prob(data, labels, 2, true, reg);
  if (params.size() != prob.dim()) throw UsageError("parameter vector has wrong size");
  return prob.objective(params);
}

double multinomial_objective(const Dataset& data, std::span<const int> labels,
                             std::size_t classes, const Regularization& reg,
                             std::span<const double> params) {
  LinearProblem prob(data, labels, classes, false, reg);
  if (params.size() != prob.dim()) throw UsageError("parameter vector has wrong size");
  return prob.objective(params);
}

std::vector<double> multinomial_smooth_gradient(const Dataset& data, std::span<const int> labels,
                                                std::size_t classes, const Regularization& reg,
                                                std::span<const double> params) {
  LinearProblem prob(data, labels, classes, false, reg);
  if (params.size() != prob.dim()) throw UsageError("parameter vector has wrong size");
  std::vector<double> g;
  prob.smooth(params, &g);
  return g;
}

PredictionSet predict(const ClassifierModel& model, const Dataset& data) {
  if (data.cols != model.feature_names.size()) {
    throw DataError("feature count does not match model");
  }
  PredictionSet out;
  out.classes = model.classes;
  out.prob.resize(data.rows * model.classes);
  out.argmax.resize(data.rows);
  std::vector<double> scores(model.weights.size());
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double* xi = data.x.data() + i * data.cols;
    for (std::size_t r = 0; r < model.weights.size(); ++r) {
      double s = model.intercepts[r];
      for (std::size_t j = 0; j < data.cols; ++j) s += model.weights[r][j] * xi[j];
      scores[r] = s;
    }
    double* row = out.prob.data() + i * model.classes;
    if (model.binary) {
      row[1] = sigmoid(scores[0]);
      row[0] = sigmoid(-scores[0]);
    } else {
      const double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (std::size_t r = 0; r < scores.size(); ++r) {
        row[r] = std::exp(scores[r] - mx);
        z += row[r];
      }
      for (std::size_t r = 0; r < scores.size(); ++r) row[r] /= z;
    }
    out.argmax[i] = static_cast<Category>(std::max_element(row, row + model.classes) - row);
  }
  return out;
}

PredictionSet predict(const ClassifierModel& model, const FeatureMatrix& features) {
  std::vector<std::size_t> cols;
  for (const auto& name : model.feature_names) {
    const auto c = features.column_index(name);
    if (!c) throw DataError("feature column '" + name + "' missing");
    cols.push_back(*c);
  }
  std::vector<std::size_t> rows(features.rows());
  std::iota(rows.begin(), rows.end(), 0);
  auto out = predict(model, make_dataset(features, rows, cols));
  out.user_ids = features.user_ids;
  return out;
}

std::vector<double> separation_scores(const Dataset& data, std::span<const int> labels) {
  int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
  for (int y : labels) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  std::vector<int> classes;
  if (lo == -1 && hi == 1) {
    classes = {1};  // one t-test suffices for two classes
  } else {
    for (int c = lo; c <= hi; ++c) classes.push_back(c);
  }
  std::vector<double> scores(data.cols, 0.0);
  for (std::size_t j = 0; j < data.cols; ++j) {
    for (int c : classes) {
      double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
      double n1 = 0, n2 = 0;
      for (std::size_t i = 0; i < data.rows; ++i) {
        const double v = data.at(i, j);
        if (labels[i] == c) {
          s1 += v;
          q1 += v * v;
          n1 += 1;
        } else {
          s2 += v;
          q2 += v * v;
          n2 += 1;
        }
      }
      if (n1 < 2 || n2 < 2) continue;
      const double m1 = s1 / n1, m2 = s2 / n2;
      const double v1 = std::max(0.0, (q1 - n1 * m1 * m1) / (n1 - 1));
      const double v2 = std::max(0.0, (q2 - n2 * m2 * m2) / (n2 - 1));
      const double se = std::sqrt(v1 / n1 + v2 / n2);
      const double t = se > 0 ? std::fabs(m1 - m2) / se : 0.0;
      scores[j] = std::max(scores[j], t);
    }
  }
  return scores;
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (k == 0 || k >= scores.size()) return idx;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<GridConfig> GridSpec::expand() const {
  std::vector<GridConfig> out;
  for (double c : c_values) {
    for (std::size_t k : k_values) {
      for (Penalty p : penalties) out.push_back({c, k, p});
    }
  }
  return out;
}

double accuracy(const PredictionSet& p, std::span<const int> class_labels) {
  if (class_labels.size() != p.argmax.size()) throw DataError("label count mismatch");
  if (class_labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < class_labels.size(); ++i) hits += p.argmax[i] == class_labels[i];
  return static_cast<double>(hits) / static_cast<double>(class_labels.size());
}

namespace {

Dataset subset(const Dataset& d, std::span<const std::size_t> rows,
               std::span<const std::size_t> cols) {
  Dataset out;
  out.rows = rows.size();
  out.cols = cols.size();
  out.x.resize(out.rows * out.cols);
  for (std::size_t c : cols) out.feature_names.push_back(d.feature_names[c]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out.x[i * out.cols + j] = d.at(rows[i], cols[j]);
  }
  return out;
}

}  // namespace

GridSearchResult grid_search(const Dataset& data, std::span<const int> labels,
                             TargetKind target, std::size_t classes,
                             const std::vector<GridConfig>& grid, double split,
                             std::uint64_t rng_seed, unsigned threads,
                             const OptimizerOptions& opts) {
  if (grid.empty()) throw UsageError("grid is empty");
  if (!(split > 0.0 && split < 1.0)) throw UsageError("split must be in (0,1)");
  if (labels.size() != data.rows) throw DataError("label count does not match rows");

  std::vector<GridConfig> configs;
  for (const auto& c : grid) {
    if (std::find(configs.begin(), configs.end(), c) == configs.end()) configs.push_back(c);
  }

  GridSearchResult res;
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(rng_seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(data.rows)));
  if (n_train == 0 || n_train >= data.rows) throw DataError("split leaves an empty partition");
  res.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  res.validation_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(res.train_rows.begin(), res.train_rows.end());
  std::sort(res.validation_rows.begin(), res.validation_rows.end());

  std::vector<std::size_t> all_cols(data.cols);
  std::iota(all_cols.begin(), all_cols.end(), 0);
  const Dataset train_full = subset(data, res.train_rows, all_cols);
  std::vector<int> y_train, y_valid;
  for (std::size_t r : res.train_rows) y_train.push_back(labels[r]);
  for (std::size_t r : res.validation_rows) y_valid.push_back(labels[r]);
  std::vector<int> valid_class(y_valid);
  if (target == TargetKind::kBinary) {
    for (int& y : valid_class) y = y > 0 ? 1 : 0;
  }
  const auto scores = separation_scores(train_full, y_train);

  std::vector<GridResultRow> rows(configs.size());
  std::vector<ClassifierModel> models(configs.size());
  const bool binary = target == TargetKind::kBinary;
  parallel_for_each(configs.size(), threads, [&](std::size_t i) {
    const auto& cfg = configs[i];
    const auto cols = select_top_k(scores, cfg.k);
    const Dataset tr = subset(data, res.train_rows, cols);
    const Regularization reg{cfg.penalty, cfg.c};
    ClassifierModel model = fit(tr, y_train, binary, binary ? 2 : classes, reg, opts, nullptr);
    model.feature_subset = cols;
    const Dataset va = subset(data, res.validation_rows, cols);
    rows[i] = {cfg, cols.size(), accuracy(predict(model, va), valid_class)};
    models[i] = std::move(model);
  });

  std::size_t best = 0;
  auto better = [](const GridResultRow& a, const GridResultRow& b) {
    if (a.validation_accuracy != b.validation_accuracy) {
      return a.validation_accuracy > b.validation_accuracy;
    }
    if (a.effective_k != b.effective_k) return a.effective_k < b.effective_k;
    if (a.config.c != b.config.c) return a.config.c < b.config.c;
    return a.config.penalty == Penalty::kL2 && b.config.penalty == Penalty::kL1;
  };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (better(rows[i], rows[best])) best = i;
  }
  res.best = rows[best].config;
  res.best_accuracy = rows[best].validation_accuracy;
  res.model = std::move(models[best]);
  res.rows = std::move(rows);
  return res;
}

void write_model_json(std::ostream& out, const ClassifierModel& model) {
  nlohmann::ordered_json j;
  j["kind"] = model.binary ? "binary" : "multinomial";
  j["classes"] = model.classes;
  j["penalty"] = std::string(to_string(model.reg.kind));
  j["C"] = model.reg.strength;
  j["feature_subset"] = model.feature_subset;
  j["features"] = model.feature_names;
  j["weights"] = model.weights;
  j["intercepts"] = model.intercepts;
  out << j.dump(2) << '\n';
}

ClassifierModel read_model_json(std::istream& in) {
  ClassifierModel m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.binary = j.at("kind").get<std::string>() == "binary";
    m.classes = j.at("classes").get<std::size_t>();
    m.reg.kind = j.at("penalty").get<std::string>() == "L2" ? Penalty::kL2 : Penalty::kL1;
    m.reg.strength = j.at("C").get<double>();
    m.feature_subset = j.at("feature_subset").get<std::vector<std::size_t>>();
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.intercepts = j.at("intercepts").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model json: ") + e.what());
  }
  if (m.weights.size() != m.intercepts.size()) throw DataError("model weight/intercept mismatch");
  for (const auto& w : m.weights) {
    if (w.size() != m.feature_names.size()) throw DataError("model weight row has wrong length");
  }
  return m;
}

void write_prediction_csv(std::ostream& out, const PredictionSet& p) {
  out << "user_id";
  for (std::size_t k = 0; k < p.classes; ++k) out << ",p_" << k;
  out << ",argmax\n";
  for (std::size_t i = 0; i < p.argmax.size(); ++i) {
    out << p.user_ids[i];
    for (double v : p.row(i)) out << ',' << io::format_double(v);
    out << ',' << p.argmax[i] << '\n';
  }
}

PredictionSet read_prediction_csv(std::istream& in) {
  PredictionSet p;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto f = io::split_fields(view);
    if (!header) {
      if (f.size() < 3 || f.front() != "user_id" || f.back() != "argmax") {
        throw ParseError(lineno, "expected user_id,p_0,...,argmax header");
      }
      p.classes = f.size() - 2;
      header = true;
      continue;
    }
    if (f.size() != p.classes + 2) throw ParseError(lineno, "wrong field count");
    if (!p.user_ids.empty() && !(p.user_ids.back() < f[0])) {
      throw ParseError(lineno, "user ids must be strictly ascending");
    }
    p.user_ids.emplace_back(f[0]);
    double sum = 0.0;
    for (std::size_t k = 0; k < p.classes; ++k) {
      const double v = io::parse_double(f[k + 1], lineno);
      if (!(v >= 0.0 && v <= 1.0)) throw ParseError(lineno, "probability out of [0,1]");
      sum += v;
      p.prob.push_back(v);
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw ParseError(lineno, "probabilities do not sum to 1");
    p.argmax.push_back(static_cast<Category>(io::parse_int(f.back(), lineno)));
  }
  if (!header) throw DataError("empty prediction file");
  return p;
}

}  // namespace cdrdemo
