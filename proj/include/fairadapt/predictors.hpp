#pragma once

// Downstream predictors trained on original or adapted data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fairadapt/error.hpp"
#include "fairadapt/fair_adapter.hpp"
#include "fairadapt/forest.hpp"
#include "fairadapt/parallel.hpp"
#include "fairadapt/sem_lab.hpp"
#include "fairadapt/tabular_data.hpp"

namespace fairadapt {

/// Maps dataset columns to a numeric design. Continuous columns pass through,
/// ordered discrete columns use their level index, unordered categoricals are
/// one-hot encoded with the first level dropped. The protected attribute and
/// the outcome are excluded.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(const Metadata& schema, const std::string& protected_attribute, const std::string& outcome) {
    for (const auto& c : schema.columns) {
      if (c.name == protected_attribute || c.name == outcome) continue;
      sources_.push_back(c);
      if (c.kind == ColumnKind::categorical_unordered) {
        for (std::size_t l = 1; l < c.levels.size(); ++l) names_.push_back(c.name + "=" + c.levels[l]);
      } else {
        names_.push_back(c.name);
      }
    }
  }

  const std::vector<std::string>& feature_names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  Matrix encode(const Dataset& data) const {
    Matrix X(data.rows(), names_.size());
    std::size_t j = 0;
    for (const auto& spec : sources_) {
      const auto& col = data.column(spec.name);
      if (col.spec.kind != spec.kind || col.spec.levels != spec.levels)
        throw ValidationError("features: column '" + spec.name + "' does not match the training schema");
      if (spec.kind == ColumnKind::categorical_unordered) {
        for (std::size_t i = 0; i < data.rows(); ++i) {
          const auto l = col.level(i);
          if (l > 0) X(i, j + l - 1) = 1.0;
        }
        j += spec.levels.size() - 1;
      } else {
        for (std::size_t i = 0; i < data.rows(); ++i) X(i, j) = col.values[i];
        ++j;
      }
    }
    return X;
  }

 private:
  std::vector<ColumnSpec> sources_;
  std::vector<std::string> names_;
};

struct LogisticModel {
  std::vector<double> coef;
  double intercept = 0.0;
  std::size_t iterations = 0;
  double final_loss = 0.0;
  bool converged = false;
  std::vector<double> loss_history;

  double predict_proba(std::span<const double> x) const {
    if (x.size() != coef.size()) throw ValidationError("logistic: feature count mismatch");
    double eta = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) eta += coef[j] * x[j];
    return expit(eta);
  }
};

/// Mean negative log-likelihood plus (l2 / 2) * |coef|^2; the intercept is
/// not penalized. `params` holds the coefficients followed by the intercept.
inline double logistic_objective(const Matrix& X, const std::vector<double>& y, double l2,
                                 const std::vector<double>& params) {
  const std::size_t p = X.cols;
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    double eta = params[p];
    for (std::size_t j = 0; j < p; ++j) eta += params[j] * X(i, j);
    // log(1 + e^eta) - y * eta, evaluated stably
    loss += (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta))) - y[i] * eta;
  }
  double pen = 0.0;
  for (std::size_t j = 0; j < p; ++j) pen += params[j] * params[j];
  return loss / static_cast<double>(X.rows) + 0.5 * l2 * pen;
}

inline std::vector<double> logistic_gradient(const Matrix& X, const std::vector<double>& y, double l2,
                                             const std::vector<double>& params) {
  const std::size_t p = X.cols;
  std::vector<double> g(p + 1, 0.0);
  for (std::size_t i = 0; i < X.rows; ++i) {
    double eta = params[p];
    for (std::size_t j = 0; j < p; ++j) eta += params[j] * X(i, j);
    const double r = expit(eta) - y[i];
    for (std::size_t j = 0; j < p; ++j) g[j] += r * X(i, j);
    g[p] += r;
  }
  for (auto& v : g) v /= static_cast<double>(X.rows);
  for (std::size_t j = 0; j < p; ++j) g[j] += l2 * params[j];
  return g;
}

/// Damped Newton with backtracking. Converged when the largest gradient
/// component falls below tol.
inline LogisticModel fit_logistic(const Matrix& X, const std::vector<double>& y, double l2 = 1e-4,
                                  std::size_t max_iter = 100, double tol = 1e-8) {
  if (X.rows != y.size()) throw ValidationError("logistic: row count mismatch");
  if (l2 < 0) throw ValidationError("logistic: l2 must be nonnegative");
  std::size_t pos = 0;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw ValidationError("logistic: labels must be 0 or 1");
    pos += v == 1.0;
  }
  if (pos < 2 || X.rows - pos < 2) throw ValidationError("logistic: need at least 2 rows per class");

  const std::size_t p = X.cols, d = p + 1, n = X.rows;
  Eigen::MatrixXd Z(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) Z(i, j) = X(i, j);
    Z(i, p) = 1.0;
  }
  Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  const double mean_y = static_cast<double>(pos) / static_cast<double>(n);
  w(p) = std::log(mean_y / (1 - mean_y));
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d, l2);
  penalty(p) = 0.0;

  auto objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd eta = Z * v;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double e = eta(i);
      loss += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - Y(i) * e;
    }
    return loss / static_cast<double>(n) + 0.5 * (penalty.array() * v.array().square()).sum();
  };

  LogisticModel m;
  double loss = objective(w);
  m.loss_history.push_back(loss);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = Z * w;
    const Eigen::VectorXd prob = eta.unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd weight = prob.array() * (1.0 - prob.array());
    const Eigen::VectorXd grad = Z.transpose() * (prob - Y) / static_cast<double>(n) + penalty.cwiseProduct(w);
    if (grad.cwiseAbs().maxCoeff() < tol) {
      m.converged = true;
      break;
    }
    Eigen::MatrixXd H = Z.transpose() * weight.asDiagonal() * Z / static_cast<double>(n);
    H.diagonal() += penalty;
    H.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double t = 1.0;
    Eigen::VectorXd next = w - step;
    double next_loss = objective(next);
    while (!(next_loss <= loss - 1e-4 * t * grad.dot(step)) && t > 1e-10) {
      t *= 0.5;
      next = w - t * step;
      next_loss = objective(next);
    }
    m.iterations = it + 1;
    if (!(next_loss <= loss)) break;  // no descent possible at working precision
    w = next;
    loss = next_loss;
    m.loss_history.push_back(loss);
  }
  if (!m.converged) {
    const Eigen::VectorXd eta = Z * w;
    const Eigen::VectorXd prob = eta.unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd grad = Z.transpose() * (prob - Y) / static_cast<double>(n) + penalty.cwiseProduct(w);
    m.converged = grad.cwiseAbs().maxCoeff() < tol;
  }
  m.coef.assign(w.data(), w.data() + p);
  m.intercept = w(p);
  m.final_loss = loss;
  if (!w.allFinite()) throw NumericalError("logistic: coefficients became non-finite");
  return m;
}

/// Least squares with an optional ridge penalty on the slopes.
struct LinearModel {
  std::vector<double> coef;
  double intercept = 0.0;

  double predict(std::span<const double> x) const {
    if (x.size() != coef.size()) throw ValidationError("linear: feature count mismatch");
    double v = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * x[j];
    return v;
  }
};

inline LinearModel fit_linear(const Matrix& X, const std::vector<double>& y, double l2 = 0.0) {
  if (X.rows != y.size()) throw ValidationError("linear: row count mismatch");
  if (X.rows <= X.cols) throw ValidationError("linear: need more rows than features");
  const std::size_t p = X.cols, n = X.rows;
  Eigen::MatrixXd Z(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) Z(i, j) = X(i, j);
    Z(i, p) = 1.0;
  }
  Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd G = Z.transpose() * Z / static_cast<double>(n);
  for (std::size_t j = 0; j < p; ++j) G(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += l2;
  const auto ldlt = G.ldlt();
  // LDLT pivots are sorted by magnitude; a tiny one means collinear columns
  const auto& d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * std::max(1.0, d.cwiseAbs().maxCoeff())))
    throw NumericalError("linear: singular design");
  const Eigen::VectorXd w = ldlt.solve(Z.transpose() * Y / static_cast<double>(n));
  if (!w.allFinite()) throw NumericalError("linear: singular design");
  LinearModel m;
  m.coef.assign(w.data(), w.data() + p);
  m.intercept = w(static_cast<Eigen::Index>(p));
  return m;
}

enum class ModelKind { logistic, linear, probability_forest };
enum class TrainingOption { a, b };

struct TrainSettings {
  double l2 = 1e-4;
  std::size_t max_iter = 100;
  double tol = 1e-8;
  ForestParams forest;
};

/// A fitted downstream model together with its feature encoding.
class Predictor {
 public:
  Predictor() = default;

  static Predictor fit(ModelKind kind, const FeatureEncoder& encoder, const Dataset& data, const std::string& outcome,
                       const TrainSettings& settings) {
    Predictor p;
    p.kind_ = kind;
    p.encoder_ = encoder;
    const auto X = encoder.encode(data);
    const auto& ycol = data.column(outcome);
    const bool binary = is_discrete(ycol.kind()) && ycol.spec.levels.size() == 2;
    if (kind != ModelKind::linear && !binary)
      throw ValidationError("predictor: classification needs a binary outcome; use the linear model");
    switch (kind) {
      case ModelKind::logistic:
        p.logistic_ = fit_logistic(X, ycol.values, settings.l2, settings.max_iter, settings.tol);
        if (!p.logistic_.converged)
          throw NumericalError("logistic regression did not converge in " + std::to_string(settings.max_iter) +
                               " iterations; increase l2");
        break;
      case ModelKind::linear:
        p.linear_ = fit_linear(X, ycol.values, 0.0);
        break;
      case ModelKind::probability_forest: {
        std::vector<std::size_t> labels(data.rows());
        for (std::size_t i = 0; i < data.rows(); ++i) labels[i] = ycol.level(i);
        p.forest_ = ProbabilityForest::fit(X, labels, 2, PredictorSchema::numeric(X.cols), settings.forest);
        break;
      }
    }
    return p;
  }

  ModelKind kind() const { return kind_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  const LogisticModel& logistic() const { return logistic_; }
  const LinearModel& linear() const { return linear_; }

  /// P(outcome = second level | features); the conditional mean for the linear model.
  std::vector<double> predict(const Dataset& data) const { return predict_matrix(encoder_.encode(data)); }

  std::vector<double> predict_matrix(const Matrix& X) const {
    std::vector<double> out(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
      switch (kind_) {
        case ModelKind::logistic: out[i] = logistic_.predict_proba(X.row(i)); break;
        case ModelKind::linear: out[i] = linear_.predict(X.row(i)); break;
        case ModelKind::probability_forest: out[i] = forest_->predict(X.row(i))[1]; break;
      }
    }
    return out;
  }

  nlohmann::json summary() const {
    nlohmann::json j;
    j["features"] = encoder_.feature_names();
    switch (kind_) {
      case ModelKind::logistic:
        j["kind"] = "logistic";
        j["coefficients"] = logistic_.coef;
        j["intercept"] = logistic_.intercept;
        j["iterations"] = logistic_.iterations;
        j["final_loss"] = logistic_.final_loss;
        j["converged"] = logistic_.converged;
        break;
      case ModelKind::linear:
        j["kind"] = "linear";
        j["coefficients"] = linear_.coef;
        j["intercept"] = linear_.intercept;
        break;
      case ModelKind::probability_forest:
        j["kind"] = "probability_forest";
        j["num_trees"] = forest_->num_trees();
        break;
    }
    return j;
  }

 private:
  ModelKind kind_ = ModelKind::logistic;
  FeatureEncoder encoder_;
  LogisticModel logistic_;
  LinearModel linear_;
  std::optional<ProbabilityForest> forest_;
};

/// Option A fits on the original covariates and labels, option B on the
/// adapted covariates and adapted labels. Either way the model is applied to
/// adapted covariates.
inline Predictor train(TrainingOption option, const FittedAdapter& adapter, const Dataset& train_data,
                       const Dataset& adapted_train, ModelKind kind, const TrainSettings& settings = {}) {
  if (train_data.rows() != adapted_train.rows()) throw ValidationError("train: original and adapted rows differ");
  const auto& g = adapter.graph();
  const FeatureEncoder enc(adapter.schema(), g.protected_attribute(), g.outcome());
  return Predictor::fit(kind, enc, option == TrainingOption::a ? train_data : adapted_train, g.outcome(), settings);
}

/// Averages the predictions of models trained in two baseline worlds on the
/// concatenated adapted covariates of both worlds.
class NonBaselinePredictor {
 public:
  static NonBaselinePredictor fit(const FittedAdapter& world0, const FittedAdapter& world1, ModelKind kind,
                                  const TrainSettings& settings = {}) {
    if (!(world0.graph() == world1.graph()))
      throw ValidationError("non-baseline: adapters were fitted on different graphs");
    if (world0.adapted_train().rows() != world1.adapted_train().rows() ||
        !(world0.schema().columns == world1.schema().columns))
      throw ValidationError("non-baseline: adapters were fitted on different data");
    if (world0.baseline() == world1.baseline())
      throw ValidationError("non-baseline: the two adapters share the same baseline level");
    NonBaselinePredictor p;
    p.world0_ = &world0;
    p.world1_ = &world1;
    const auto& g = world0.graph();
    p.encoder_ = FeatureEncoder(world0.schema(), g.protected_attribute(), g.outcome());
    const auto Xs = p.stack(world0.adapted_train(), world1.adapted_train());
    p.model0_ = fit_on(kind, Xs, world0.adapted_train().column(g.outcome()), settings);
    p.model1_ = fit_on(kind, Xs, world1.adapted_train().column(g.outcome()), settings);
    return p;
  }

  /// Per-row mean of the two world predictions.
  std::vector<double> predict(const Dataset& test) const {
    const auto a0 = world0_->adapt(test).data;
    const auto a1 = world1_->adapt(test).data;
    const auto Xs = stack(a0, a1);
    const auto p0 = model0_.predict_matrix(Xs), p1 = model1_.predict_matrix(Xs);
    std::vector<double> out(p0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (p0[i] + p1[i]);
    return out;
  }

  std::pair<std::vector<double>, std::vector<double>> predict_worlds(const Dataset& test) const {
    const auto Xs = stack(world0_->adapt(test).data, world1_->adapt(test).data);
    return {model0_.predict_matrix(Xs), model1_.predict_matrix(Xs)};
  }

 private:
  Matrix stack(const Dataset& d0, const Dataset& d1) const {
    const auto X0 = encoder_.encode(d0), X1 = encoder_.encode(d1);
    Matrix Xs(X0.rows, X0.cols + X1.cols);
    for (std::size_t i = 0; i < X0.rows; ++i) {
      std::copy(X0.row(i).begin(), X0.row(i).end(), Xs.row(i).begin());
      std::copy(X1.row(i).begin(), X1.row(i).end(), Xs.row(i).begin() + static_cast<std::ptrdiff_t>(X0.cols));
    }
    return Xs;
  }

  static Predictor fit_on(ModelKind kind, const Matrix& X, const Column& y, const TrainSettings& settings) {
    // Wrap the stacked design in a dataset of continuous columns so the
    // regular fitting path applies.
    std::vector<Column> cols;
    Metadata meta;
    for (std::size_t j = 0; j < X.cols; ++j) {
      Column c{ColumnSpec{"f" + std::to_string(j), ColumnKind::continuous, {}, Role::feature}, {}};
      c.values.resize(X.rows);
      for (std::size_t i = 0; i < X.rows; ++i) c.values[i] = X(i, j);
      meta.columns.push_back(c.spec);
      cols.push_back(std::move(c));
    }
    Column yc = y;
    yc.spec.name = "__outcome";
    meta.columns.push_back(yc.spec);
    cols.push_back(std::move(yc));
    const Dataset d(std::move(cols));
    const FeatureEncoder enc(meta, "", "__outcome");
    return Predictor::fit(kind, enc, d, "__outcome", settings);
  }

  const FittedAdapter* world0_ = nullptr;
  const FittedAdapter* world1_ = nullptr;
  FeatureEncoder encoder_;
  Predictor model0_, model1_;
};

}  // namespace fairadapt
