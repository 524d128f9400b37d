#include "sacp/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "sacp/rng.hpp"

namespace sacp::models {

namespace {

using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenRowMat> as_eigen(const Matrix& m) {
  return Eigen::Map<const EigenRowMat>(m.data.data(),
                                       static_cast<Eigen::Index>(m.rows),
                                       static_cast<Eigen::Index>(m.cols));
}

struct LinearSolution {
  std::vector<double> coef;
  double intercept = 0.0;
  bool fallback = false;
};

// Centered ridge via normal equations; the intercept is recovered from the
// means and never penalized, so lambda -> inf degrades to the mean predictor.
LinearSolution solve_ridge(const Matrix& X, std::span<const double> y,
                           double lambda) {
  const auto n = static_cast<Eigen::Index>(X.rows);
  const auto d = static_cast<Eigen::Index>(X.cols);
  auto Xe = as_eigen(X);
  Eigen::Map<const Eigen::VectorXd> ye(y.data(), n);

  Eigen::RowVectorXd x_mean = Xe.colwise().mean();
  double y_mean = ye.mean();
  EigenRowMat Xc = Xe.rowwise() - x_mean;
  Eigen::VectorXd yc = ye.array() - y_mean;

  auto attempt = [&](double lam) -> Eigen::VectorXd {
    Eigen::MatrixXd gram = Xc.transpose() * Xc;
    gram.diagonal().array() += lam + 1e-8;
    return gram.ldlt().solve(Xc.transpose() * yc);
  };

  Eigen::VectorXd beta = attempt(lambda);
  bool fallback = false;
  if (!beta.allFinite()) {
    beta = attempt(std::max(lambda, 1e-6));
    fallback = true;
    if (!beta.allFinite()) beta.setZero();
  }

  LinearSolution out;
  out.coef.assign(beta.data(), beta.data() + d);
  out.intercept = y_mean - x_mean.dot(beta);
  out.fallback = fallback;
  return out;
}

Matrix random_feature_map(const Matrix& X, const Matrix& projection,
                          std::span<const double> bias) {
  Matrix z(X.rows, projection.cols);
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < projection.cols; ++j) {
      double acc = bias[j];
      for (std::size_t k = 0; k < X.cols; ++k)
        acc += X(i, k) * projection(k, j);
      z(i, j) = std::tanh(acc);
    }
  return z;
}

// indices of the k nearest training rows, ties broken by row index
std::vector<std::size_t> nearest_rows(const Matrix& train, std::span<const double> x,
                                      std::size_t k) {
  const std::size_t n = train.rows;
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < train.cols; ++j) {
      double diff = train(i, j) - x[j];
      acc += diff * diff;
    }
    dist[i] = acc;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                    });
  idx.resize(k);
  return idx;
}

void softmax_row(std::span<double> logits) {
  double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

}  // namespace

std::vector<std::size_t> Dataset::class_labels() const {
  std::vector<std::size_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = y[i];
    if (!(v >= 0.0) || v != std::floor(v) ||
        v >= static_cast<double>(n_classes))
      throw ingest_error("class labels must be integers in [0, n_classes)");
    out[i] = static_cast<std::size_t>(v);
  }
  return out;
}

Standardizer Standardizer::fit(const Dataset& data,
                               std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw contract_error("empty training split");
  Standardizer s;
  const std::size_t d = data.X.cols;
  s.feat_mean.assign(d, 0.0);
  s.feat_sd.assign(d, 0.0);
  const double n = static_cast<double>(train_rows.size());
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < d; ++j) s.feat_mean[j] += data.X(r, j);
  for (std::size_t j = 0; j < d; ++j) s.feat_mean[j] /= n;
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < d; ++j) {
      double diff = data.X(r, j) - s.feat_mean[j];
      s.feat_sd[j] += diff * diff;
    }
  for (std::size_t j = 0; j < d; ++j) {
    s.feat_sd[j] = std::sqrt(s.feat_sd[j] / n);
    if (s.feat_sd[j] < 1e-12) s.feat_sd[j] = 1.0;
  }

  s.scales_target = data.task == Task::regression;
  if (s.scales_target) {
    double acc = 0.0;
    for (std::size_t r : train_rows) acc += data.y[r];
    s.target_mean = acc / n;
    double var = 0.0;
    for (std::size_t r : train_rows) {
      double diff = data.y[r] - s.target_mean;
      var += diff * diff;
    }
    s.target_sd = std::sqrt(var / n);
    if (s.target_sd < 1e-12) s.target_sd = 1.0;
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& X,
                               std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), X.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < X.cols; ++j)
      out(i, j) = (X(rows[i], j) - feat_mean[j]) / feat_sd[j];
  return out;
}

std::vector<double> Standardizer::transform_targets(
    std::span<const double> y, std::span<const std::size_t> rows) const {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out[i] = scales_target ? (y[rows[i]] - target_mean) / target_sd : y[rows[i]];
  return out;
}

ModelSpec ModelSpec::ols() { return {}; }

ModelSpec ModelSpec::ridge(double lambda) {
  if (lambda < 0.0) throw contract_error("ridge penalty must be nonnegative");
  ModelSpec s;
  s.kind = ModelKind::ridge;
  s.lambda = lambda;
  return s;
}

ModelSpec ModelSpec::knn(std::size_t neighbors) {
  if (neighbors < 1) throw contract_error("knn needs at least one neighbor");
  ModelSpec s;
  s.kind = ModelKind::knn;
  s.neighbors = neighbors;
  return s;
}

ModelSpec ModelSpec::random_feature_ridge(std::size_t width, double lambda) {
  if (width < 1) throw contract_error("feature width must be positive");
  if (lambda < 0.0) throw contract_error("ridge penalty must be nonnegative");
  ModelSpec s;
  s.kind = ModelKind::random_feature_ridge;
  s.width = width;
  s.lambda = lambda;
  return s;
}

ModelSpec ModelSpec::logistic_gd(double learning_rate, std::size_t iterations) {
  if (!(learning_rate > 0.0) || iterations < 1)
    throw contract_error("logistic gd needs positive rate and iterations");
  ModelSpec s;
  s.kind = ModelKind::logistic_gd;
  s.learning_rate = learning_rate;
  s.iterations = iterations;
  return s;
}

ModelSpec ModelSpec::knn_classifier(std::size_t neighbors) {
  if (neighbors < 1) throw contract_error("knn needs at least one neighbor");
  ModelSpec s;
  s.kind = ModelKind::knn_classifier;
  s.neighbors = neighbors;
  return s;
}

Task ModelSpec::task() const {
  return (kind == ModelKind::logistic_gd || kind == ModelKind::knn_classifier)
             ? Task::classification
             : Task::regression;
}

std::string ModelSpec::name() const {
  switch (kind) {
    case ModelKind::ols:
      return "ols";
    case ModelKind::ridge:
      return "ridge";
    case ModelKind::knn:
      return "knn";
    case ModelKind::random_feature_ridge:
      return "rff";
    case ModelKind::logistic_gd:
      return "logistic";
    case ModelKind::knn_classifier:
      return "knn_classifier";
  }
  return "?";
}

FittedModel fit(const ModelSpec& spec, const Matrix& X, std::span<const double> y,
                std::size_t n_classes, std::uint64_t seed) {
  if (X.rows == 0 || X.rows != y.size())
    throw contract_error("training data is empty or misaligned");

  FittedModel m;
  m.spec_ = spec;
  m.input_dim_ = X.cols;

  switch (spec.kind) {
    case ModelKind::ols:
    case ModelKind::ridge: {
      auto sol = solve_ridge(X, y, spec.lambda);
      m.coef_ = std::move(sol.coef);
      m.intercept_ = sol.intercept;
      m.fallback_ = sol.fallback;
      break;
    }
    case ModelKind::random_feature_ridge: {
      Rng rng(mix_seed(seed, 0xF0));
      m.projection_ = Matrix(X.cols, spec.width);
      const double scale = 1.0 / std::sqrt(static_cast<double>(X.cols));
      for (std::size_t k = 0; k < X.cols; ++k)
        for (std::size_t j = 0; j < spec.width; ++j)
          m.projection_(k, j) = rng.normal() * scale;
      m.proj_bias_.resize(spec.width);
      for (std::size_t j = 0; j < spec.width; ++j)
        m.proj_bias_[j] = rng.uniform(-M_PI, M_PI);
      Matrix z = random_feature_map(X, m.projection_, m.proj_bias_);
      auto sol = solve_ridge(z, y, spec.lambda);
      m.coef_ = std::move(sol.coef);
      m.intercept_ = sol.intercept;
      m.fallback_ = sol.fallback;
      break;
    }
    case ModelKind::knn:
    case ModelKind::knn_classifier: {
      m.train_X_ = X;
      m.train_y_.assign(y.begin(), y.end());
      m.n_classes_ = n_classes;
      break;
    }
    case ModelKind::logistic_gd: {
      if (n_classes < 2) throw contract_error("classification needs >= 2 classes");
      m.n_classes_ = n_classes;
      const std::size_t n = X.rows, d = X.cols;
      m.logit_w_ = Matrix(n_classes, d + 1);
      Matrix grad(n_classes, d + 1);
      std::vector<double> probs(n_classes);
      for (std::size_t it = 0; it < spec.iterations; ++it) {
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < n_classes; ++c) {
            double acc = m.logit_w_(c, d);
            for (std::size_t j = 0; j < d; ++j) acc += m.logit_w_(c, j) * X(i, j);
            probs[c] = acc;
          }
          softmax_row(probs);
          auto label = static_cast<std::size_t>(y[i]);
          for (std::size_t c = 0; c < n_classes; ++c) {
            double err = probs[c] - (c == label ? 1.0 : 0.0);
            for (std::size_t j = 0; j < d; ++j) grad(c, j) += err * X(i, j);
            grad(c, d) += err;
          }
        }
        const double step = spec.learning_rate / static_cast<double>(n);
        for (std::size_t c = 0; c < n_classes; ++c)
          for (std::size_t j = 0; j <= d; ++j)
            m.logit_w_(c, j) -= step * grad(c, j);
      }
      break;
    }
  }
  return m;
}

std::vector<double> FittedModel::predict(const Matrix& X) const {
  if (task() != Task::regression)
    throw contract_error("predict() is for regression models");
  if (X.cols != input_dim_) throw contract_error("feature dimension mismatch");

  std::vector<double> out(X.rows, 0.0);
  switch (spec_.kind) {
    case ModelKind::ols:
    case ModelKind::ridge:
      for (std::size_t i = 0; i < X.rows; ++i) {
        double acc = intercept_;
        for (std::size_t j = 0; j < X.cols; ++j) acc += coef_[j] * X(i, j);
        out[i] = acc;
      }
      break;
    case ModelKind::random_feature_ridge: {
      Matrix z = random_feature_map(X, projection_, proj_bias_);
      for (std::size_t i = 0; i < X.rows; ++i) {
        double acc = intercept_;
        for (std::size_t j = 0; j < z.cols; ++j) acc += coef_[j] * z(i, j);
        out[i] = acc;
      }
      break;
    }
    case ModelKind::knn:
      for (std::size_t i = 0; i < X.rows; ++i) {
        auto idx = nearest_rows(train_X_, X.row(i), spec_.neighbors);
        double acc = 0.0;
        for (std::size_t r : idx) acc += train_y_[r];
        out[i] = acc / static_cast<double>(idx.size());
      }
      break;
    default:
      throw contract_error("predict() is for regression models");
  }
  for (double v : out)
    if (!std::isfinite(v)) throw contract_error("non-finite prediction");
  return out;
}

Matrix FittedModel::predict_proba(const Matrix& X) const {
  if (task() != Task::classification)
    throw contract_error("predict_proba() is for classification models");
  if (X.cols != input_dim_) throw contract_error("feature dimension mismatch");

  Matrix out(X.rows, n_classes_, 0.0);
  if (spec_.kind == ModelKind::logistic_gd) {
    const std::size_t d = input_dim_;
    std::vector<double> probs(n_classes_);
    for (std::size_t i = 0; i < X.rows; ++i) {
      for (std::size_t c = 0; c < n_classes_; ++c) {
        double acc = logit_w_(c, d);
        for (std::size_t j = 0; j < d; ++j) acc += logit_w_(c, j) * X(i, j);
        probs[c] = acc;
      }
      softmax_row(probs);
      for (std::size_t c = 0; c < n_classes_; ++c) out(i, c) = probs[c];
    }
  } else {
    for (std::size_t i = 0; i < X.rows; ++i) {
      auto idx = nearest_rows(train_X_, X.row(i), spec_.neighbors);
      for (std::size_t r : idx) {
        auto label = static_cast<std::size_t>(train_y_[r]);
        out(i, label) += 1.0;
      }
      for (std::size_t c = 0; c < n_classes_; ++c)
        out(i, c) /= static_cast<double>(idx.size());
    }
  }
  return out;
}

}  // namespace sacp::models
