#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sacp/core.hpp"

namespace sacp::models {

/// Tabular dataset; y holds real targets for regression and 0-based class
/// indices (stored as doubles) for classification.
struct Dataset {
  Matrix X;
  std::vector<double> y;
  Task task = Task::regression;
  std::size_t n_classes = 0;

  std::size_t size() const { return X.rows; }
  std::vector<std::size_t> class_labels() const;
};

/// Feature (and optionally target) standardization, fitted on training rows
/// only and applied unchanged to calibration and test rows.
struct Standardizer {
  std::vector<double> feat_mean, feat_sd;
  bool scales_target = false;
  double target_mean = 0.0;
  double target_sd = 1.0;

  static Standardizer fit(const Dataset& data,
                          std::span<const std::size_t> train_rows);

  Matrix transform(const Matrix& X, std::span<const std::size_t> rows) const;
  std::vector<double> transform_targets(std::span<const double> y,
                                        std::span<const std::size_t> rows) const;
  double target_scale() const { return scales_target ? target_sd : 1.0; }
  double destandardize_target(double v) const {
    return scales_target ? v * target_sd + target_mean : v;
  }
};

enum class ModelKind {
  ols,
  ridge,
  knn,
  random_feature_ridge,
  logistic_gd,
  knn_classifier,
};

struct ModelSpec {
  ModelKind kind = ModelKind::ols;
  double lambda = 0.0;
  std::size_t neighbors = 5;
  std::size_t width = 64;
  double learning_rate = 0.1;
  std::size_t iterations = 300;

  static ModelSpec ols();
  static ModelSpec ridge(double lambda);
  static ModelSpec knn(std::size_t neighbors);
  static ModelSpec random_feature_ridge(std::size_t width, double lambda);
  static ModelSpec logistic_gd(double learning_rate, std::size_t iterations);
  static ModelSpec knn_classifier(std::size_t neighbors);

  Task task() const;
  std::string name() const;
};

/// Trained base learner; predict is pure after fit.
class FittedModel {
 public:
  Task task() const { return spec_.task(); }
  ModelKind kind() const { return spec_.kind; }

  /// True when the normal-equation solve had to fall back to extra ridge.
  bool ridge_fallback() const { return fallback_; }

  std::vector<double> predict(const Matrix& X) const;

  /// Row-stochastic n x C class probabilities.
  Matrix predict_proba(const Matrix& X) const;

 private:
  friend FittedModel fit(const ModelSpec&, const Matrix&,
                         std::span<const double>, std::size_t, std::uint64_t);

  ModelSpec spec_;
  bool fallback_ = false;
  std::size_t input_dim_ = 0;

  // linear family
  std::vector<double> coef_;
  double intercept_ = 0.0;
  Matrix projection_;               // d x width, random-feature map
  std::vector<double> proj_bias_;   // width

  // neighbor family
  Matrix train_X_;
  std::vector<double> train_y_;

  // logistic
  Matrix logit_w_;  // C x (d+1)
  std::size_t n_classes_ = 0;
};

FittedModel fit(const ModelSpec& spec, const Matrix& X, std::span<const double> y,
                std::size_t n_classes, std::uint64_t seed);

}  // namespace sacp::models
