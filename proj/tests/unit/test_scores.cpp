#include <doctest.h>

#include "sacp/rng.hpp"
#include "sacp/scores.hpp"

using namespace sacp;

TEST_CASE("absolute residual") {
  CHECK(abs_residual(2.0, 3.5) == 1.5);
  CHECK(abs_residual(4.0, 4.0) == 0.0);
  CHECK(abs_residual(-1.0, 1.0) == 2.0);
}

TEST_CASE("residual is symmetric in prediction and label") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    double a = rng.normal() * 5.0, b = rng.normal() * 5.0;
    CHECK(abs_residual(a, b) == abs_residual(b, a));
    CHECK(abs_residual(a, b) >= 0.0);
  }
}

TEST_CASE("one minus probability") {
  const double p1[] = {0.7, 0.2, 0.1};
  CHECK(one_minus_prob(p1, 0) == doctest::Approx(0.3));
  const double p2[] = {0.0, 1.0, 0.0};
  CHECK(one_minus_prob(p2, 1) == 0.0);
  const double p3[] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(one_minus_prob(p3, 2) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(one_minus_prob(p3, 3), contract_error);
  const double bad[] = {0.9, 0.3};
  CHECK_THROWS_AS(one_minus_prob(bad, 0), contract_error);
}

TEST_CASE("classification score decreases in the true-class probability") {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    double p = rng.uniform01() * 0.98;
    double q = p + 0.01;
    const double row_p[] = {p, 1.0 - p};
    const double row_q[] = {q, 1.0 - q};
    CHECK(one_minus_prob(row_p, 0) > one_minus_prob(row_q, 0));
  }
}

TEST_CASE("regression calibration scores") {
  Matrix preds(2, 1);
  preds(0, 0) = 1.0;
  preds(1, 0) = 2.0;
  const double labels[] = {1.5, 1.0};
  ScoreMatrix sm = build_calibration_scores(preds, labels);
  CHECK(sm(0, 0) == 0.5);
  CHECK(sm(1, 0) == 1.0);

  // identical model outputs give identical columns
  Matrix twin(2, 2);
  twin(0, 0) = twin(0, 1) = 1.0;
  twin(1, 0) = twin(1, 1) = 2.0;
  ScoreMatrix sm2 = build_calibration_scores(twin, labels);
  CHECK(sm2(0, 0) == sm2(0, 1));
  CHECK(sm2(1, 0) == sm2(1, 1));

  const double short_labels[] = {1.0};
  CHECK_THROWS_AS(build_calibration_scores(preds, short_labels), contract_error);
}

TEST_CASE("classification calibration scores match entrywise recomputation") {
  // K=2 models, C=2 classes, n=2 points
  std::vector<Matrix> probs(2, Matrix(2, 2));
  probs[0](0, 0) = 0.8;
  probs[0](0, 1) = 0.2;
  probs[0](1, 0) = 0.4;
  probs[0](1, 1) = 0.6;
  probs[1](0, 0) = 0.55;
  probs[1](0, 1) = 0.45;
  probs[1](1, 0) = 0.1;
  probs[1](1, 1) = 0.9;
  const std::size_t labels[] = {0, 1};
  ScoreMatrix sm = build_calibration_scores(probs, labels);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(sm(i, k) == one_minus_prob(probs[k].row(i), labels[i]));
}

TEST_CASE("row stochastic validation") {
  Matrix good(1, 3);
  good(0, 0) = 0.2;
  good(0, 1) = 0.3;
  good(0, 2) = 0.5;
  CHECK_NOTHROW(validate_row_stochastic(good));
  Matrix off(1, 2);
  off(0, 0) = 0.6;
  off(0, 1) = 0.6;
  CHECK_THROWS_AS(validate_row_stochastic(off), contract_error);
}
