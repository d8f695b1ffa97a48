/*
 * Copyright 2026 The ehrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ehrx/predictor.hpp"
#include "support/matrices.hpp"
#include "support/oracles.hpp"

using namespace ehrx;
using testing_support::gaussian_rows;
using testing_support::make_matrix;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Model zero_model(std::size_t m) {
  Model model;
  for (std::size_t i = 0; i < m; ++i) model.feature_ids.push_back("x" + std::to_string(i));
  model.mean.assign(m, 0.0);
  model.sd.assign(m, 1.0);
  model.weights.assign(m, 0.0);
  return model;
}

}  // namespace

TEST(Predictor, SeparableToyGetsPositiveWeight) {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({i % 2 ? 1.0 : -1.0});
    y.push_back(i % 2);
  }
  const Model m = train(make_matrix(rows), y, TrainConfig{});
  EXPECT_GT(m.weights[0], 0.0);
  EXPECT_GT(predict(m, std::vector<double>{1.0}), 0.5);
  EXPECT_LT(predict(m, std::vector<double>{-1.0}), 0.5);
}

TEST(Predictor, DegenerateLabelsRejected) {
  const std::vector<int> y(5, 1);
  try {
    train(make_matrix({{1}, {2}, {3}, {4}, {5}}), y, TrainConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate labels"), std::string::npos);
  }
}

TEST(Predictor, ZeroModelIsOneHalf) {
  const Model m = zero_model(3);
  EXPECT_EQ(predict(m, std::vector<double>{5, -2, 100}), 0.5);
}

TEST(Predictor, AllMissingIsSigmoidOfBias) {
  Model m = zero_model(2);
  m.weights = {1.5, -0.7};
  m.mean = {3.0, 4.0};
  m.bias = -0.4;
  EXPECT_DOUBLE_EQ(predict(m, std::vector<double>{kNaN, kNaN}), sigmoid(-0.4));
}

TEST(Predictor, MonotoneInPositiveWeight) {
  Model m = zero_model(2);
  m.weights = {0.8, -0.2};
  double prev = 0.0;
  for (double x = -5; x <= 5; x += 0.5) {
    const double p = predict(m, std::vector<double>{x, 1.0});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Predictor, MisalignedVectorRejected) {
  EXPECT_THROW(predict(zero_model(3), std::vector<double>{1, 2}), Error);
}

TEST(Predictor, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const std::size_t n = 40, m = 5;
  std::vector<double> design;
  for (const auto& r : gaussian_rows(n, m, rng)) design.insert(design.end(), r.begin(), r.end());
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng() % 2));
  std::vector<double> w = {0.3, -0.2, 0.5, 0.1, -0.9};
  const double b = 0.2, l2 = 0.05, h = 1e-6;
  const auto g = logistic_loss(design, m, y, w, b, l2);
  for (std::size_t j = 0; j < m; ++j) {
    auto wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (logistic_loss(design, m, y, wp, b, l2).loss -
                       logistic_loss(design, m, y, wm, b, l2).loss) / (2 * h);
    EXPECT_NEAR(g.grad_w[j], fd, 1e-6 * std::max(1.0, std::abs(fd))) << j;
  }
  const double fd_b = (logistic_loss(design, m, y, w, b + h, l2).loss -
                       logistic_loss(design, m, y, w, b - h, l2).loss) / (2 * h);
  EXPECT_NEAR(g.grad_b, fd_b, 1e-6 * std::max(1.0, std::abs(fd_b)));
}

TEST(Auc, MatchesAllPairsOracleWithTies) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 10);  // many ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc(s, y), oracle::auc_pairs(s, y)) << trial;
  }
}

TEST(Auc, ConstantPredictorIsExactlyOneHalf) {
  const std::vector<double> s(9, 0.3);
  const std::vector<int> y = {1, 0, 0, 1, 0, 1, 1, 0, 0};
  EXPECT_EQ(auc(s, y), 0.5);
}

TEST(CrossValidate, PerfectlySeparableIsOne) {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    y.push_back(i % 3 == 0);
    rows.push_back({y.back() ? 2.0 + 0.01 * i : -2.0 - 0.01 * i});
  }
  EXPECT_EQ(cross_validate(make_matrix(rows), y, TrainConfig{}).mean_auc, 1.0);
}

TEST(CrossValidate, PermutedLabelsNearChance) {
  std::mt19937_64 rng(21);
  const auto rows = gaussian_rows(500, 6, rng);
  std::vector<int> y;
  for (std::size_t i = 0; i < rows.size(); ++i) y.push_back(i < 150);
  std::shuffle(y.begin(), y.end(), rng);
  const double a = cross_validate(make_matrix(rows), y, TrainConfig{}).mean_auc;
  EXPECT_NEAR(a, 0.5, 0.07);
}

TEST(CrossValidate, FoldsAreStratified) {
  std::vector<int> y;
  for (int i = 0; i < 103; ++i) y.push_back(i % 4 == 0);
  const auto folds = stratified_folds(y, 10, 3);
  std::vector<int> pos(10, 0), all(10, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++all[folds[i]];
    pos[folds[i]] += y[i];
  }
  EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1);
  EXPECT_LE(*std::max_element(all.begin(), all.end()) - *std::min_element(all.begin(), all.end()), 2);
  EXPECT_EQ(folds, stratified_folds(y, 10, 3));
}

TEST(Train, ConstantColumnDroppedAndMissingImputed) {
  std::mt19937_64 rng(8);
  auto rows = gaussian_rows(80, 3, rng);
  std::vector<int> y;
  for (auto& r : rows) {
    r[1] = 7.0;
    y.push_back(r[0] > 0);
  }
  rows[3][2] = kNaN;
  const Model m = train(make_matrix(rows), y, TrainConfig{});
  EXPECT_FALSE(m.retained(1));
  EXPECT_EQ(m.weights[1], 0.0);
  EXPECT_EQ(m.dropped, std::vector<std::string>{"x1"});
  EXPECT_TRUE(std::isfinite(predict(m, rows[3])));
  EXPECT_EQ(m.term(2, kNaN), 0.0);
}

TEST(Train, JsonRoundTripPredictsIdentically) {
  std::mt19937_64 rng(9);
  const auto rows = gaussian_rows(60, 4, rng);
  std::vector<int> y;
  for (const auto& r : rows) y.push_back(r[0] + r[1] > 0);
  const Model m = train(make_matrix(rows), y, TrainConfig{}, "C");
  const Model back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  EXPECT_EQ(back.target_label, "C");
  for (const auto& r : rows) EXPECT_EQ(predict(back, r), predict(m, r));
}
