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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "json.hpp"

namespace ehrx {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct TrainConfig {
  double l2_strength = 1e-2;
  double learning_rate = 1.0;  // initial step of the backtracking line search
  int max_epochs = 500;
  double convergence_tolerance = 1e-6;  // on the max-norm of the gradient
  std::uint64_t seed = 7;
  int cv_folds = 10;

  void validate() const {
    if (!(l2_strength > 0) || !(learning_rate > 0) || max_epochs <= 0 ||
        !(convergence_tolerance > 0)) {
      fail(ErrorCode::kInvalidArgument, "train config values must be positive");
    }
    if (cv_folds < 2) fail(ErrorCode::kInvalidArgument, "cv_folds must be at least 2");
  }
};

// L2-regularized logistic regression over standardized, mean-imputed inputs.
// Inputs are raw matrix columns; NaN marks a missing value.
struct Model {
  std::string target_label;
  std::vector<std::string> feature_ids;
  std::vector<double> mean;  // standardization centre == imputation value
  std::vector<double> sd;    // 0 for dropped columns
  std::vector<double> weights;
  std::vector<std::string> dropped;  // zero-variance or all-missing columns
  double bias = 0.0;

  std::size_t size() const { return feature_ids.size(); }
  bool retained(std::size_t i) const { return sd[i] > 0.0; }

  // Standardized coordinate; missing values impute to the training mean, i.e. 0.
  double standardized(std::size_t i, double raw) const {
    if (std::isnan(raw) || !retained(i)) return 0.0;
    return (raw - mean[i]) / sd[i];
  }

  // Additive logit term of column i.
  double term(std::size_t i, double raw) const { return weights[i] * standardized(i, raw); }

  double logit(std::span<const double> x) const {
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += term(i, x[i]);
    return z;
  }

  static double link(double logit) { return sigmoid(logit); }
};

inline void check_aligned(const Model& model, std::span<const double> x) {
  if (x.size() != model.size()) {
    fail(ErrorCode::kInvalidArgument, "feature vector has " + std::to_string(x.size()) +
                                          " values, model expects " +
                                          std::to_string(model.size()));
  }
}

inline double predict(const Model& model, std::span<const double> x) {
  check_aligned(model, x);
  return sigmoid(model.logit(x));
}

// Mean logistic loss plus (l2/2)|w|^2 and its gradient, over a dense
// standardized design (row-major, n x m).
struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

inline LossAndGradient logistic_loss(std::span<const double> design, std::size_t m,
                                     std::span<const int> y, std::span<const double> w,
                                     double b, double l2) {
  const std::size_t n = y.size();
  LossAndGradient out;
  out.grad_w.assign(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = design.data() + r * m;
    double z = b;
    for (std::size_t j = 0; j < m; ++j) z += w[j] * row[j];
    out.loss += softplus(z) - y[r] * z;
    const double residual = sigmoid(z) - y[r];
    for (std::size_t j = 0; j < m; ++j) out.grad_w[j] += residual * row[j];
    out.grad_b += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.grad_b *= inv_n;
  for (std::size_t j = 0; j < m; ++j) {
    out.grad_w[j] = out.grad_w[j] * inv_n + l2 * w[j];
    out.loss += 0.5 * l2 * w[j] * w[j];
  }
  return out;
}

// Fits on the given rows of the matrix. Gradient descent with Armijo
// backtracking; stops when the gradient max-norm drops below tolerance.
inline Model train(const FeatureMatrix& matrix, std::span<const int> labels,
                   const TrainConfig& config, std::span<const std::size_t> rows,
                   const std::string& target_label = "") {
  config.validate();
  if (matrix.cols() == 0 || rows.empty()) fail(ErrorCode::kInvalidArgument, "empty matrix");
  if (labels.size() != matrix.rows()) {
    fail(ErrorCode::kInvalidArgument, "labels do not align with matrix rows");
  }
  std::size_t positives = 0;
  for (std::size_t r : rows) positives += labels[r] != 0;
  if (positives == 0 || positives == rows.size()) {
    fail(ErrorCode::kInvalidArgument, "degenerate labels: training rows hold a single class");
  }

  const std::size_t m = matrix.cols();
  Model model;
  model.target_label = target_label;
  model.feature_ids = matrix.column_ids();
  model.mean.assign(m, 0.0);
  model.sd.assign(m, 0.0);
  model.weights.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> seen;
    for (std::size_t r : rows) {
      if (!matrix.is_missing(r, c)) seen.push_back(matrix.at(r, c));
    }
    if (seen.empty()) {
      model.dropped.push_back(model.feature_ids[c]);
      continue;
    }
    model.mean[c] = stats::mean(seen);
    double ss = 0.0;
    for (double v : seen) ss += (v - model.mean[c]) * (v - model.mean[c]);
    const double sd = seen.size() > 1 ? std::sqrt(ss / static_cast<double>(seen.size() - 1)) : 0.0;
    if (sd > 1e-12 * std::max(1.0, std::abs(model.mean[c]))) {
      model.sd[c] = sd;
    } else {
      model.dropped.push_back(model.feature_ids[c]);
    }
  }

  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < m; ++c) {
    if (model.retained(c)) active.push_back(c);
  }
  const std::size_t k = active.size();
  std::vector<double> design(rows.size() * k);
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      design[i * k + j] = model.standardized(active[j], matrix.at(rows[i], active[j]));
    }
    y[i] = labels[rows[i]] != 0;
  }

  std::vector<double> w(k, 0.0);
  double b = 0.0;
  double step = config.learning_rate;
  auto current = logistic_loss(design, k, y, w, b, config.l2_strength);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    double gmax = std::abs(current.grad_b);
    double gnorm2 = current.grad_b * current.grad_b;
    for (double g : current.grad_w) {
      gmax = std::max(gmax, std::abs(g));
      gnorm2 += g * g;
    }
    if (gmax < config.convergence_tolerance) break;
    // Armijo backtracking; the accepted step seeds the next epoch (grown 2x).
    step = std::min(step * 2.0, 64.0 * config.learning_rate);
    for (int tries = 0; tries < 60; ++tries) {
      std::vector<double> w_next(k);
      for (std::size_t j = 0; j < k; ++j) w_next[j] = w[j] - step * current.grad_w[j];
      const double b_next = b - step * current.grad_b;
      auto next = logistic_loss(design, k, y, w_next, b_next, config.l2_strength);
      if (next.loss <= current.loss - 0.5 * step * gnorm2) {
        w = std::move(w_next);
        b = b_next;
        current = std::move(next);
        break;
      }
      step *= 0.5;
    }
  }
  for (std::size_t j = 0; j < k; ++j) model.weights[active[j]] = w[j];
  model.bias = b;
  return model;
}

inline Model train(const FeatureMatrix& matrix, std::span<const int> labels,
                   const TrainConfig& config, const std::string& target_label = "") {
  std::vector<std::size_t> rows(matrix.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return train(matrix, labels, config, rows, target_label);
}

// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2, via
// average ranks. Returns NaN without both classes.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nan("");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

struct CvResult {
  std::vector<double> fold_auc;
  double mean_auc = 0.0;
};

// Stratified fold assignment: each class is shuffled under the seed and dealt
// round-robin.
inline std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<int> fold(labels.size(), 0);
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % k);
  for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = static_cast<int>(i % k);
  return fold;
}

inline CvResult cross_validate(const FeatureMatrix& matrix, std::span<const int> labels,
                               const TrainConfig& config) {
  config.validate();
  if (labels.size() != matrix.rows()) {
    fail(ErrorCode::kInvalidArgument, "labels do not align with matrix rows");
  }
  const int k = config.cv_folds;
  const auto fold = stratified_folds(labels, k, config.seed);
  CvResult result;
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
      (fold[r] == f ? test_rows : train_rows).push_back(r);
    }
    std::vector<int> test_labels;
    for (std::size_t r : test_rows) test_labels.push_back(labels[r]);
    const bool has_pos = std::count(test_labels.begin(), test_labels.end(), 1) > 0;
    const bool has_neg = std::count(test_labels.begin(), test_labels.end(), 0) > 0;
    if (!has_pos || !has_neg) {
      fail(ErrorCode::kFailedPrecondition,
           "fold " + std::to_string(f) + " lacks both classes after stratification");
    }
    const Model model = train(matrix, labels, config, train_rows);
    std::vector<double> scores;
    for (std::size_t r : test_rows) scores.push_back(predict(model, matrix.row(r)));
    result.fold_auc.push_back(auc(scores, test_labels));
  }
  result.mean_auc = stats::mean(result.fold_auc);
  return result;
}

inline nlohmann::json model_to_json(const Model& m) {
  return {{"target", m.target_label}, {"feature_ids", m.feature_ids},
          {"mean", m.mean},           {"sd", m.sd},
          {"imputation", m.mean},     {"weights", m.weights},
          {"bias", m.bias},           {"dropped", m.dropped}};
}

inline Model model_from_json(const nlohmann::json& j) {
  Model m;
  try {
    m.target_label = j.at("target").get<std::string>();
    m.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.sd = j.at("sd").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.dropped = j.value("dropped", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed model: ") + e.what());
  }
  const std::size_t n = m.feature_ids.size();
  if (m.mean.size() != n || m.sd.size() != n || m.weights.size() != n) {
    fail(ErrorCode::kInvalidArgument, "malformed model: array lengths differ");
  }
  return m;
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << model_to_json(m).dump(2) << '\n';
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open model " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

// Positive/negative flag shown next to each target.
inline constexpr double kDecisionThreshold = 0.5;

}  // namespace ehrx
