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

#include <random>
#include <string>
#include <vector>

#include "ehrx/predictor.hpp"

namespace testing_support {

inline ehrx::Model random_model(std::size_t m, std::mt19937_64& rng, double weight_scale = 1.0) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.5, 2.0);
  ehrx::Model model;
  for (std::size_t i = 0; i < m; ++i) {
    model.feature_ids.push_back("f" + std::to_string(i));
    model.mean.push_back(g(rng));
    model.sd.push_back(u(rng));
    model.weights.push_back(weight_scale * g(rng));
  }
  model.bias = 0.3 * g(rng);
  return model;
}

inline std::vector<double> random_row(std::size_t m, std::mt19937_64& rng, double spread = 1.5) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<double> x(m);
  for (auto& v : x) v = g(rng);
  return x;
}

inline std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t m,
                                                   std::mt19937_64& rng) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(random_row(m, rng));
  return rows;
}

}  // namespace testing_support
