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

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

namespace ehrx::stats {

inline double mean(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Sample standard deviation (n - 1). Two-pass for accuracy.
inline std::optional<double> sample_sd(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Population standard deviation (n).
inline double population_sd(std::span<const double> values) {
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

struct Line {
  double intercept = 0.0;
  double slope = 0.0;

  double at(double x) const { return intercept + slope * x; }
};

// Ordinary least squares y = a + b x. A degenerate abscissa (all x equal)
// yields the horizontal line through the mean.
inline Line fit_line(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return {my, 0.0};
  const double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

// Least-squares slope, or nullopt when the abscissa has no spread.
inline std::optional<double> slope(std::span<const double> x,
                                   std::span<const double> y) {
  if (x.size() < 2) return std::nullopt;
  const double mx = mean(x);
  double sxx = 0.0;
  for (double v : x) sxx += (v - mx) * (v - mx);
  if (sxx == 0.0) return std::nullopt;
  return fit_line(x, y).slope;
}

}  // namespace ehrx::stats
