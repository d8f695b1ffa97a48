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

// Slow, independent reimplementations used as test oracles. Nothing here
// calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

using Real = long double;

inline Real mean(const std::vector<double>& v) {
  Real s = 0;
  for (double x : v) s += x;
  return s / static_cast<Real>(v.size());
}

inline Real sample_sd(const std::vector<double>& v) {
  const Real m = mean(v);
  Real ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<Real>(v.size() - 1));
}

inline Real population_sd(const std::vector<double>& v) {
  const Real m = mean(v);
  Real ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<Real>(v.size()));
}

struct Range {
  bool defined = false;
  Real low = 0, high = 0, mean = 0, sd = 0;
};

inline Range reference(const std::vector<double>& v) {
  if (v.size() < 2) return {};
  const Real m = mean(v), s = sample_sd(v);
  return {true, m - 1.96L * s, m + 1.96L * s, m, s};
}

// Closed-form least squares via normal equations.
inline std::pair<Real, Real> line(const std::vector<double>& x, const std::vector<double>& y) {
  const Real n = static_cast<Real>(x.size());
  Real sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<Real>(x[i]) * x[i];
    sxy += static_cast<Real>(x[i]) * y[i];
  }
  const Real det = n * sxx - sx * sx;
  if (std::abs(det) <= 1e-18L * std::max<Real>(1, n * sxx)) return {sy / n, 0};
  const Real b = (n * sxy - sx * sy) / det;
  return {(sy - b * sx) / n, b};
}

// agg: MEAN SD MIN MAX COUNT TREND
inline std::optional<Real> aggregate(const std::string& agg, const std::vector<double>& h,
                                     const std::vector<double>& v) {
  if (agg == "COUNT") return static_cast<Real>(v.size());
  if (v.empty()) return std::nullopt;
  if (agg == "MEAN") return mean(v);
  if (agg == "MIN") return *std::min_element(v.begin(), v.end());
  if (agg == "MAX") return *std::max_element(v.begin(), v.end());
  if (v.size() < 2) return std::nullopt;
  if (agg == "SD") return sample_sd(v);
  if (agg == "TREND") return line(h, v).second;
  return std::nullopt;
}

// Flanking-line occlusion: the line through the two neighbours of the
// window; at an edge, the window plus its single neighbour; whole series,
// the window itself.
inline std::vector<double> fill(const std::vector<double>& h, const std::vector<double>& v,
                                std::size_t start, std::size_t k) {
  std::vector<double> fx, fy;
  const std::size_t end = start + k;
  if (start > 0 && end < v.size()) {
    fx = {h[start - 1], h[end]};
    fy = {v[start - 1], v[end]};
  } else {
    std::size_t a = start > 0 ? start - 1 : start;
    std::size_t b = end < v.size() ? end + 1 : end;
    fx.assign(h.begin() + a, h.begin() + b);
    fy.assign(v.begin() + a, v.begin() + b);
  }
  const auto [c0, c1] = line(fx, fy);
  std::vector<double> out;
  for (std::size_t i = start; i < end; ++i) out.push_back(static_cast<double>(c0 + c1 * h[i]));
  return out;
}

inline std::vector<Real> occlusion(const std::vector<double>& h, const std::vector<double>& v,
                                   const std::string& agg, std::size_t k) {
  const Real x = *aggregate(agg, h, v);
  std::vector<Real> out(v.size(), 0);
  for (std::size_t s = 0; s + k <= v.size(); ++s) {
    std::vector<double> copy = v;
    const auto f = fill(h, v, s, k);
    for (std::size_t i = 0; i < k; ++i) copy[s + i] = f[i];
    const Real xp = aggregate(agg, h, copy).value_or(x);
    const Real inc = std::abs(x) >= 1e-9L ? (x - xp) / std::abs(x) : (x - xp);
    for (std::size_t i = s; i < s + k; ++i) out[i] += inc;
  }
  return out;
}

struct Threshold {
  double theta = 0, z = 0;
};

// Scores every grid point, then takes the maximum score; among equal maxima
// the largest z.
inline std::optional<Threshold> threshold(const std::vector<double>& v,
                                          const std::vector<double>& grid) {
  const double mu = static_cast<double>(mean(v));
  const double sigma = static_cast<double>(population_sd(v));
  if (sigma == 0) return std::nullopt;
  std::vector<std::optional<double>> scores;
  for (double z : grid) {
    const double theta = mu + z * sigma;
    std::vector<double> rest;
    std::vector<bool> above;
    for (double x : v) {
      above.push_back(x > theta);
      if (!(x > theta)) rest.push_back(x);
    }
    const std::size_t na = std::count(above.begin(), above.end(), true);
    if (na == 0 || rest.empty()) {
      scores.push_back(std::nullopt);
      continue;
    }
    std::size_t runs = 0;
    for (std::size_t i = 0; i < above.size(); ++i) {
      if (above[i] && (i == 0 || !above[i - 1])) ++runs;
    }
    const double dmu = (mu - static_cast<double>(mean(rest))) / mu;
    const double dsd = (sigma - static_cast<double>(population_sd(rest))) / sigma;
    const double mu_term = std::abs(mu) < 1e-12 ? 0.0 : dmu;
    scores.push_back((mu_term + dsd) / static_cast<double>(na + runs * runs));
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!scores[i]) continue;
    if (!best || *scores[i] > *scores[*best]) best = i;
  }
  if (!best) return std::nullopt;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (scores[i] && *scores[i] == *scores[*best] && grid[i] > grid[*best]) best = i;
  }
  return Threshold{mu + grid[*best] * sigma, grid[*best]};
}

// Shapley values by averaging marginal contributions over all m! orderings.
// v(S) = mean over background rows b of f(x on S, b elsewhere).
inline std::vector<Real> shapley_permutations(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
    const std::vector<std::vector<double>>& background) {
  const std::size_t m = x.size();
  auto value = [&](const std::vector<bool>& in) {
    Real s = 0;
    for (const auto& b : background) {
      std::vector<double> z = b;
      for (std::size_t i = 0; i < m; ++i) {
        if (in[i]) z[i] = x[i];
      }
      s += f(z);
    }
    return s / static_cast<Real>(background.size());
  };
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Real> phi(m, 0);
  std::size_t count = 0;
  do {
    std::vector<bool> in(m, false);
    Real prev = value(in);
    for (std::size_t i : order) {
      in[i] = true;
      const Real cur = value(in);
      phi[i] += cur - prev;
      prev = cur;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= static_cast<Real>(count);
  return phi;
}

// Mann-Whitney over all positive/negative pairs, ties count one half.
inline double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  Real wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0L : s[i] == s[j] ? 0.5L : 0.0L;
    }
  }
  return static_cast<double>(wins / static_cast<Real>(pairs));
}

inline double jaccard(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& a,
                      const std::vector<std::pair<std::size_t, std::size_t>>& b) {
  std::vector<int> ma(n, 0), mb(n, 0);
  for (auto [s, e] : a) std::fill(ma.begin() + s, ma.begin() + e + 1, 1);
  for (auto [s, e] : b) std::fill(mb.begin() + s, mb.begin() + e + 1, 1);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += ma[i] && mb[i];
    uni += ma[i] || mb[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace oracle
