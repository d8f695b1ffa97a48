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
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "ehrx/reference.hpp"
#include "ehrx/stats.hpp"
#include "json.hpp"

namespace ehrx {

// What an occluded window is replaced with. Both reproduce affine data.
enum class OcclusionFill {
  // Line through the records flanking the window. Edge windows fit the window
  // plus the one available flank; a window spanning the whole series fits
  // its own points.
  kFlankingLine,
  // Least-squares line over the window's own points. Leaves the window sum
  // and first time moment intact, so MEAN and TREND never move under it.
  kWindowLeastSquares,
};

inline constexpr double kRelativeEpsilon = 1e-9;
// Influence magnitudes below this are rounding residue, not signal.
inline constexpr double kInfluenceNoiseFloor = 1e-9;

struct InfluenceArray {
  std::string feature_id;
  std::size_t window = 0;
  double feature_value = 0.0;
  std::vector<double> v;
};

// Replacement values for window [start, start + k).
inline std::vector<double> occlusion_fill(std::span<const double> hours,
                                          std::span<const double> values, std::size_t start,
                                          std::size_t k, OcclusionFill fill) {
  const std::size_t t = values.size();
  const std::size_t end = start + k;  // exclusive
  std::vector<double> fx, fy;
  const bool left = start > 0;
  const bool right = end < t;
  if (fill == OcclusionFill::kFlankingLine && left && right) {
    fx = {hours[start - 1], hours[end]};
    fy = {values[start - 1], values[end]};
  } else {
    fx.assign(hours.begin() + start, hours.begin() + end);
    fy.assign(values.begin() + start, values.begin() + end);
    if (fill == OcclusionFill::kFlankingLine) {
      if (left) {
        fx.insert(fx.begin(), hours[start - 1]);
        fy.insert(fy.begin(), values[start - 1]);
      } else if (right) {
        fx.push_back(hours[end]);
        fy.push_back(values[end]);
      }
    }
  }
  const stats::Line line = stats::fit_line(fx, fy);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = line.at(hours[start + i]);
  return out;
}

// Slides a length-k window (stride 1) over the series, replaces it with the
// fill, recomputes the feature and adds (x - x') / |x| to every index the
// window covers. Falls back to x - x' when |x| < 1e-9. Interior indices
// receive up to k increments; edges fewer (no coverage normalization).
inline std::vector<double> occlusion_influence(std::span<const double> hours,
                                               std::span<const double> values,
                                               Aggregation aggregation, std::size_t k,
                                               OcclusionFill fill = OcclusionFill::kFlankingLine) {
  const std::size_t t = values.size();
  if (t < 2) fail(ErrorCode::kInvalidArgument, "occlusion needs at least 2 points");
  if (k < 1 || k > t) {
    fail(ErrorCode::kInvalidArgument,
         "window size " + std::to_string(k) + " outside [1, " + std::to_string(t) + "]");
  }
  const auto x = aggregate(aggregation, hours, values);
  if (!x) fail(ErrorCode::kFailedPrecondition, "feature undefined on this series");
  const bool relative = std::abs(*x) >= kRelativeEpsilon;
  std::vector<double> v(t, 0.0);
  std::vector<double> work(values.begin(), values.end());
  for (std::size_t start = 0; start + k <= t; ++start) {
    const auto replacement = occlusion_fill(hours, values, start, k, fill);
    std::copy(replacement.begin(), replacement.end(), work.begin() + start);
    const auto x_occluded = aggregate(aggregation, hours, work);
    std::copy(values.begin() + start, values.begin() + start + k, work.begin() + start);
    const double delta = *x - x_occluded.value_or(*x);
    const double increment = relative ? delta / std::abs(*x) : delta;
    for (std::size_t i = start; i < start + k; ++i) v[i] += increment;
  }
  return v;
}

inline InfluenceArray occlusion_influence(const RecordSeries& series,
                                          const FeatureDescriptor& feature, std::size_t k,
                                          OcclusionFill fill = OcclusionFill::kFlankingLine) {
  if (!feature.is_dynamic()) {
    fail(ErrorCode::kInvalidArgument, feature.id + " is not a dynamic feature");
  }
  const auto hours = series_hours(series);
  const auto values = series_values(series);
  InfluenceArray out;
  out.feature_id = feature.id;
  out.window = k;
  out.v = occlusion_influence(hours, values, *feature.aggregation, k, fill);
  out.feature_value = *aggregate(*feature.aggregation, hours, values);
  return out;
}

// ~5 minutes of the series' median sampling interval, at least 3 points,
// at most the series length.
inline std::size_t default_window_size(const RecordSeries& series,
                                       double span_seconds = 300.0) {
  const std::size_t t = series.size();
  if (t < 2) return t;
  std::vector<double> gaps;
  for (std::size_t i = 1; i < t; ++i) {
    gaps.push_back(static_cast<double>(series.points[i].timestamp.seconds -
                                       series.points[i - 1].timestamp.seconds));
  }
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double median = gaps[gaps.size() / 2];
  std::size_t k = 3;
  if (median > 0) k = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(span_seconds / median)));
  return std::min(k, t);
}

inline std::vector<double> default_z_grid() {
  std::vector<double> z;
  for (int i = 0; i <= 16; ++i) z.push_back(2.0 + 0.5 * i);
  return z;
}

struct Threshold {
  double theta = 0.0;
  double z = 0.0;
  double score = 0.0;
};

// Inclusive [start, end] index runs where above[i] holds.
inline std::vector<std::pair<std::size_t, std::size_t>> runs_above(std::span<const double> v,
                                                                    double theta) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < v.size();) {
    if (!(v[i] > theta)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] > theta) ++j;
    runs.emplace_back(i, j);
    i = j + 1;
  }
  return runs;
}

// Non-parametric threshold: over theta = mu + z sigma for z in the grid, pick
// the one maximizing (dmu/mu + dsigma/sigma) / (|v_a| + |runs|^2) where v_a
// are the values above theta and the deltas compare v against v without v_a.
// sigma is the population SD. Ties go to the larger z. nullopt when sigma is
// 0 or no candidate leaves anything above theta.
inline std::optional<Threshold> dynamic_threshold(std::span<const double> v,
                                                  std::span<const double> z_grid) {
  if (v.empty()) fail(ErrorCode::kInvalidArgument, "empty influence array");
  const double mu = stats::mean(v);
  const double sigma = stats::population_sd(v);
  if (sigma == 0.0) return std::nullopt;
  std::optional<Threshold> best;
  std::vector<double> rest;
  for (double z : z_grid) {
    const double theta = mu + z * sigma;
    rest.clear();
    std::size_t above = 0;
    for (double x : v) {
      if (x > theta) ++above;
      else rest.push_back(x);
    }
    if (above == 0 || rest.empty()) continue;
    const double runs = static_cast<double>(runs_above(v, theta).size());
    const double d_mu = mu - stats::mean(rest);
    const double d_sigma = sigma - stats::population_sd(rest);
    const double mu_term = std::abs(mu) < 1e-12 ? 0.0 : d_mu / mu;
    const double score = (mu_term + d_sigma / sigma) / (static_cast<double>(above) + runs * runs);
    if (!best || score > best->score || (score == best->score && z > best->z)) {
      best = Threshold{theta, z, score};
    }
  }
  return best;
}

struct Segment {
  std::size_t start = 0;  // inclusive indices into the series
  std::size_t end = 0;
  Timestamp start_ts;
  Timestamp end_ts;
  double mean_influence = 0.0;  // mean of the signed influence over the segment
};

struct SegmentSet {
  std::string patient_id;
  std::string item_id;
  std::string feature_id;
  Flag direction = Flag::kWithin;
  bool has_threshold = false;
  double theta = 0.0;
  double z = 0.0;
  std::size_t window = 0;
  std::vector<Segment> segments;
};

// Occlusion influence thresholded in the direction that pushed the feature
// away from the reference: v as-is above the range, -v below it, |v| within.
inline SegmentSet influential_segments(const RecordSeries& series,
                                       const FeatureDescriptor& feature, double feature_value,
                                       const ReferenceRange& reference, std::size_t k,
                                       std::span<const double> z_grid,
                                       OcclusionFill fill = OcclusionFill::kFlankingLine) {
  const InfluenceArray influence = occlusion_influence(series, feature, k, fill);
  SegmentSet out;
  out.patient_id = series.patient_id;
  out.item_id = series.item_id;
  out.feature_id = feature.id;
  out.window = k;
  out.direction = flag(feature_value, reference).flag;
  std::vector<double> working = influence.v;
  for (double& x : working) {
    switch (out.direction) {
      case Flag::kAbove: break;
      case Flag::kBelow: x = -x; break;
      case Flag::kWithin: x = std::abs(x); break;
    }
    if (std::abs(x) < kInfluenceNoiseFloor) x = 0.0;
  }
  const auto threshold = dynamic_threshold(working, z_grid);
  if (!threshold) return out;
  out.has_threshold = true;
  out.theta = threshold->theta;
  out.z = threshold->z;
  for (const auto& [a, b] : runs_above(working, threshold->theta)) {
    double sum = 0.0;
    for (std::size_t i = a; i <= b; ++i) sum += influence.v[i];
    out.segments.push_back({a, b, series.points[a].timestamp, series.points[b].timestamp,
                            sum / static_cast<double>(b - a + 1)});
  }
  return out;
}

struct OverlayInterval {
  std::size_t start = 0;
  std::size_t end = 0;
  Timestamp start_ts;
  Timestamp end_ts;
  int multiplicity = 0;
};

struct MergedOverlay {
  std::string patient_id;
  std::string item_id;
  std::vector<OverlayInterval> intervals;
};

// Partitions the union of all segments at every segment boundary and counts
// how many sibling features cover each piece.
inline MergedOverlay merge_overlays(const RecordSeries& series,
                                    std::span<const SegmentSet> sets) {
  MergedOverlay out{series.patient_id, series.item_id, {}};
  std::vector<std::pair<std::size_t, int>> edges;  // (index, +1 start / -1 past end)
  for (const auto& set : sets) {
    if (set.patient_id != series.patient_id || set.item_id != series.item_id) {
      fail(ErrorCode::kInvalidArgument, "segment set " + set.feature_id +
                                            " belongs to a different series");
    }
    for (const auto& seg : set.segments) {
      if (seg.end >= series.size() || seg.start > seg.end) {
        fail(ErrorCode::kInvalidArgument, "segment outside series");
      }
      edges.emplace_back(seg.start, +1);
      edges.emplace_back(seg.end + 1, -1);
    }
  }
  std::sort(edges.begin(), edges.end());
  int depth = 0;
  for (std::size_t e = 0; e < edges.size();) {
    const std::size_t at = edges[e].first;
    while (e < edges.size() && edges[e].first == at) depth += edges[e++].second;
    if (depth > 0 && e < edges.size()) {
      const std::size_t next = edges[e].first;
      out.intervals.push_back({at, next - 1, series.points[at].timestamp,
                               series.points[next - 1].timestamp, depth});
    }
  }
  return out;
}

inline nlohmann::json segments_to_json(const SegmentSet& s) {
  nlohmann::json j = {{"patient_id", s.patient_id},
                      {"item_id", s.item_id},
                      {"feature_id", s.feature_id},
                      {"direction", flag_name(s.direction)},
                      {"window", s.window},
                      {"theta", s.has_threshold ? nlohmann::json(s.theta) : nlohmann::json()},
                      {"z", s.has_threshold ? nlohmann::json(s.z) : nlohmann::json()},
                      {"segments", nlohmann::json::array()}};
  for (const auto& seg : s.segments) {
    j["segments"].push_back({{"start_index", seg.start},
                             {"end_index", seg.end},
                             {"start_ts", format_timestamp(seg.start_ts)},
                             {"end_ts", format_timestamp(seg.end_ts)},
                             {"mean_influence", seg.mean_influence}});
  }
  return j;
}

inline nlohmann::json overlay_to_json(const MergedOverlay& m) {
  nlohmann::json j = {{"patient_id", m.patient_id},
                      {"item_id", m.item_id},
                      {"intervals", nlohmann::json::array()}};
  for (const auto& iv : m.intervals) {
    j["intervals"].push_back({{"start_index", iv.start},
                              {"end_index", iv.end},
                              {"start_ts", format_timestamp(iv.start_ts)},
                              {"end_ts", format_timestamp(iv.end_ts)},
                              {"multiplicity", iv.multiplicity}});
  }
  return j;
}

}  // namespace ehrx
