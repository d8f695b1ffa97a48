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

#include <optional>
#include <span>
#include <string>

#include "ehrx/stats.hpp"
#include "json.hpp"

namespace ehrx {

// Cohort-derived normal interval: mean +/- 1.96 SD of the low-risk group.
// Undefined (no band) when fewer than two values back it.
struct ReferenceRange {
  bool defined = false;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double low = 0.0;
  double high = 0.0;
};

inline constexpr double kReferenceZ = 1.96;

inline ReferenceRange reference_from_values(std::span<const double> values) {
  ReferenceRange r;
  r.n = values.size();
  const auto sd = stats::sample_sd(values);
  if (!sd) return r;
  r.defined = true;
  r.mean = stats::mean(values);
  r.sd = *sd;
  r.low = r.mean - kReferenceZ * r.sd;
  r.high = r.mean + kReferenceZ * r.sd;
  return r;
}

enum class Flag { kBelow, kWithin, kAbove };

inline std::string flag_name(Flag f) {
  switch (f) {
    case Flag::kBelow: return "below";
    case Flag::kWithin: return "within";
    case Flag::kAbove: return "above";
  }
  return "within";
}

// Closed interval: a value on a bound is within. Without a defined range the
// value is within by default and has_reference is false.
struct FlagResult {
  Flag flag = Flag::kWithin;
  bool has_reference = false;
};

inline FlagResult flag(double value, const ReferenceRange& range) {
  if (!range.defined) return {Flag::kWithin, false};
  if (value > range.high) return {Flag::kAbove, true};
  if (value < range.low) return {Flag::kBelow, true};
  return {Flag::kWithin, true};
}

inline nlohmann::json reference_to_json(const ReferenceRange& r) {
  if (!r.defined) return {{"defined", false}, {"n", r.n}};
  return {{"defined", true}, {"n", r.n},   {"mean", r.mean},
          {"sd", r.sd},      {"low", r.low}, {"high", r.high}};
}

}  // namespace ehrx
