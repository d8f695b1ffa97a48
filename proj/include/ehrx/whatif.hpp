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
#include <span>
#include <string>
#include <vector>

#include "ehrx/error.hpp"
#include "ehrx/predictor.hpp"
#include "ehrx/reference.hpp"
#include "ehrx/shapley.hpp"
#include "json.hpp"

namespace ehrx {

struct WhatIfResult {
  std::string feature_id;
  double original_value = 0.0;
  double clamped_value = 0.0;
  double original_prediction = 0.0;
  double new_prediction = 0.0;
  double original_phi = 0.0;
  double new_phi = 0.0;
  ContributionSet original;
  ContributionSet updated;
};

// Moves one abnormal coordinate to the nearest reference bound and explains
// the modified vector with the same explainer. Every other coordinate is left
// as-is, including features derived from the same records.
inline WhatIfResult whatif(const Model& model, const Explainer& explainer,
                           std::span<const double> x, std::size_t column,
                           const ReferenceRange& range) {
  check_aligned(model, x);
  if (column >= x.size()) fail(ErrorCode::kInvalidArgument, "feature column out of range");
  if (!range.defined) {
    fail(ErrorCode::kFailedPrecondition, "undefined reference range for " + model.feature_ids[column]);
  }
  const double value = x[column];
  if (std::isnan(value)) {
    fail(ErrorCode::kFailedPrecondition, "feature not abnormal: value missing");
  }
  const Flag f = flag(value, range).flag;
  if (f == Flag::kWithin) fail(ErrorCode::kFailedPrecondition, "feature not abnormal");

  WhatIfResult out;
  out.feature_id = model.feature_ids[column];
  out.original_value = value;
  out.clamped_value = f == Flag::kAbove ? range.high : range.low;
  std::vector<double> modified(x.begin(), x.end());
  modified[column] = out.clamped_value;
  out.original_prediction = predict(model, x);
  out.new_prediction = predict(model, modified);
  out.original = explainer.explain(model, x);
  out.updated = explainer.explain(model, modified);
  out.original_phi = out.original.phi[column];
  out.new_phi = out.updated.phi[column];
  return out;
}

inline nlohmann::json whatif_to_json(const WhatIfResult& r) {
  return {{"feature_id", r.feature_id},
          {"original_value", r.original_value},
          {"clamped_value", r.clamped_value},
          {"original_prediction", r.original_prediction},
          {"new_prediction", r.new_prediction},
          {"original_phi", r.original_phi},
          {"new_phi", r.new_phi},
          {"prediction_delta", r.new_prediction - r.original_prediction},
          {"phi_delta", r.new_phi - r.original_phi},
          {"original_contributions", contributions_to_json(r.original)},
          {"new_contributions", contributions_to_json(r.updated)}};
}

}  // namespace ehrx
