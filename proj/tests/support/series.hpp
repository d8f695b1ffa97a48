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

#include <string>
#include <vector>

#include "ehrx/ehr_store.hpp"
#include "ehrx/features.hpp"

namespace testing_support {

inline ehrx::RecordSeries make_series(const std::vector<double>& values, std::int64_t step = 60,
                                      const std::string& item = "X") {
  ehrx::RecordSeries s;
  s.patient_id = "P";
  s.item_id = item;
  const std::int64_t t0 = 1'600'000'000;
  s.window = {{t0}, {t0 + step * static_cast<std::int64_t>(values.size())}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.points.push_back({{t0 + step * static_cast<std::int64_t>(i)}, values[i], i});
  }
  return s;
}

inline ehrx::RecordSeries make_series(const std::vector<double>& hours,
                                      const std::vector<double>& values,
                                      const std::string& item = "X") {
  ehrx::RecordSeries s;
  s.patient_id = "P";
  s.item_id = item;
  const std::int64_t t0 = 1'600'000'000;
  s.window = {{t0}, {t0 + 3600 * 1000}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.points.push_back({{t0 + static_cast<std::int64_t>(hours[i] * 3600.0)}, values[i], i});
  }
  return s;
}

inline ehrx::FeatureDescriptor dynamic_feature(ehrx::Aggregation agg, const std::string& item = "X") {
  ehrx::FeatureDescriptor d;
  d.id = "vitalsigns:" + item + ":in-surgery:" + ehrx::aggregation_name(agg);
  d.kind = ehrx::FeatureKind::kDynamic;
  d.source_entity = "vitalsigns";
  d.item_id = item;
  d.aggregation = agg;
  d.window = ehrx::WindowKind::kInSurgery;
  d.hierarchy_path = {"in-surgery", item, ehrx::aggregation_name(agg)};
  return d;
}

}  // namespace testing_support
