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
#include <cstring>

#include "ehrx/features.hpp"
#include "support/tiny.hpp"

using namespace ehrx;

namespace {

std::size_t count_dynamic(const std::vector<FeatureDescriptor>& ds, const std::string& entity) {
  std::size_t n = 0;
  for (const auto& d : ds) n += d.is_dynamic() && d.source_entity == entity;
  return n;
}

double value_of(const FeatureSet& fs, const Dataset& ds, const std::string& fid,
                const std::string& sid) {
  const FeatureValue v = compute_feature(fs.get(fid), ds, resolve_instance(ds, sid));
  return std::get<double>(v);
}

}  // namespace

TEST(Aggregate, WorkedValues) {
  const std::vector<double> h = {0, 1, 2};
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kMean, h, std::vector<double>{1, 2, 3}), 2.0);
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kTrend, h, std::vector<double>{0, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kSd, h, std::vector<double>{5, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kMin, h, std::vector<double>{4, -1, 3}), -1.0);
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kMax, h, std::vector<double>{4, -1, 3}), 4.0);
  EXPECT_DOUBLE_EQ(*aggregate(Aggregation::kCount, h, std::vector<double>{4, -1, 3}), 3.0);
}

TEST(Aggregate, UndefinedCases) {
  const std::vector<double> none;
  EXPECT_FALSE(aggregate(Aggregation::kMean, none, none));
  EXPECT_EQ(*aggregate(Aggregation::kCount, none, none), 0.0);
  const std::vector<double> one = {1};
  EXPECT_FALSE(aggregate(Aggregation::kSd, one, one));
  EXPECT_FALSE(aggregate(Aggregation::kTrend, one, one));
  const std::vector<double> same_time = {2, 2};
  EXPECT_FALSE(aggregate(Aggregation::kTrend, same_time, std::vector<double>{1, 3}));
}

TEST(Descriptors, TwoVitalItemsGiveTwelveDynamicDescriptors) {
  const Dataset ds = tiny::two_patients().build();
  const auto d = synthesize_descriptors(ds);
  EXPECT_EQ(count_dynamic(d, "vitalsigns"), 12u);
  EXPECT_EQ(count_dynamic(d, "labtests"), 6u);
  EXPECT_EQ(count_dynamic(d, "chartevents"), 0u);
}

TEST(Descriptors, StaticAgePath) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  const auto& age = fs.get("patients:age_days");
  EXPECT_FALSE(age.is_dynamic());
  EXPECT_EQ(age.hierarchy_path, (std::vector<std::string>{"pre-surgery", "demographics", "age_days"}));
  const auto& pulse = fs.get("vitalsigns:Pulse:in-surgery:MEAN");
  EXPECT_EQ(pulse.hierarchy_path, (std::vector<std::string>{"in-surgery", "Pulse", "MEAN"}));
}

TEST(Descriptors, LabelColumnsAreNotFeatures) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  EXPECT_FALSE(fs.index_of("surgeries:complication_cardiac"));
  EXPECT_TRUE(fs.index_of("surgeries:duration_min"));
  EXPECT_EQ(fs.get("surgeries:procedure").categories,
            (std::vector<std::string>{"ASD repair", "VSD repair"}));
}

TEST(Descriptors, SchemaWithoutSurgeriesFails) {
  auto b = tiny::two_patients();
  Schema s = b.schema();
  std::erase_if(s.tables, [](const TableSchema& t) { return t.entity == "surgeries"; });
  EXPECT_THROW(
      {
        const Dataset ds = Dataset::build(s, b.tables());
        synthesize_descriptors(ds);
      },
      Error);
}

TEST(ComputeFeature, WindowsSeparatePreAndInSurgery) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  // Pre-surgery closes one second before start: the 10:30 lab is excluded.
  EXPECT_DOUBLE_EQ(value_of(fs, ds, "labtests:Lactate:pre-surgery:MEAN", "S1"), 2.0);
  EXPECT_DOUBLE_EQ(value_of(fs, ds, "labtests:Lactate:pre-surgery:COUNT", "S1"), 2.0);
  // In-surgery is closed at both ends; the 12:00:01 reading is excluded.
  EXPECT_DOUBLE_EQ(value_of(fs, ds, "vitalsigns:Pulse:in-surgery:MEAN", "S1"), 130.0);
  EXPECT_DOUBLE_EQ(value_of(fs, ds, "vitalsigns:Pulse:in-surgery:TREND", "S1"), 10.0);
  EXPECT_DOUBLE_EQ(value_of(fs, ds, "patients:age_days", "S2"), 400.0);
  EXPECT_EQ(std::get<std::string>(
                compute_feature(fs.get("patients:gender"), ds, resolve_instance(ds, "S2"))),
            "M");
}

TEST(FeatureMatrix, ShapeMissingAndOneHot) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  const FeatureMatrix m = build_matrix(ds, fs);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), expand_columns(fs).size());
  const std::size_t spo2 = *m.column_index("vitalsigns:SpO2:in-surgery:MEAN");
  EXPECT_TRUE(m.is_missing(0, spo2));
  EXPECT_TRUE(std::isnan(m.at(0, spo2)));
  EXPECT_FALSE(m.is_missing(1, spo2));
  // COUNT of an absent item is 0, not missing.
  const std::size_t spo2_count = *m.column_index("vitalsigns:SpO2:in-surgery:COUNT");
  EXPECT_FALSE(m.is_missing(0, spo2_count));
  EXPECT_EQ(m.at(0, spo2_count), 0.0);
  EXPECT_EQ(m.at(0, *m.column_index("patients:gender=F")), 1.0);
  EXPECT_EQ(m.at(0, *m.column_index("patients:gender=M")), 0.0);
}

TEST(FeatureMatrix, RebuildIsBitIdentical) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  const FeatureMatrix a = build_matrix(ds, fs);
  const FeatureMatrix b = build_matrix(ds, fs);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)), 0);
  EXPECT_EQ(a.missing, b.missing);
}

TEST(Lineage, DynamicFeatureResolvesItsRecords) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  const auto refs =
      resolve_lineage(fs.get("vitalsigns:Pulse:in-surgery:MEAN"), ds, resolve_instance(ds, "S1"));
  ASSERT_EQ(refs.size(), 3u);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    EXPECT_EQ(refs[i].entity, "vitalsigns");
    EXPECT_EQ(refs[i].row, i);
    EXPECT_EQ(refs[i].column, "value");
  }
}

TEST(Lineage, StaticFeatureIsOneCell) {
  const Dataset ds = tiny::two_patients().build();
  const FeatureSet fs(synthesize_descriptors(ds));
  const auto refs = resolve_lineage(fs.get("patients:age_days"), ds, resolve_instance(ds, "S2"));
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].entity, "patients");
  EXPECT_EQ(refs[0].row, 1u);
  EXPECT_EQ(refs[0].column, "age_days");
}

TEST(Lineage, NonLineageEditsLeaveFeatureUnchanged) {
  auto b = tiny::two_patients();
  const Dataset base = b.build();
  const FeatureSet fs(synthesize_descriptors(base));
  const auto& d = fs.get("vitalsigns:Pulse:in-surgery:MEAN");
  const double before = value_of(fs, base, d.id, "S1");
  // Row 3 is the after-surgery reading, row 4 is P2's.
  for (std::size_t row : {3u, 4u, 5u}) {
    auto copy = b;
    copy.tables().at("vitalsigns").rows[row][6] = "12345";
    EXPECT_EQ(value_of(fs, copy.build(), d.id, "S1"), before) << row;
  }
  auto copy = b;
  copy.tables().at("vitalsigns").rows[1][6] = "131";
  EXPECT_NE(value_of(fs, copy.build(), d.id, "S1"), before);
}
