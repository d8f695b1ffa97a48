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

#include "ehrx/shapley.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace ehrx;
using testing_support::random_model;
using testing_support::random_row;
using testing_support::random_rows;

namespace {

HierarchyNode leaf(const std::string& label, double phi) {
  HierarchyNode n;
  n.label = label;
  n.feature_id = label;
  n.group_contribution = phi;
  return n;
}

FeatureDescriptor descriptor(const std::string& id, std::vector<std::string> path) {
  FeatureDescriptor d;
  d.id = id;
  d.hierarchy_path = std::move(path);
  return d;
}

std::vector<std::string> labels(const std::vector<HierarchyNode>& nodes) {
  std::vector<std::string> out;
  for (const auto& n : nodes) out.push_back(n.label);
  return out;
}

}  // namespace

TEST(ShapExact, MatchesPermutationOracle) {
  std::mt19937_64 rng(1);
  for (std::size_t m = 1; m <= 6; ++m) {
    const Model model = random_model(m, rng);
    const auto x = random_row(m, rng);
    const auto bg = random_rows(5, m, rng);
    const auto cs = shap_exact(model, x, bg);
    const auto ref = oracle::shapley_permutations(
        [&](const std::vector<double>& z) { return predict(model, z); }, x, bg);
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_NEAR(cs.phi[i], static_cast<double>(ref[i]), 1e-10) << "m=" << m << " i=" << i;
    }
  }
}

TEST(ShapExact, LogitModeMatchesLinearClosedForm) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 10;
    const Model model = random_model(m, rng);
    const auto x = random_row(m, rng);
    const auto bg = random_rows(1 + rng() % 8, m, rng);
    ShapOptions opt;
    opt.output = ShapOutput::kLogit;
    const auto cs = shap_exact(model, x, bg, opt);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_b = 0.0;
      for (const auto& b : bg) mean_b += b[i];
      mean_b /= static_cast<double>(bg.size());
      const double closed = model.weights[i] * (x[i] - mean_b) / model.sd[i];
      EXPECT_NEAR(cs.phi[i], closed, 1e-8);
    }
  }
}

TEST(ShapExact, EfficiencyAndBlackBoxAgreement) {
  std::mt19937_64 rng(3);
  const Model model = random_model(9, rng);
  const auto x = random_row(9, rng);
  const auto bg = random_rows(16, 9, rng);
  const auto cs = shap_exact(model, x, bg);
  EXPECT_NEAR(cs.base_value + cs.sum(), predict(model, x), 1e-12);
  const auto bb = shap_exact([&](std::span<const double> z) { return predict(model, z); }, x, bg);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(cs.phi[i], bb.phi[i], 1e-12);
  EXPECT_NEAR(cs.base_value, bb.base_value, 1e-12);
}

TEST(ShapExact, InstanceEqualToOnlyBackgroundRowGivesZeros) {
  std::mt19937_64 rng(4);
  const Model model = random_model(5, rng);
  const auto x = random_row(5, rng);
  const std::vector<std::vector<double>> bg = {x};
  for (double p : shap_exact(model, x, bg).phi) EXPECT_EQ(p, 0.0);
}

TEST(ShapExact, SymmetricFeaturesGetEqualShares) {
  std::mt19937_64 rng(5);
  Model model = random_model(4, rng);
  model.mean[1] = model.mean[0];
  model.sd[1] = model.sd[0];
  model.weights[1] = model.weights[0];
  auto x = random_row(4, rng);
  x[1] = x[0];
  auto bg = random_rows(6, 4, rng);
  for (auto& b : bg) b[1] = b[0];
  const auto cs = shap_exact(model, x, bg);
  EXPECT_NEAR(cs.phi[0], cs.phi[1], 1e-15);
}

TEST(ShapExact, MissingValueIsImputedNotZero) {
  std::mt19937_64 rng(6);
  const Model model = random_model(3, rng);
  auto x = random_row(3, rng);
  x[2] = std::numeric_limits<double>::quiet_NaN();
  const auto bg = random_rows(4, 3, rng);
  const auto cs = shap_exact(model, x, bg);
  EXPECT_TRUE(std::isfinite(cs.phi[2]));
  EXPECT_NEAR(cs.base_value + cs.sum(), predict(model, x), 1e-12);
}

TEST(ShapExact, RefusesBeyondExactLimit) {
  std::mt19937_64 rng(7);
  const Model model = random_model(15, rng);
  EXPECT_THROW(shap_exact(model, random_row(15, rng), random_rows(2, 15, rng)), Error);
}

TEST(ShapSampled, CloseToExactAtTenThousandSamples) {
  std::mt19937_64 rng(8);
  const Model model = random_model(8, rng);
  const auto x = random_row(8, rng);
  const auto bg = random_rows(10, 8, rng);
  const auto exact = shap_exact(model, x, bg);
  const auto sampled = shap_sampled(model, x, bg, 10000, 42);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(sampled.phi[i], exact.phi[i], 0.02) << i;
  EXPECT_NEAR(sampled.base_value + sampled.sum(), predict(model, x), 1e-9);
}

TEST(ShapSampled, SingleSampleIsReproducible) {
  std::mt19937_64 rng(9);
  const Model model = random_model(20, rng);
  const auto x = random_row(20, rng);
  const auto bg = random_rows(3, 20, rng);
  const auto a = shap_sampled(model, x, bg, 1, 77);
  const auto b = shap_sampled(model, x, bg, 1, 77);
  EXPECT_EQ(a.phi, b.phi);
}

TEST(ShapSampled, ZeroWeightModelIsAllZero) {
  std::mt19937_64 rng(10);
  Model model = random_model(20, rng);
  std::fill(model.weights.begin(), model.weights.end(), 0.0);
  const auto cs = shap_sampled(model, random_row(20, rng), random_rows(5, 20, rng), 50, 1);
  for (double p : cs.phi) EXPECT_EQ(p, 0.0);
  EXPECT_EQ(cs.method.residual, 0.0);
}

TEST(ShapAuto, PicksMethodByExactLimit) {
  std::mt19937_64 rng(11);
  Explainer e;
  e.background = random_rows(4, 14, rng);
  EXPECT_EQ(e.explain(random_model(14, rng), random_row(14, rng)).method.kind, ShapMethod::Kind::kExact);
  e.background = random_rows(4, 15, rng);
  EXPECT_EQ(e.explain(random_model(15, rng), random_row(15, rng)).method.kind, ShapMethod::Kind::kSampled);
}

TEST(Rollup, GroupSumsChildren) {
  const FeatureSet fs({descriptor("a", {"pre", "g", "a"}), descriptor("b", {"pre", "g", "b"}),
                       descriptor("c", {"in", "h", "c"})});
  const HierarchyNode h = group_rollup(build_hierarchy(fs), {{"a", 0.2}, {"b", -0.1}, {"c", 0.05}});
  ASSERT_EQ(h.children.size(), 2u);
  EXPECT_DOUBLE_EQ(h.children[0].group_contribution, 0.1);
  EXPECT_DOUBLE_EQ(h.children[0].children[0].group_contribution, 0.1);
  // singleton group equals its leaf
  EXPECT_DOUBLE_EQ(h.children[1].children[0].group_contribution, 0.05);
  EXPECT_DOUBLE_EQ(h.group_contribution, 0.15);
}

TEST(Rollup, OrphanContributionRejected) {
  const FeatureSet fs({descriptor("a", {"pre", "g", "a"})});
  EXPECT_THROW(group_rollup(build_hierarchy(fs), {{"zz", 1.0}}), Error);
}

TEST(Rollup, RootPlusBaseIsPrediction) {
  std::mt19937_64 rng(12);
  const Model model = random_model(6, rng);
  std::vector<FeatureDescriptor> ds;
  for (std::size_t i = 0; i < 6; ++i) {
    ds.push_back(descriptor(model.feature_ids[i], {i < 3 ? "pre" : "in", "g" + std::to_string(i % 2),
                                                   model.feature_ids[i]}));
  }
  const FeatureSet fs(ds);
  std::vector<MatrixColumn> cols;
  for (std::size_t i = 0; i < 6; ++i) cols.push_back({model.feature_ids[i], i, std::nullopt});
  const auto x = random_row(6, rng);
  const auto cs = shap_exact(model, x, random_rows(5, 6, rng));
  const auto h = group_rollup(build_hierarchy(fs), descriptor_contributions(cs, fs, cols));
  EXPECT_NEAR(h.group_contribution + cs.base_value, predict(model, x), 1e-12);
}

TEST(SortFilter, WorkedOrdering) {
  const std::vector<HierarchyNode> n = {leaf("a", 0.3), leaf("b", -0.4), leaf("c", 0.1)};
  EXPECT_EQ(labels(sort_filter(n, SortKey::kAbsContributionDesc)),
            (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(labels(sort_filter(n, SortKey::kContributionDesc)),
            (std::vector<std::string>{"a", "c", "b"}));
  EXPECT_EQ(labels(sort_filter(n, SortKey::kName)), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(labels(sort_filter(n, SortKey::kAbsContributionDesc, 0.35)), (std::vector<std::string>{"b"}));
}

TEST(SortFilter, TopK) {
  std::vector<HierarchyNode> n;
  for (int i = 0; i < 40; ++i) n.push_back(leaf("n" + std::to_string(i), 0.01 * i));
  const auto top = sort_filter(n, SortKey::kContributionDesc, 0.0, 5);
  ASSERT_EQ(top.size(), 5u);
  EXPECT_EQ(top[0].label, "n39");
}
