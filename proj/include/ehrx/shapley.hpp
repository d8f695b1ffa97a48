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
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "json.hpp"

namespace ehrx {

// Which quantity the value function averages over the background.
enum class ShapOutput { kProbability, kLogit };

struct ShapMethod {
  enum class Kind { kExact, kSampled };
  Kind kind = Kind::kExact;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  // predict(x) - base - sum(phi) before redistribution (sampled only)
  double residual = 0.0;
  ShapOutput output = ShapOutput::kProbability;
};

struct ContributionSet {
  std::string instance_id;
  std::string target_label;
  double base_value = 0.0;
  double prediction = 0.0;
  std::vector<std::string> feature_ids;
  std::vector<double> phi;
  ShapMethod method;

  double sum() const { return std::accumulate(phi.begin(), phi.end(), 0.0); }
};

// A model whose logit is bias + sum_i term(i, x_i) followed by a monotone
// link. Lets the value function update one coordinate in O(1).
template <class M>
concept AdditiveLogitModel = requires(const M& m, std::size_t i, double v) {
  { m.term(i, v) } -> std::convertible_to<double>;
  { m.bias } -> std::convertible_to<double>;
  { M::link(v) } -> std::convertible_to<double>;
  { m.size() } -> std::convertible_to<std::size_t>;
  { m.feature_ids } -> std::convertible_to<std::vector<std::string>>;
};

struct ShapOptions {
  std::size_t exact_limit = 14;
  ShapOutput output = ShapOutput::kProbability;
};

namespace detail {

inline void check_background(std::size_t m, std::span<const std::vector<double>> background) {
  if (background.empty()) fail(ErrorCode::kInvalidArgument, "empty background");
  for (const auto& b : background) {
    if (b.size() != m) fail(ErrorCode::kInvalidArgument, "background row width mismatch");
  }
}

// Shapley weights |S|! (m - |S| - 1)! / m! indexed by |S|.
inline std::vector<double> shapley_weights(std::size_t m) {
  std::vector<double> w(m);
  for (std::size_t s = 0; s < m; ++s) {
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1) +
                    std::lgamma(static_cast<double>(m - s)) -
                    std::lgamma(static_cast<double>(m) + 1));
  }
  return w;
}

// phi from a table of v(S) over all 2^m coalitions (bit i == feature i).
inline std::vector<double> phi_from_values(std::size_t m, const std::vector<double>& value) {
  const auto weight = shapley_weights(m);
  std::vector<double> phi(m, 0.0);
  const std::uint32_t full = (1u << m);
  for (std::uint32_t s = 0; s < full; ++s) {
    const auto size = static_cast<std::size_t>(std::popcount(s));
    for (std::size_t i = 0; i < m; ++i) {
      if (s & (1u << i)) continue;
      phi[i] += weight[size] * (value[s | (1u << i)] - value[s]);
    }
  }
  return phi;
}

template <AdditiveLogitModel M>
struct AdditiveGame {
  const M& model;
  ShapOutput output;
  std::vector<double> x_terms;
  std::vector<std::vector<double>> b_terms;

  AdditiveGame(const M& model, std::span<const double> x,
               std::span<const std::vector<double>> background, ShapOutput output)
      : model(model), output(output) {
    for (std::size_t i = 0; i < x.size(); ++i) x_terms.push_back(model.term(i, x[i]));
    for (const auto& b : background) {
      std::vector<double> t;
      for (std::size_t i = 0; i < b.size(); ++i) t.push_back(model.term(i, b[i]));
      b_terms.push_back(std::move(t));
    }
  }

  double out(double logit) const {
    return output == ShapOutput::kLogit ? logit : M::link(logit);
  }

  // Logit of each background row with no feature taken from x.
  std::vector<double> empty_logits() const {
    std::vector<double> z;
    for (const auto& t : b_terms) z.push_back(std::accumulate(t.begin(), t.end(), model.bias));
    return z;
  }
};

}  // namespace detail

// Interventional Shapley values by full coalition enumeration:
// v(S) = mean_b f(x_S, b_rest). Coalitions are visited in Gray-code order so
// each step moves one coordinate.
template <AdditiveLogitModel M>
ContributionSet shap_exact(const M& model, std::span<const double> x,
                           std::span<const std::vector<double>> background,
                           const ShapOptions& options = {}) {
  const std::size_t m = model.size();
  if (x.size() != m) fail(ErrorCode::kInvalidArgument, "feature vector width mismatch");
  detail::check_background(m, background);
  if (m > options.exact_limit) {
    fail(ErrorCode::kFailedPrecondition,
         std::to_string(m) + " features exceed exact_limit " +
             std::to_string(options.exact_limit) + "; use shap_sampled");
  }
  detail::AdditiveGame<M> game(model, x, background, options.output);
  const double inv_b = 1.0 / static_cast<double>(background.size());
  std::vector<double> z = game.empty_logits();
  const std::uint32_t full = 1u << m;
  std::vector<double> value(full, 0.0);
  std::uint32_t coalition = 0;
  for (std::uint32_t step = 0; step < full; ++step) {
    if (step > 0) {
      const auto flip = static_cast<std::size_t>(std::countr_zero(step));
      const bool adding = !(coalition & (1u << flip));
      coalition ^= (1u << flip);
      for (std::size_t r = 0; r < z.size(); ++r) {
        const double delta = game.x_terms[flip] - game.b_terms[r][flip];
        z[r] += adding ? delta : -delta;
      }
    }
    double v = 0.0;
    for (double zr : z) v += game.out(zr);
    value[coalition] = v * inv_b;
  }

  ContributionSet cs;
  cs.feature_ids = model.feature_ids;
  cs.phi = detail::phi_from_values(m, value);
  cs.base_value = value[0];
  cs.prediction = value[full - 1];
  cs.method.kind = ShapMethod::Kind::kExact;
  cs.method.output = options.output;
  return cs;
}

// Exact enumeration for an arbitrary black-box value model f(x) -> real.
inline ContributionSet shap_exact(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x,
                                  std::span<const std::vector<double>> background,
                                  std::size_t exact_limit = 14) {
  const std::size_t m = x.size();
  detail::check_background(m, background);
  if (m > exact_limit) {
    fail(ErrorCode::kFailedPrecondition, "feature count exceeds exact_limit; use shap_sampled");
  }
  const std::uint32_t full = 1u << m;
  std::vector<double> value(full, 0.0);
  std::vector<double> z(m);
  for (std::uint32_t s = 0; s < full; ++s) {
    double v = 0.0;
    for (const auto& b : background) {
      for (std::size_t i = 0; i < m; ++i) z[i] = (s & (1u << i)) ? x[i] : b[i];
      v += f(z);
    }
    value[s] = v / static_cast<double>(background.size());
  }
  ContributionSet cs;
  cs.phi = detail::phi_from_values(m, value);
  cs.base_value = value[0];
  cs.prediction = value[full - 1];
  return cs;
}

namespace detail {

// Adds predict(x) - base - sum(phi) proportionally to |phi| (evenly when
// every phi is zero).
inline void redistribute_residual(ContributionSet& cs) {
  const double residual = cs.prediction - cs.base_value - cs.sum();
  cs.method.residual = residual;
  if (residual == 0.0) return;
  double total = 0.0;
  for (double p : cs.phi) total += std::abs(p);
  for (double& p : cs.phi) {
    p += total > 0.0 ? residual * std::abs(p) / total
                     : residual / static_cast<double>(cs.phi.size());
  }
}

}  // namespace detail

// Permutation-sampling estimate. Each sampled ordering walks every background
// row from b to x, crediting each feature with its marginal change.
template <AdditiveLogitModel M>
ContributionSet shap_sampled(const M& model, std::span<const double> x,
                             std::span<const std::vector<double>> background,
                             std::size_t n_samples, std::uint64_t seed,
                             ShapOutput output = ShapOutput::kProbability) {
  const std::size_t m = model.size();
  if (n_samples < 1) fail(ErrorCode::kInvalidArgument, "n_samples must be at least 1");
  if (x.size() != m) fail(ErrorCode::kInvalidArgument, "feature vector width mismatch");
  detail::check_background(m, background);
  detail::AdditiveGame<M> game(model, x, background, output);
  const std::vector<double> z0 = game.empty_logits();

  std::vector<double> phi(m, 0.0);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t r = 0; r < z0.size(); ++r) {
      double z = z0[r];
      double prev = game.out(z);
      for (std::size_t i : order) {
        z += game.x_terms[i] - game.b_terms[r][i];
        const double cur = game.out(z);
        phi[i] += cur - prev;
        prev = cur;
      }
    }
  }
  const double scale = 1.0 / (static_cast<double>(n_samples) * static_cast<double>(z0.size()));
  for (double& p : phi) p *= scale;

  ContributionSet cs;
  cs.feature_ids = model.feature_ids;
  cs.phi = std::move(phi);
  double base = 0.0;
  for (double z : z0) base += game.out(z);
  cs.base_value = base / static_cast<double>(z0.size());
  double zx = model.bias;
  for (double t : game.x_terms) zx += t;
  cs.prediction = game.out(zx);
  cs.method = {ShapMethod::Kind::kSampled, n_samples, seed, 0.0, output};
  detail::redistribute_residual(cs);
  return cs;
}

// Exact when the model is small enough, sampled otherwise.
template <AdditiveLogitModel M>
ContributionSet shap_auto(const M& model, std::span<const double> x,
                          std::span<const std::vector<double>> background,
                          const ShapOptions& options, std::size_t n_samples,
                          std::uint64_t seed) {
  if (model.size() <= options.exact_limit) return shap_exact(model, x, background, options);
  return shap_sampled(model, x, background, n_samples, seed, options.output);
}

// Background rows plus the settings every explanation of one session shares.
struct Explainer {
  std::vector<std::vector<double>> background;
  ShapOptions options;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 42;

  template <AdditiveLogitModel M>
  ContributionSet explain(const M& model, std::span<const double> x) const {
    return shap_auto(model, x, background, options, n_samples, seed);
  }
};

struct HierarchyNode {
  std::string label;
  std::optional<std::string> feature_id;  // leaves only
  std::vector<HierarchyNode> children;
  double group_contribution = 0.0;

  bool is_leaf() const { return feature_id.has_value(); }
};

// root -> phase -> group -> feature, in descriptor order.
inline HierarchyNode build_hierarchy(const FeatureSet& features) {
  HierarchyNode root{"all", std::nullopt, {}, 0.0};
  auto child = [](HierarchyNode& parent, const std::string& label) -> HierarchyNode& {
    for (auto& c : parent.children) {
      if (!c.is_leaf() && c.label == label) return c;
    }
    parent.children.push_back({label, std::nullopt, {}, 0.0});
    return parent.children.back();
  };
  for (const auto& d : features.descriptors()) {
    HierarchyNode& phase = child(root, d.hierarchy_path.at(0));
    HierarchyNode& group = child(phase, d.hierarchy_path.at(1));
    group.children.push_back({d.hierarchy_path.at(2), d.id, {}, 0.0});
  }
  return root;
}

// Sums matrix-column contributions into their descriptors (one-hot columns of
// a categorical feature collapse into one value).
inline std::map<std::string, double> descriptor_contributions(
    const ContributionSet& cs, const FeatureSet& features,
    const std::vector<MatrixColumn>& columns) {
  if (columns.size() != cs.phi.size()) {
    fail(ErrorCode::kInvalidArgument, "contribution width does not match matrix columns");
  }
  std::map<std::string, double> out;
  for (const auto& d : features.descriptors()) out[d.id] = 0.0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out[features[columns[c].descriptor].id] += cs.phi[c];
  }
  return out;
}

// Each node's group_contribution becomes the sum of the leaf contributions
// beneath it; leaves absent from the map contribute 0.
inline HierarchyNode group_rollup(HierarchyNode hierarchy,
                                  const std::map<std::string, double>& contributions) {
  std::map<std::string, int> seen;
  std::function<double(HierarchyNode&)> visit = [&](HierarchyNode& node) -> double {
    if (node.is_leaf()) {
      if (++seen[*node.feature_id] > 1) {
        fail(ErrorCode::kInvalidArgument, "feature " + *node.feature_id + " in two leaves");
      }
      auto it = contributions.find(*node.feature_id);
      node.group_contribution = it == contributions.end() ? 0.0 : it->second;
      return node.group_contribution;
    }
    double sum = 0.0;
    for (auto& c : node.children) sum += visit(c);
    node.group_contribution = sum;
    return sum;
  };
  visit(hierarchy);
  for (const auto& [id, phi] : contributions) {
    if (!seen.count(id)) fail(ErrorCode::kInvalidArgument, "orphan feature id " + id);
  }
  return hierarchy;
}

enum class SortKey { kContributionDesc, kAbsContributionDesc, kName };

inline std::optional<SortKey> parse_sort_key(const std::string& s) {
  if (s == "contribution") return SortKey::kContributionDesc;
  if (s == "abs" || s == "abs_contribution") return SortKey::kAbsContributionDesc;
  if (s == "name") return SortKey::kName;
  return std::nullopt;
}

// Stable sort, then drop nodes with |phi| < min_abs, then keep the first top_k.
inline std::vector<HierarchyNode> sort_filter(std::vector<HierarchyNode> nodes, SortKey key,
                                              double min_abs = 0.0,
                                              std::optional<std::size_t> top_k = std::nullopt) {
  std::stable_sort(nodes.begin(), nodes.end(), [key](const auto& a, const auto& b) {
    switch (key) {
      case SortKey::kContributionDesc:
        return a.group_contribution > b.group_contribution;
      case SortKey::kAbsContributionDesc:
        return std::abs(a.group_contribution) > std::abs(b.group_contribution);
      case SortKey::kName:
        return a.label < b.label;
    }
    return false;
  });
  std::erase_if(nodes, [min_abs](const auto& n) { return std::abs(n.group_contribution) < min_abs; });
  if (top_k && nodes.size() > *top_k) nodes.resize(*top_k);
  return nodes;
}

inline nlohmann::json method_to_json(const ShapMethod& m) {
  nlohmann::json j = {{"kind", m.kind == ShapMethod::Kind::kExact ? "exact" : "sampled"},
                      {"output", m.output == ShapOutput::kLogit ? "logit" : "probability"},
                      {"value_function", "interventional"}};
  if (m.kind == ShapMethod::Kind::kSampled) {
    j["n_samples"] = m.n_samples;
    j["seed"] = m.seed;
    j["residual_redistributed"] = m.residual;
  }
  return j;
}

inline nlohmann::json hierarchy_to_json(const HierarchyNode& n) {
  nlohmann::json j = {{"label", n.label}, {"group_contribution", n.group_contribution}};
  if (n.feature_id) {
    j["feature_id"] = *n.feature_id;
  } else {
    j["children"] = nlohmann::json::array();
    for (const auto& c : n.children) j["children"].push_back(hierarchy_to_json(c));
  }
  return j;
}

inline nlohmann::json contributions_to_json(const ContributionSet& cs,
                                            const HierarchyNode* hierarchy = nullptr) {
  nlohmann::json j = {{"instance_id", cs.instance_id},
                      {"target", cs.target_label},
                      {"base_value", cs.base_value},
                      {"prediction", cs.prediction},
                      {"method", method_to_json(cs.method)},
                      {"contributions", nlohmann::json::array()}};
  for (std::size_t i = 0; i < cs.phi.size(); ++i) {
    j["contributions"].push_back({{"feature_id", cs.feature_ids.at(i)}, {"phi", cs.phi[i]}});
  }
  if (hierarchy) j["hierarchy"] = hierarchy_to_json(*hierarchy);
  return j;
}

}  // namespace ehrx
