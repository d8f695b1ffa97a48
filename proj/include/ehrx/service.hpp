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
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "ehrx/cohort.hpp"
#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "ehrx/influence.hpp"
#include "ehrx/predictor.hpp"
#include "ehrx/shapley.hpp"
#include "ehrx/whatif.hpp"
#include "json.hpp"

namespace ehrx::service {

using nlohmann::json;

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::filesystem::path models_dir;  // model_<code>.json; missing models are trained at startup
  std::filesystem::path static_dir;  // UI assets served under /
  std::string host = "0.0.0.0";
  int port = 8080;
  std::vector<double> z_grid = default_z_grid();
  std::size_t window = 0;  // occlusion window; 0 picks ~5 minutes per series
  std::size_t exact_limit = 14;
  std::uint64_t seed = 42;
  std::size_t n_samples = 1000;
  std::size_t background_size = 64;
  TrainConfig train;
};

inline ServiceConfig config_from_json(const json& j, ServiceConfig c = {}) {
  try {
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("models_dir")) c.models_dir = j.at("models_dir").get<std::string>();
    if (j.contains("static_dir")) c.static_dir = j.at("static_dir").get<std::string>();
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.z_grid = j.value("z_grid", c.z_grid);
    c.window = j.value("k", c.window);
    c.exact_limit = j.value("exact_limit", c.exact_limit);
    c.seed = j.value("seed", c.seed);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.background_size = j.value("background_size", c.background_size);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed service config: ") + e.what());
  }
  if (c.z_grid.empty()) fail(ErrorCode::kInvalidArgument, "z_grid must not be empty");
  if (c.background_size == 0 || c.n_samples == 0) {
    fail(ErrorCode::kInvalidArgument, "background_size and n_samples must be positive");
  }
  return c;
}

// EHRX_PORT and EHRX_DATA override the file/flag values.
inline void apply_env_overrides(ServiceConfig& c) {
  if (const char* port = std::getenv("EHRX_PORT")) {
    try {
      c.port = std::stoi(port);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "EHRX_PORT is not a number");
    }
  }
  if (const char* data = std::getenv("EHRX_DATA")) c.data_dir = data;
}

struct ApiResponse {
  int status = 200;
  json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kFailedPrecondition: return 409;
    case ErrorCode::kDataLoss:
    case ErrorCode::kIo: return 500;
  }
  return 500;
}

inline ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

using Query = std::map<std::string, std::string>;

// Prediction, contributions and rolled-up hierarchy for one
// (instance, target, cohort).
struct Explanation {
  ContributionSet contributions;
  std::map<std::string, double> by_descriptor;
  HierarchyNode hierarchy;
};

// Everything the API serves, built once. Request handling reads it and only
// inserts into the two caches.
class AppState {
 public:
  AppState(ServiceConfig config, Dataset dataset, std::map<std::string, Model> models)
      : config_(std::move(config)), dataset_(std::move(dataset)) {
    features_ = FeatureSet(synthesize_descriptors(dataset_, dataset_.schema().target.entity));
    matrix_ = build_matrix(dataset_, features_);
    hierarchy_ = build_hierarchy(features_);
    for (const auto& code : complication_labels()) {
      if (!dataset_.schema().target.labels.count(code)) continue;
      auto it = models.find(code);
      if (it != models.end()) {
        if (it->second.feature_ids != matrix_.column_ids()) {
          fail(ErrorCode::kInvalidArgument,
               "model for " + code + " does not match the dataset's feature columns");
        }
        models_.emplace(code, std::move(it->second));
      } else if (matrix_.rows() > 0) {
        models_.emplace(code, train(matrix_, target_labels(dataset_, code), config_.train, code));
      }
    }
    for (std::size_t r = 0; r < matrix_.rows(); ++r) {
      rows_by_patient_[matrix_.patient_ids[r]].push_back(r);
    }
    default_cohort_ = cohorts_.get_or_select(dataset_, CohortSelector{});
  }

  // Loads the dataset from config.data_dir and any model_<code>.json found in
  // config.models_dir.
  static std::unique_ptr<AppState> load(const ServiceConfig& config) {
    Dataset ds = load_dataset(config.data_dir);
    std::map<std::string, Model> models;
    if (!config.models_dir.empty()) {
      for (const auto& code : complication_labels()) {
        const auto path = config.models_dir / ("model_" + code + ".json");
        if (std::filesystem::exists(path)) models.emplace(code, load_model(path));
      }
    }
    return std::make_unique<AppState>(config, std::move(ds), std::move(models));
  }

  const ServiceConfig& config() const { return config_; }
  const Dataset& dataset() const { return dataset_; }
  const FeatureSet& features() const { return features_; }
  const FeatureMatrix& matrix() const { return matrix_; }
  const Model& model(const std::string& code) const {
    auto it = models_.find(code);
    if (it == models_.end()) fail(ErrorCode::kInvalidArgument, "unknown target " + code);
    return it->second;
  }
  const std::map<std::string, Model>& models() const { return models_; }

  ApiResponse handle(const std::string& method, const std::string& path, const Query& query,
                     const std::string& body) {
    try {
      return route(method, path, query, body);
    } catch (const Error& e) {
      return error_response(http_status(e.code()), error_code_name(e.code()), e.what());
    } catch (const json::exception& e) {
      return error_response(400, "invalid_argument", e.what());
    }
  }

  // Shared by the features, whatif and explain paths.
  std::shared_ptr<const Explanation> explanation(std::size_t row, const std::string& code,
                                                 const CohortEntry& cohort) {
    const std::string key = matrix_.row_ids[row] + "|" + code + "|" + cohort.cohort.id;
    {
      std::shared_lock lock(explanations_mutex_);
      auto it = explanations_.find(key);
      if (it != explanations_.end()) return it->second;
    }
    const Model& m = model(code);
    auto exp = std::make_shared<Explanation>();
    exp->contributions = explainer(cohort).explain(m, matrix_.row(row));
    exp->contributions.instance_id = matrix_.row_ids[row];
    exp->contributions.target_label = code;
    exp->by_descriptor = descriptor_contributions(exp->contributions, features_, matrix_.columns);
    exp->hierarchy = group_rollup(hierarchy_, exp->by_descriptor);
    std::unique_lock lock(explanations_mutex_);
    return explanations_.emplace(key, std::move(exp)).first->second;
  }

  Explainer explainer(const CohortEntry& cohort) const {
    Explainer e;
    std::vector<std::size_t> rows = cohort.split.low_rows;
    if (rows.empty()) rows = cohort.cohort.rows;
    if (rows.empty()) fail(ErrorCode::kFailedPrecondition, "cohort is empty; no background rows");
    const std::size_t n = std::min(rows.size(), config_.background_size);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rows[i * rows.size() / n];
      e.background.emplace_back(matrix_.row(r).begin(), matrix_.row(r).end());
    }
    e.options.exact_limit = config_.exact_limit;
    e.n_samples = config_.n_samples;
    e.seed = config_.seed;
    return e;
  }

  std::shared_ptr<const CohortEntry> cohort(const Query& query, bool required = false) {
    auto it = query.find("cohort");
    if (it == query.end() || it->second.empty()) {
      if (required) fail(ErrorCode::kInvalidArgument, "cohort parameter required");
      return default_cohort_;
    }
    auto entry = cohorts_.find(it->second);
    if (!entry) fail(ErrorCode::kNotFound, "unknown cohort id " + it->second);
    return entry;
  }

  std::size_t instance_row(const std::string& patient_id) const {
    auto it = rows_by_patient_.find(patient_id);
    if (it == rows_by_patient_.end() || it->second.empty()) {
      fail(ErrorCode::kNotFound, "unknown patient id " + patient_id);
    }
    return it->second.front();
  }

 private:
  ApiResponse route(const std::string& method, const std::string& path, const Query& query,
                    const std::string& body) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string p; std::getline(ss, p, '/');) {
      if (!p.empty()) parts.push_back(p);
    }
    // (route, allowed method, handler)
    std::optional<std::pair<const char*, std::function<ApiResponse()>>> hit;
    if (parts.size() >= 2 && parts[0] == "api") {
      if (parts.size() == 2 && parts[1] == "patients") {
        hit = {"GET", [&] { return patients(); }};
      } else if (parts.size() == 2 && parts[1] == "cohort") {
        hit = {"POST", [&] { return post_cohort(body); }};
      } else if (parts.size() >= 4 && parts[1] == "patient") {
        const std::string& id = parts[2];
        const std::string& what = parts[3];
        if (parts.size() == 4 && what == "profile") {
          hit = {"GET", [&] { return profile(id, query); }};
        } else if (parts.size() == 4 && what == "features") {
          hit = {"GET", [&] { return feature_view(id, query); }};
        } else if (parts.size() == 5 && what == "series") {
          hit = {"GET", [&] { return series(id, parts[4], query); }};
        } else if (parts.size() == 4 && what == "timeline") {
          hit = {"GET", [&] { return timeline(id, query); }};
        } else if (parts.size() == 4 && what == "whatif") {
          hit = {"POST", [&] { return post_whatif(id, body); }};
        } else if (parts.size() == 5 && what == "distribution") {
          hit = {"GET", [&] { return distribution(id, parts[4], query); }};
        }
      }
    }
    if (hit && method != hit->first) {
      return error_response(405, "method_not_allowed", method + " not allowed on " + path);
    }
    if (hit) return hit->second();
    return error_response(404, "not_found", "no route for " + path);
  }

  ApiResponse patients() {
    json list = json::array();
    for (const auto& pid : dataset_.patient_ids()) {
      json entry = {{"patient_id", pid}};
      auto it = rows_by_patient_.find(pid);
      if (it == rows_by_patient_.end() || it->second.empty()) {
        entry["instance_id"] = nullptr;
        entry["predictions"] = nullptr;
      } else {
        const std::size_t r = it->second.front();
        entry["instance_id"] = matrix_.row_ids[r];
        json preds = json::object();
        for (const auto& [code, m] : models_) {
          const double p = predict(m, matrix_.row(r));
          preds[code] = {{"probability", p}, {"positive", p >= kDecisionThreshold}};
        }
        entry["predictions"] = preds;
      }
      list.push_back(entry);
    }
    return {200, {{"patients", list}, {"count", list.size()}}};
  }

  ApiResponse post_cohort(const std::string& body) {
    const json j = body.empty() ? json::object() : json::parse(body);
    const CohortSelector selector = selector_from_json(j.contains("selector") ? j.at("selector") : j);
    auto entry = cohorts_.get_or_select(dataset_, selector);
    return {200,
            {{"cohort_id", entry->cohort.id},
             {"size", entry->cohort.size()},
             {"patient_count", entry->cohort.patient_ids.size()},
             {"low_risk_size", entry->split.low_rows.size()},
             {"high_risk_size", entry->split.high_rows.size()},
             {"selector", selector.canonical()}}};
  }

  json value_json(std::size_t row, const FeatureDescriptor& d) const {
    if (d.categorical) {
      for (std::size_t c = 0; c < matrix_.cols(); ++c) {
        const auto& col = matrix_.columns[c];
        if (features_[col.descriptor].id == d.id && !matrix_.is_missing(row, c) &&
            matrix_.at(row, c) == 1.0) {
          return *col.category;
        }
      }
      return nullptr;
    }
    const std::size_t c = *matrix_.column_index(d.id);
    if (matrix_.is_missing(row, c)) return nullptr;
    return matrix_.at(row, c);
  }

  // Reference, flag and value annotations for one numeric descriptor.
  json annotate(std::size_t row, const FeatureDescriptor& d, const CohortEntry& cohort) const {
    json j = {{"feature_id", d.id},
              {"display_name", d.display_name},
              {"kind", d.is_dynamic() ? "dynamic" : "static"},
              {"value_type", d.categorical ? "categorical" : "numeric"},
              {"value", value_json(row, d)}};
    if (d.is_dynamic()) {
      j["item_id"] = *d.item_id;
      j["source_entity"] = d.source_entity;
    }
    if (d.categorical) {
      j["reference"] = nullptr;
      j["flag"] = nullptr;
      return j;
    }
    const std::size_t c = *matrix_.column_index(d.id);
    const ReferenceRange ref = feature_reference(matrix_, cohort.split.low_rows, c);
    j["reference"] = reference_to_json(ref);
    if (matrix_.is_missing(row, c)) {
      j["flag"] = nullptr;
    } else {
      const FlagResult f = flag(matrix_.at(row, c), ref);
      j["flag"] = flag_name(f.flag);
      j["has_reference"] = f.has_reference;
    }
    return j;
  }

  ApiResponse profile(const std::string& patient_id, const Query& query) {
    const std::size_t row = instance_row(patient_id);
    auto cohort_entry = cohort(query);
    const TargetInstance inst = resolve_instance(dataset_, matrix_.row_ids[row]);
    json sections = json::object();
    auto section = [&](const std::string& name, const std::string& entity,
                       std::optional<std::size_t> table_row) {
      json attrs = json::array();
      if (table_row) {
        const Table& t = dataset_.table(entity);
        for (std::size_t c = 0; c < t.schema().columns.size(); ++c) {
          const ColumnSpec& col = t.schema().columns[c];
          if (dataset_.schema().is_label_column(entity, col.name)) continue;
          json a = {{"name", col.name}, {"value", t.cell(*table_row, c)}};
          const auto fid = features_.index_of(entity + ":" + col.name);
          if (fid && !features_[*fid].categorical) {
            const json ann = annotate(row, features_[*fid], *cohort_entry);
            a["feature_id"] = features_[*fid].id;
            a["reference"] = ann["reference"];
            a["flag"] = ann["flag"];
          }
          attrs.push_back(a);
        }
      }
      sections[name] = attrs;
    };
    section("demographics", kPatientsEntity, dataset_.table(kPatientsEntity).find(patient_id));
    section("admission", dataset_.schema().admission.entity, inst.admission_row);
    section("surgery", dataset_.schema().target.entity, inst.target_row);
    return {200,
            {{"patient_id", patient_id},
             {"instance_id", inst.id},
             {"cohort_id", cohort_entry->cohort.id},
             {"profile", sections}}};
  }

  json node_json(const HierarchyNode& n, std::size_t row, const CohortEntry& cohort,
                 SortKey key) const {
    if (n.is_leaf()) {
      json j = annotate(row, features_.get(*n.feature_id), cohort);
      j["label"] = n.label;
      j["contribution"] = n.group_contribution;
      return j;
    }
    json children = json::array();
    for (const auto& c : sort_filter(n.children, key)) children.push_back(node_json(c, row, cohort, key));
    return {{"label", n.label}, {"group_contribution", n.group_contribution}, {"children", children}};
  }

  static std::string required(const Query& q, const std::string& name) {
    auto it = q.find(name);
    if (it == q.end() || it->second.empty()) fail(ErrorCode::kInvalidArgument, name + " parameter required");
    return it->second;
  }

  ApiResponse feature_view(const std::string& patient_id, const Query& query) {
    const std::size_t row = instance_row(patient_id);
    const std::string code = required(query, "target");
    const Model& m = model(code);
    auto cohort_entry = cohort(query);
    SortKey key = SortKey::kAbsContributionDesc;
    if (auto it = query.find("sort"); it != query.end()) {
      auto k = parse_sort_key(it->second);
      if (!k) fail(ErrorCode::kInvalidArgument, "unknown sort key " + it->second);
      key = *k;
    }
    std::optional<std::size_t> topk;
    double min_abs = 0.0;
    std::string level = "leaf";
    try {
      if (auto it = query.find("topk"); it != query.end()) topk = std::stoul(it->second);
      if (auto it = query.find("min_abs"); it != query.end()) min_abs = std::stod(it->second);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidArgument, "topk/min_abs must be numbers");
    }
    if (auto it = query.find("level"); it != query.end()) level = it->second;
    const int depth = level == "phase" ? 1 : level == "group" ? 2 : level == "leaf" ? 3 : -1;
    if (depth < 0) fail(ErrorCode::kInvalidArgument, "level must be phase, group or leaf");

    auto exp = explanation(row, code, *cohort_entry);
    std::vector<HierarchyNode> at_level;
    std::vector<std::vector<std::string>> paths;
    std::function<void(const HierarchyNode&, int)> collect = [&](const HierarchyNode& n, int d) {
      if (d == depth) {
        at_level.push_back(n);
        return;
      }
      for (const auto& c : n.children) collect(c, d + 1);
    };
    collect(exp->hierarchy, 0);
    json rows = json::array();
    for (const auto& n : sort_filter(at_level, key, min_abs, topk)) {
      json j = node_json(n, row, *cohort_entry, key);
      if (!n.is_leaf()) {
        j.erase("children");
      }
      rows.push_back(j);
    }
    const double prediction = predict(m, matrix_.row(row));
    return {200,
            {{"patient_id", patient_id},
             {"instance_id", matrix_.row_ids[row]},
             {"target", code},
             {"cohort_id", cohort_entry->cohort.id},
             {"prediction", prediction},
             {"positive", prediction >= kDecisionThreshold},
             {"base_value", exp->contributions.base_value},
             {"method", method_to_json(exp->contributions.method)},
             {"hierarchy", node_json(exp->hierarchy, row, *cohort_entry, key)},
             {"level", level},
             {"rows", rows}}};
  }

  std::string item_entity(const std::string& item) const {
    for (const auto& t : dataset_.schema().tables) {
      if (!t.events) continue;
      const auto items = dataset_.items(t.entity);
      if (std::binary_search(items.begin(), items.end(), item)) return t.entity;
    }
    fail(ErrorCode::kNotFound, "unknown item " + item);
  }

  ApiResponse series(const std::string& patient_id, const std::string& item, const Query& query) {
    const std::size_t row = instance_row(patient_id);
    auto cohort_entry = cohort(query);
    const std::string entity = item_entity(item);
    const TargetInstance inst = resolve_instance(dataset_, matrix_.row_ids[row]);
    const ReferenceRange ref = record_reference(dataset_, cohort_entry->split.low_patients, item);

    const FeatureDescriptor* explain = nullptr;
    if (auto it = query.find("explain_feature"); it != query.end() && !it->second.empty()) {
      explain = &features_.get(it->second);
      if (!explain->is_dynamic() || *explain->item_id != item || explain->source_entity != entity) {
        fail(ErrorCode::kInvalidArgument, it->second + " is not a dynamic feature of " + item);
      }
    }
    const RecordSeries s =
        explain ? feature_series(*explain, dataset_, inst)
                : dataset_.get_series(patient_id, item, admission_window(dataset_, patient_id), entity);
    json points = json::array();
    for (const auto& p : s.points) {
      points.push_back({{"ts", format_timestamp(p.timestamp)},
                        {"value", p.value},
                        {"flag", flag_name(flag(p.value, ref).flag)}});
    }
    json out = {{"patient_id", patient_id},
                {"item_id", item},
                {"source_entity", entity},
                {"cohort_id", cohort_entry->cohort.id},
                {"window", {{"start", format_timestamp(s.points.empty() ? s.window.start : s.points.front().timestamp)},
                            {"end", format_timestamp(s.points.empty() ? s.window.end : s.points.back().timestamp)}}},
                {"reference", reference_to_json(ref)},
                {"points", points},
                {"segments", nullptr},
                {"overlay", nullptr}};
    if (!explain) return {200, out};
    if (s.size() < 2) {
      out["explain_error"] = "series has fewer than 2 records";
      return {200, out};
    }
    const std::size_t k = config_.window > 0 ? std::min(config_.window, s.size()) : default_window_size(s);
    std::vector<SegmentSet> siblings;
    std::optional<SegmentSet> target;
    for (const auto& d : features_.descriptors()) {
      if (!d.is_dynamic() || d.source_entity != explain->source_entity || *d.item_id != item ||
          d.window != explain->window) {
        continue;
      }
      const std::size_t c = *matrix_.column_index(d.id);
      if (matrix_.is_missing(row, c)) continue;
      const ReferenceRange fref = feature_reference(matrix_, cohort_entry->split.low_rows, c);
      SegmentSet set = influential_segments(s, d, matrix_.at(row, c), fref, k, config_.z_grid);
      if (d.id == explain->id) target = set;
      siblings.push_back(std::move(set));
    }
    out["segments"] = target ? segments_to_json(*target) : json();
    out["overlay"] = overlay_to_json(merge_overlays(s, siblings));
    return {200, out};
  }

  ApiResponse timeline(const std::string& patient_id, const Query& query) {
    instance_row(patient_id);
    auto cohort_entry = cohort(query, /*required=*/true);
    const std::string interval = required(query, "interval");
    std::int64_t hours = 0;
    if (interval == "1h") hours = 1;
    else if (interval == "4h") hours = 4;
    else if (interval == "8h") hours = 8;
    else fail(ErrorCode::kInvalidArgument, "interval must be one of 1h, 4h, 8h");
    std::vector<std::string> sources;
    std::map<std::string, ReferenceRange> refs;
    for (const auto& t : dataset_.schema().tables) {
      if (!t.events) continue;
      sources.push_back(t.entity);
      for (const auto& item : dataset_.items(t.entity)) {
        if (!refs.count(item)) refs[item] = record_reference(dataset_, cohort_entry->split.low_patients, item);
      }
    }
    json out = timeline_to_json(timeline_summary(dataset_, patient_id, sources, hours, refs));
    out["patient_id"] = patient_id;
    out["cohort_id"] = cohort_entry->cohort.id;
    return {200, out};
  }

  ApiResponse post_whatif(const std::string& patient_id, const std::string& body) {
    const std::size_t row = instance_row(patient_id);
    const json j = json::parse(body.empty() ? "{}" : body);
    const std::string code = j.value("target", std::string());
    const std::string fid = j.value("feature_id", std::string());
    const std::string cid = j.value("cohort_id", j.value("cohort", std::string()));
    if (code.empty() || fid.empty()) fail(ErrorCode::kInvalidArgument, "target and feature_id required");
    const Model& m = model(code);
    Query q;
    if (!cid.empty()) q["cohort"] = cid;
    auto cohort_entry = cohort(q);
    const auto c = matrix_.column_index(fid);
    if (!c) fail(ErrorCode::kNotFound, "unknown feature id " + fid);
    if (matrix_.columns[*c].category) {
      fail(ErrorCode::kFailedPrecondition, "undefined reference range for categorical feature " + fid);
    }
    const ReferenceRange ref = feature_reference(matrix_, cohort_entry->split.low_rows, *c);
    const WhatIfResult r = whatif(m, explainer(*cohort_entry), matrix_.row(row), *c, ref);
    json out = whatif_to_json(r);
    out["patient_id"] = patient_id;
    out["target"] = code;
    out["cohort_id"] = cohort_entry->cohort.id;
    out["reference"] = reference_to_json(ref);
    return {200, out};
  }

  ApiResponse distribution(const std::string& patient_id, const std::string& fid, const Query& query) {
    const std::size_t row = instance_row(patient_id);
    auto cohort_entry = cohort(query);
    const FeatureDescriptor& d = features_.get(fid);
    Distribution dist;
    if (d.categorical) {
      auto labels = [&](const std::vector<std::size_t>& rows) {
        std::vector<std::string> out;
        for (std::size_t r : rows) {
          const json v = value_json(r, d);
          if (v.is_string()) out.push_back(v.get<std::string>());
        }
        return out;
      };
      const json v = value_json(row, d);
      dist = categorical_distribution(labels(cohort_entry->split.low_rows),
                                      labels(cohort_entry->split.high_rows), d.categories,
                                      v.is_string() ? std::optional(v.get<std::string>()) : std::nullopt);
    } else {
      const std::size_t c = *matrix_.column_index(d.id);
      const auto low = column_values(matrix_, cohort_entry->split.low_rows, c);
      const auto high = column_values(matrix_, cohort_entry->split.high_rows, c);
      dist = numeric_distribution(low, high,
                                  matrix_.is_missing(row, c) ? std::nullopt : std::optional(matrix_.at(row, c)));
    }
    json out = distribution_to_json(dist);
    out["feature_id"] = d.id;
    out["patient_id"] = patient_id;
    out["cohort_id"] = cohort_entry->cohort.id;
    return {200, out};
  }

  ServiceConfig config_;
  Dataset dataset_;
  FeatureSet features_;
  FeatureMatrix matrix_;
  HierarchyNode hierarchy_;
  std::map<std::string, Model> models_;
  std::map<std::string, std::vector<std::size_t>> rows_by_patient_;
  CohortCache cohorts_;
  std::shared_ptr<const CohortEntry> default_cohort_;
  mutable std::shared_mutex explanations_mutex_;
  std::map<std::string, std::shared_ptr<const Explanation>> explanations_;
};

}  // namespace ehrx::service
