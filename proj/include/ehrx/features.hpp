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
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ehrx/csv.hpp"
#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/stats.hpp"
#include "json.hpp"

namespace ehrx {

enum class Aggregation { kMean, kSd, kMin, kMax, kCount, kTrend };

inline const std::vector<Aggregation>& all_aggregations() {
  static const std::vector<Aggregation> kAll = {Aggregation::kMean, Aggregation::kSd,
                                                Aggregation::kMin,  Aggregation::kMax,
                                                Aggregation::kCount, Aggregation::kTrend};
  return kAll;
}

inline std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::kMean: return "MEAN";
    case Aggregation::kSd: return "SD";
    case Aggregation::kMin: return "MIN";
    case Aggregation::kMax: return "MAX";
    case Aggregation::kCount: return "COUNT";
    case Aggregation::kTrend: return "TREND";
  }
  return "?";
}

inline std::optional<Aggregation> parse_aggregation(const std::string& name) {
  for (Aggregation a : all_aggregations()) {
    if (aggregation_name(a) == name) return a;
  }
  return std::nullopt;
}

enum class FeatureKind { kStatic, kDynamic };

enum class WindowKind { kPreSurgery, kInSurgery };

inline std::string window_name(WindowKind w) {
  return w == WindowKind::kPreSurgery ? "pre-surgery" : "in-surgery";
}

inline WindowKind parse_window(const std::string& name) {
  if (name == "pre-surgery") return WindowKind::kPreSurgery;
  if (name == "in-surgery") return WindowKind::kInSurgery;
  fail(ErrorCode::kInvalidArgument, "unknown window " + name);
}

// Aggregates values observed at the given offsets (hours since window start).
// SD uses n - 1; TREND is the least-squares slope per hour. Returns nullopt
// where the aggregate is undefined (no points, SD or TREND of one point).
inline std::optional<double> aggregate(Aggregation agg, std::span<const double> hours,
                                       std::span<const double> values) {
  const std::size_t n = values.size();
  switch (agg) {
    case Aggregation::kCount:
      return static_cast<double>(n);
    case Aggregation::kMean:
      if (n == 0) return std::nullopt;
      return stats::mean(values);
    case Aggregation::kSd:
      return stats::sample_sd(values);
    case Aggregation::kMin:
      if (n == 0) return std::nullopt;
      return *std::min_element(values.begin(), values.end());
    case Aggregation::kMax:
      if (n == 0) return std::nullopt;
      return *std::max_element(values.begin(), values.end());
    case Aggregation::kTrend:
      return stats::slope(hours, values);
  }
  return std::nullopt;
}

// Exact (entity, item, window) query that resolves a feature to its records.
struct LineageQuery {
  std::string entity;
  std::string item_or_column;
  WindowKind window = WindowKind::kInSurgery;
};

struct FeatureDescriptor {
  std::string id;
  std::string display_name;
  FeatureKind kind = FeatureKind::kStatic;
  std::string source_entity;
  std::string column;  // static features: the table column
  std::optional<std::string> item_id;
  std::optional<Aggregation> aggregation;
  WindowKind window = WindowKind::kPreSurgery;
  bool categorical = false;
  std::vector<std::string> categories;      // sorted; categorical only
  std::vector<std::string> hierarchy_path;  // [phase, group, leaf]

  bool is_dynamic() const { return kind == FeatureKind::kDynamic; }

  LineageQuery lineage() const {
    return {source_entity, is_dynamic() ? *item_id : column, window};
  }
};

// missing, numeric, or a category label
using FeatureValue = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const FeatureValue& v) {
  return std::holds_alternative<std::monostate>(v);
}

// The target-entity instance (one surgery) features are computed for.
struct TargetInstance {
  std::string id;
  std::string patient_id;
  std::size_t target_row = 0;
  std::optional<std::size_t> admission_row;
  TimeWindow in_surgery;
  TimeWindow pre_surgery;

  TimeWindow window(WindowKind w) const {
    return w == WindowKind::kInSurgery ? in_surgery : pre_surgery;
  }
};

inline TargetInstance resolve_instance(const Dataset& ds, std::size_t target_row) {
  const Schema& schema = ds.schema();
  const Table& target = ds.table(schema.target.entity);
  const TableSchema& ts = target.schema();
  TargetInstance inst;
  inst.id = target.cell(target_row, *ts.column_index(ts.primary_key));
  inst.target_row = target_row;
  const auto pcol = ts.foreign_key_column(kPatientsEntity);
  if (!pcol) fail(ErrorCode::kInvalidArgument, "target table has no patient reference");
  inst.patient_id = target.cell(target_row, *ts.column_index(*pcol));
  const Timestamp start = *target.timestamp(target_row, ts.require_column(schema.target.start_column));
  const Timestamp end = *target.timestamp(target_row, ts.require_column(schema.target.end_column));
  inst.in_surgery = {start, end};
  Timestamp pre_start{std::numeric_limits<std::int64_t>::min()};
  if (const auto acol = ts.foreign_key_column(schema.admission.entity);
      acol && ds.has_table(schema.admission.entity)) {
    const Table& adm = ds.table(schema.admission.entity);
    inst.admission_row = adm.find(target.cell(target_row, *ts.column_index(*acol)));
    if (inst.admission_row) {
      pre_start = *adm.timestamp(*inst.admission_row,
                                 adm.schema().require_column(schema.admission.start_column));
    }
  }
  inst.pre_surgery = {pre_start, {start.seconds - 1}};
  return inst;
}

inline TargetInstance resolve_instance(const Dataset& ds, const std::string& target_id) {
  const Table& target = ds.table(ds.schema().target.entity);
  auto row = target.find(target_id);
  if (!row) fail(ErrorCode::kNotFound, "unknown " + ds.schema().target.entity + " id " + target_id);
  return resolve_instance(ds, *row);
}

struct DescriptorOptions {
  std::vector<Aggregation> aggregations = all_aggregations();
};

namespace detail {

inline std::string display_aggregation(Aggregation a) {
  switch (a) {
    case Aggregation::kMean: return "Mean";
    case Aggregation::kSd: return "SD";
    case Aggregation::kMin: return "Min";
    case Aggregation::kMax: return "Max";
    case Aggregation::kCount: return "Count";
    case Aggregation::kTrend: return "Trend";
  }
  return "?";
}

}  // namespace detail

// Static descriptors for the numeric/categorical columns on the
// patient -> admission -> target path, then one dynamic descriptor per
// (event table, window, item, aggregation). Order is deterministic.
inline std::vector<FeatureDescriptor> synthesize_descriptors(
    const Dataset& ds, const std::string& target_entity = "surgeries",
    const DescriptorOptions& options = {}) {
  const Schema& schema = ds.schema();
  if (!schema.find(target_entity) || schema.target.entity != target_entity) {
    fail(ErrorCode::kInvalidArgument, "target entity " + target_entity + " absent from schema");
  }
  std::vector<FeatureDescriptor> out;
  struct StaticSource {
    std::string entity;
    WindowKind window;
    std::string group;
  };
  std::vector<StaticSource> sources = {{kPatientsEntity, WindowKind::kPreSurgery, "demographics"}};
  if (schema.find(schema.admission.entity)) {
    sources.push_back({schema.admission.entity, WindowKind::kPreSurgery, "admission"});
  }
  sources.push_back({target_entity, WindowKind::kInSurgery, "surgery"});

  for (const auto& src : sources) {
    const Table& table = ds.table(src.entity);
    const TableSchema& ts = table.schema();
    for (std::size_t c = 0; c < ts.columns.size(); ++c) {
      const ColumnSpec& col = ts.columns[c];
      if (col.kind != ColumnKind::kNumeric && col.kind != ColumnKind::kCategorical) continue;
      if (schema.is_label_column(src.entity, col.name)) continue;
      if (ts.events && (col.name == ts.events->item_column || col.name == ts.events->value_column)) {
        continue;
      }
      FeatureDescriptor d;
      d.id = src.entity + ":" + col.name;
      d.display_name = col.name;
      d.kind = FeatureKind::kStatic;
      d.source_entity = src.entity;
      d.column = col.name;
      d.window = src.window;
      d.categorical = col.kind == ColumnKind::kCategorical;
      if (d.categorical) {
        std::set<std::string> cats;
        for (std::size_t r = 0; r < table.size(); ++r) {
          if (!table.cell(r, c).empty()) cats.insert(table.cell(r, c));
        }
        d.categories.assign(cats.begin(), cats.end());
      }
      d.hierarchy_path = {window_name(src.window), src.group, col.name};
      out.push_back(std::move(d));
    }
  }

  for (const auto& ts : schema.tables) {
    if (!ts.events) continue;
    for (const auto& wname : ts.events->windows) {
      const WindowKind w = parse_window(wname);
      for (const auto& item : ds.items(ts.entity)) {
        for (Aggregation agg : options.aggregations) {
          FeatureDescriptor d;
          d.id = ts.entity + ":" + item + ":" + wname + ":" + aggregation_name(agg);
          d.display_name = item + " (" + detail::display_aggregation(agg) + ")";
          d.kind = FeatureKind::kDynamic;
          d.source_entity = ts.entity;
          d.item_id = item;
          d.aggregation = agg;
          d.window = w;
          d.hierarchy_path = {wname, item, aggregation_name(agg)};
          out.push_back(std::move(d));
        }
      }
    }
  }
  return out;
}

// Records of a dynamic feature for one instance, in time order.
inline RecordSeries feature_series(const FeatureDescriptor& d, const Dataset& ds,
                                   const TargetInstance& inst) {
  if (!d.is_dynamic()) fail(ErrorCode::kInvalidArgument, d.id + " is not a dynamic feature");
  return ds.get_series(inst.patient_id, *d.item_id, inst.window(d.window), d.source_entity);
}

// Hours since window start for each point. A window without a finite start
// (no admission) measures from the first point.
inline std::vector<double> series_hours(const RecordSeries& s) {
  std::vector<double> hours;
  hours.reserve(s.size());
  Timestamp origin = s.window.start;
  if (origin.seconds == std::numeric_limits<std::int64_t>::min() && !s.empty()) {
    origin = s.points.front().timestamp;
  }
  for (const auto& p : s.points) hours.push_back(hours_between(origin, p.timestamp));
  return hours;
}

inline std::vector<double> series_values(const RecordSeries& s) {
  std::vector<double> values;
  values.reserve(s.size());
  for (const auto& p : s.points) values.push_back(p.value);
  return values;
}

namespace detail {

inline std::optional<std::size_t> static_row(const FeatureDescriptor& d, const Dataset& ds,
                                             const TargetInstance& inst) {
  const Schema& schema = ds.schema();
  if (d.source_entity == schema.target.entity) return inst.target_row;
  if (d.source_entity == schema.admission.entity) return inst.admission_row;
  if (d.source_entity == kPatientsEntity) return ds.table(kPatientsEntity).find(inst.patient_id);
  fail(ErrorCode::kInvalidArgument, "static feature source " + d.source_entity + " not on target path");
}

}  // namespace detail

inline FeatureValue compute_feature(const FeatureDescriptor& d, const Dataset& ds,
                                    const TargetInstance& inst) {
  if (d.is_dynamic()) {
    const RecordSeries s = feature_series(d, ds, inst);
    const auto hours = series_hours(s);
    const auto values = series_values(s);
    if (auto v = aggregate(*d.aggregation, hours, values)) return *v;
    return std::monostate{};
  }
  const auto row = detail::static_row(d, ds, inst);
  if (!row) return std::monostate{};
  const Table& t = ds.table(d.source_entity);
  const std::size_t c = t.schema().require_column(d.column);
  const std::string& cell = t.cell(*row, c);
  if (cell.empty()) return std::monostate{};
  if (d.categorical) return cell;
  return *t.number(*row, c);
}

// Exactly the records compute_feature aggregates, in time order.
inline std::vector<RecordRef> resolve_lineage(const FeatureDescriptor& d, const Dataset& ds,
                                              const TargetInstance& inst) {
  std::vector<RecordRef> refs;
  if (d.is_dynamic()) {
    for (const auto& p : feature_series(d, ds, inst).points) {
      refs.push_back(ds.events()[p.event].source);
    }
    return refs;
  }
  if (const auto row = detail::static_row(d, ds, inst)) {
    refs.push_back({d.source_entity, *row, d.column});
  }
  return refs;
}

// Descriptor list with id lookup.
class FeatureSet {
 public:
  FeatureSet() = default;
  explicit FeatureSet(std::vector<FeatureDescriptor> descriptors)
      : descriptors_(std::move(descriptors)) {
    for (std::size_t i = 0; i < descriptors_.size(); ++i) {
      if (!index_.emplace(descriptors_[i].id, i).second) {
        fail(ErrorCode::kInvalidArgument, "duplicate feature id " + descriptors_[i].id);
      }
    }
  }

  const std::vector<FeatureDescriptor>& descriptors() const { return descriptors_; }
  std::size_t size() const { return descriptors_.size(); }
  const FeatureDescriptor& operator[](std::size_t i) const { return descriptors_[i]; }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const FeatureDescriptor& get(const std::string& id) const {
    auto idx = index_of(id);
    if (!idx) fail(ErrorCode::kNotFound, "unknown feature id " + id);
    return descriptors_[*idx];
  }

 private:
  std::vector<FeatureDescriptor> descriptors_;
  std::map<std::string, std::size_t> index_;
};

// One model input column. Categorical descriptors expand to one 0/1 column
// per category.
struct MatrixColumn {
  std::string id;
  std::size_t descriptor = 0;
  std::optional<std::string> category;
};

struct FeatureMatrix {
  std::vector<std::string> row_ids;      // target instance ids
  std::vector<std::string> patient_ids;  // parallel to row_ids
  std::vector<MatrixColumn> columns;
  std::vector<double> values;           // row-major, NaN where missing
  std::vector<std::uint8_t> missing;    // row-major mask

  std::size_t rows() const { return row_ids.size(); }
  std::size_t cols() const { return columns.size(); }

  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  bool is_missing(std::size_t r, std::size_t c) const { return missing[r * cols() + c] != 0; }

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols(), cols()};
  }

  std::vector<std::string> column_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : columns) ids.push_back(c.id);
    return ids;
  }

  std::optional<std::size_t> column_index(const std::string& id) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c].id == id) return c;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> row_index(const std::string& id) const {
    auto it = std::find(row_ids.begin(), row_ids.end(), id);
    if (it == row_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - row_ids.begin());
  }
};

inline std::vector<MatrixColumn> expand_columns(const FeatureSet& features) {
  std::vector<MatrixColumn> cols;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureDescriptor& d = features[i];
    if (d.categorical) {
      for (const auto& cat : d.categories) cols.push_back({d.id + "=" + cat, i, cat});
    } else {
      cols.push_back({d.id, i, std::nullopt});
    }
  }
  return cols;
}

// Encodes one instance into matrix columns.
inline std::vector<double> encode_instance(const FeatureSet& features,
                                           const std::vector<MatrixColumn>& columns,
                                           const Dataset& ds, const TargetInstance& inst) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  std::vector<FeatureValue> values(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    values[i] = compute_feature(features[i], ds, inst);
  }
  std::vector<double> row(columns.size(), kNaN);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const FeatureValue& v = values[columns[c].descriptor];
    if (is_missing(v)) continue;
    if (columns[c].category) {
      row[c] = std::get<std::string>(v) == *columns[c].category ? 1.0 : 0.0;
    } else {
      row[c] = std::get<double>(v);
    }
  }
  return row;
}

// One row per target instance in table order.
inline FeatureMatrix build_matrix(const Dataset& ds, const FeatureSet& features) {
  if (features.size() == 0) fail(ErrorCode::kInvalidArgument, "no feature descriptors");
  FeatureMatrix m;
  m.columns = expand_columns(features);
  const Table& target = ds.table(ds.schema().target.entity);
  m.values.reserve(target.size() * m.cols());
  for (std::size_t r = 0; r < target.size(); ++r) {
    const TargetInstance inst = resolve_instance(ds, r);
    m.row_ids.push_back(inst.id);
    m.patient_ids.push_back(inst.patient_id);
    for (double v : encode_instance(features, m.columns, ds, inst)) {
      m.values.push_back(v);
      m.missing.push_back(std::isnan(v) ? 1 : 0);
    }
  }
  return m;
}

// Label vector (0/1) for one complication code, aligned with matrix rows.
inline std::vector<int> target_labels(const Dataset& ds, const std::string& label) {
  const Schema& schema = ds.schema();
  auto it = schema.target.labels.find(label);
  if (it == schema.target.labels.end()) fail(ErrorCode::kInvalidArgument, "unknown target " + label);
  const Table& t = ds.table(schema.target.entity);
  const std::size_t c = t.schema().require_column(it->second);
  std::vector<int> y;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto v = t.number(r, c);
    y.push_back(v && *v != 0.0 ? 1 : 0);
  }
  return y;
}

inline nlohmann::json descriptor_to_json(const FeatureDescriptor& d) {
  nlohmann::json j = {{"feature_id", d.id},
                      {"display_name", d.display_name},
                      {"kind", d.is_dynamic() ? "dynamic" : "static"},
                      {"source_entity", d.source_entity},
                      {"window", window_name(d.window)},
                      {"hierarchy_path", d.hierarchy_path},
                      {"value_type", d.categorical ? "categorical" : "numeric"}};
  const LineageQuery q = d.lineage();
  j["lineage"] = {{"entity", q.entity}, {"window", window_name(q.window)}};
  if (d.is_dynamic()) {
    j["item_id"] = *d.item_id;
    j["aggregation"] = aggregation_name(*d.aggregation);
    j["lineage"]["item"] = q.item_or_column;
  } else {
    j["column"] = d.column;
    j["lineage"]["column"] = q.item_or_column;
  }
  if (d.categorical) j["categories"] = d.categories;
  return j;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// CSV with a leading row-id column, then one column per matrix column; missing
// cells are empty.
inline void write_matrix_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  std::vector<std::string> header = {"row_id"};
  for (const auto& c : m.columns) header.push_back(c.id);
  csv::write_row(out, header);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<std::string> cells = {m.row_ids[r]};
    for (std::size_t c = 0; c < m.cols(); ++c) {
      cells.push_back(m.is_missing(r, c) ? std::string() : format_double(m.at(r, c)));
    }
    csv::write_row(out, cells);
  }
}

inline void write_descriptors_json(const FeatureSet& features, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : features.descriptors()) j.push_back(descriptor_to_json(d));
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ehrx
