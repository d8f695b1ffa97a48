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
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "ehrx/reference.hpp"
#include "json.hpp"

namespace ehrx {

struct NumericPredicate {
  std::string entity;
  std::string column;
  double low = 0.0;
  double high = 0.0;
};

struct CategoricalPredicate {
  std::string entity;
  std::string column;
  std::vector<std::string> values;
};

// Conjunction of attribute predicates; empty selects every instance.
struct CohortSelector {
  std::vector<NumericPredicate> numeric;
  std::vector<CategoricalPredicate> categorical;

  // Order-insensitive canonical form.
  nlohmann::json canonical() const {
    std::vector<nlohmann::json> num, cat;
    for (const auto& p : numeric) {
      num.push_back({{"entity", p.entity}, {"column", p.column}, {"low", p.low}, {"high", p.high}});
    }
    for (const auto& p : categorical) {
      std::vector<std::string> v = p.values;
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      cat.push_back({{"entity", p.entity}, {"column", p.column}, {"values", v}});
    }
    auto by_dump = [](const auto& a, const auto& b) { return a.dump() < b.dump(); };
    std::sort(num.begin(), num.end(), by_dump);
    std::sort(cat.begin(), cat.end(), by_dump);
    return {{"numeric", num}, {"categorical", cat}};
  }

  // Stable across runs and platforms (FNV-1a 64 of the canonical form).
  std::string id() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical().dump()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "c%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

inline CohortSelector selector_from_json(const nlohmann::json& j) {
  CohortSelector s;
  try {
    for (const auto& p : j.value("numeric", nlohmann::json::array())) {
      s.numeric.push_back({p.value("entity", std::string(kPatientsEntity)),
                           p.at("column").get<std::string>(), p.at("low").get<double>(),
                           p.at("high").get<double>()});
    }
    for (const auto& p : j.value("categorical", nlohmann::json::array())) {
      s.categorical.push_back({p.value("entity", std::string(kPatientsEntity)),
                               p.at("column").get<std::string>(),
                               p.at("values").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed selector: ") + e.what());
  }
  return s;
}

struct Cohort {
  std::string id;
  CohortSelector selector;
  std::vector<std::size_t> rows;  // target-table rows (== matrix rows)
  std::vector<std::string> instance_ids;
  std::vector<std::string> patient_ids;  // distinct, first-seen order

  std::size_t size() const { return rows.size(); }
};

namespace detail {

inline std::optional<std::size_t> row_on_path(const Dataset& ds, const std::string& entity,
                                              const TargetInstance& inst) {
  const Schema& schema = ds.schema();
  if (entity == schema.target.entity) return inst.target_row;
  if (entity == schema.admission.entity) return inst.admission_row;
  if (entity == kPatientsEntity) return ds.table(kPatientsEntity).find(inst.patient_id);
  fail(ErrorCode::kInvalidArgument, "selector entity " + entity + " not on the patient path");
}

inline void require_kind(const Dataset& ds, const std::string& entity, const std::string& column,
                         ColumnKind kind) {
  if (!ds.has_table(entity)) fail(ErrorCode::kInvalidArgument, "unknown entity " + entity);
  const auto& ts = ds.table(entity).schema();
  const auto c = ts.column_index(column);
  if (!c) fail(ErrorCode::kInvalidArgument, "unknown attribute " + entity + "." + column);
  if (ts.columns[*c].kind != kind) {
    fail(ErrorCode::kInvalidArgument, "attribute " + entity + "." + column + " has the wrong kind");
  }
}

}  // namespace detail

inline Cohort select_cohort(const Dataset& ds, const CohortSelector& selector) {
  for (const auto& p : selector.numeric) {
    detail::require_kind(ds, p.entity, p.column, ColumnKind::kNumeric);
    if (!(p.low <= p.high)) {
      fail(ErrorCode::kInvalidArgument, "contradictory range on " + p.column + ": low > high");
    }
  }
  for (const auto& p : selector.categorical) {
    detail::require_kind(ds, p.entity, p.column, ColumnKind::kCategorical);
  }
  Cohort cohort;
  cohort.id = selector.id();
  cohort.selector = selector;
  std::set<std::string> seen;
  const Table& target = ds.table(ds.schema().target.entity);
  for (std::size_t r = 0; r < target.size(); ++r) {
    const TargetInstance inst = resolve_instance(ds, r);
    bool keep = true;
    for (const auto& p : selector.numeric) {
      const auto row = detail::row_on_path(ds, p.entity, inst);
      const Table& t = ds.table(p.entity);
      const auto v = row ? t.number(*row, t.schema().require_column(p.column)) : std::nullopt;
      if (!v || *v < p.low || *v > p.high) {
        keep = false;
        break;
      }
    }
    for (const auto& p : selector.categorical) {
      if (!keep) break;
      const auto row = detail::row_on_path(ds, p.entity, inst);
      const Table& t = ds.table(p.entity);
      if (!row || std::find(p.values.begin(), p.values.end(),
                            t.cell(*row, t.schema().require_column(p.column))) == p.values.end()) {
        keep = false;
      }
    }
    if (!keep) continue;
    cohort.rows.push_back(r);
    cohort.instance_ids.push_back(inst.id);
    if (seen.insert(inst.patient_id).second) cohort.patient_ids.push_back(inst.patient_id);
  }
  return cohort;
}

struct RiskSplit {
  std::vector<std::size_t> low_rows;   // no complication
  std::vector<std::size_t> high_rows;  // one or more
  std::vector<std::string> low_patients;
  std::vector<std::string> high_patients;
};

// Low risk = no positive label among the target's complication columns.
inline RiskSplit split_risk(const Dataset& ds, const Cohort& cohort) {
  const Schema& schema = ds.schema();
  const Table& target = ds.table(schema.target.entity);
  std::vector<std::size_t> label_cols;
  for (const auto& [code, column] : schema.target.labels) {
    label_cols.push_back(target.schema().require_column(column));
  }
  RiskSplit split;
  std::set<std::string> low_seen, high_seen;
  for (std::size_t i = 0; i < cohort.rows.size(); ++i) {
    const std::size_t r = cohort.rows[i];
    bool any = false;
    for (std::size_t c : label_cols) {
      const auto v = target.number(r, c);
      any = any || (v && *v != 0.0);
    }
    const TargetInstance inst = resolve_instance(ds, r);
    if (any) {
      split.high_rows.push_back(r);
      if (high_seen.insert(inst.patient_id).second) split.high_patients.push_back(inst.patient_id);
    } else {
      split.low_rows.push_back(r);
      if (low_seen.insert(inst.patient_id).second) split.low_patients.push_back(inst.patient_id);
    }
  }
  return split;
}

inline std::vector<double> column_values(const FeatureMatrix& m, std::span<const std::size_t> rows,
                                         std::size_t column) {
  std::vector<double> out;
  for (std::size_t r : rows) {
    if (!m.is_missing(r, column)) out.push_back(m.at(r, column));
  }
  return out;
}

// Mean +/- 1.96 sample SD over the group's non-missing values.
inline ReferenceRange feature_reference(const FeatureMatrix& m, std::span<const std::size_t> group,
                                        std::size_t column) {
  const auto values = column_values(m, group, column);
  return reference_from_values(values);
}

// Pooled over every event of the item recorded for the group's patients.
inline ReferenceRange record_reference(const Dataset& ds, std::span<const std::string> patients,
                                       const std::string& item_id) {
  std::vector<double> values;
  for (const auto& p : patients) {
    for (const auto& pt : ds.get_series(p, item_id, TimeWindow::all()).points) {
      values.push_back(pt.value);
    }
  }
  return reference_from_values(values);
}

struct Distribution {
  bool categorical = false;
  std::vector<double> edges;            // numeric: bins + 1 shared edges
  std::vector<std::string> categories;  // categorical
  std::vector<std::size_t> low_counts;
  std::vector<std::size_t> high_counts;
  std::optional<double> target_value;
  std::optional<std::string> target_category;
  std::optional<std::size_t> target_bin;
};

// Equal-width bins shared by both groups; the range spans both groups and the
// target value. The last bin is closed.
inline Distribution numeric_distribution(std::span<const double> low, std::span<const double> high,
                                         std::optional<double> target, std::size_t bins = 20) {
  if (bins == 0) fail(ErrorCode::kInvalidArgument, "bins must be positive");
  Distribution d;
  d.target_value = target;
  double lo = INFINITY, hi = -INFINITY;
  for (auto span : {low, high}) {
    for (double v : span) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (target) {
    lo = std::min(lo, *target);
    hi = std::max(hi, *target);
  }
  d.low_counts.assign(bins, 0);
  d.high_counts.assign(bins, 0);
  if (!std::isfinite(lo)) return d;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) d.edges.push_back(lo + width * static_cast<double>(b));
  d.edges.back() = hi;
  auto bin_of = [&](double v) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    return std::min(b, bins - 1);
  };
  for (double v : low) ++d.low_counts[bin_of(v)];
  for (double v : high) ++d.high_counts[bin_of(v)];
  if (target) d.target_bin = bin_of(*target);
  return d;
}

inline Distribution categorical_distribution(std::span<const std::string> low,
                                             std::span<const std::string> high,
                                             std::vector<std::string> categories,
                                             std::optional<std::string> target) {
  Distribution d;
  d.categorical = true;
  d.target_category = target;
  std::sort(categories.begin(), categories.end());
  d.categories = categories;
  d.low_counts.assign(categories.size(), 0);
  d.high_counts.assign(categories.size(), 0);
  auto index = [&](const std::string& v) -> std::optional<std::size_t> {
    auto it = std::lower_bound(categories.begin(), categories.end(), v);
    if (it == categories.end() || *it != v) return std::nullopt;
    return static_cast<std::size_t>(it - categories.begin());
  };
  for (const auto& v : low) {
    if (auto i = index(v)) ++d.low_counts[*i];
  }
  for (const auto& v : high) {
    if (auto i = index(v)) ++d.high_counts[*i];
  }
  if (target) d.target_bin = index(*target);
  return d;
}

inline nlohmann::json distribution_to_json(const Distribution& d) {
  nlohmann::json j = {{"type", d.categorical ? "categorical" : "numeric"},
                      {"low_counts", d.low_counts},
                      {"high_counts", d.high_counts}};
  if (d.categorical) {
    j["categories"] = d.categories;
    j["target"] = d.target_category ? nlohmann::json(*d.target_category) : nlohmann::json();
  } else {
    j["edges"] = d.edges;
    j["target"] = d.target_value ? nlohmann::json(*d.target_value) : nlohmann::json();
  }
  j["target_bin"] = d.target_bin ? nlohmann::json(*d.target_bin) : nlohmann::json();
  return j;
}

struct TimelineCell {
  Timestamp start;
  Timestamp end;  // exclusive, except the final cell which closes the window
  std::size_t event_count = 0;
  std::size_t abnormal_count = 0;

  double abnormal_fraction() const {
    return event_count == 0 ? 0.0
                            : static_cast<double>(abnormal_count) / static_cast<double>(event_count);
  }
};

struct TimelineRow {
  std::string source;
  std::vector<TimelineCell> cells;
};

struct Timeline {
  TimeWindow window;
  std::int64_t interval_seconds = 0;
  std::vector<TimelineRow> rows;
};

inline constexpr std::int64_t kTimelineIntervalsHours[] = {1, 4, 8};

// The admission window of the patient's first admission (by admit time).
inline TimeWindow admission_window(const Dataset& ds, const std::string& patient_id) {
  const Schema& schema = ds.schema();
  if (!ds.has_patient(patient_id)) fail(ErrorCode::kNotFound, "unknown patient id " + patient_id);
  const Table& adm = ds.table(schema.admission.entity);
  const auto pcol = adm.schema().foreign_key_column(kPatientsEntity);
  if (!pcol) fail(ErrorCode::kInvalidArgument, "admissions carry no patient reference");
  const std::size_t pc = adm.schema().require_column(*pcol);
  const std::size_t sc = adm.schema().require_column(schema.admission.start_column);
  const std::size_t ec = adm.schema().require_column(schema.admission.end_column);
  std::optional<TimeWindow> best;
  for (std::size_t r = 0; r < adm.size(); ++r) {
    if (adm.cell(r, pc) != patient_id) continue;
    TimeWindow w{*adm.timestamp(r, sc), *adm.timestamp(r, ec)};
    if (!best || w.start < best->start) best = w;
  }
  if (!best) fail(ErrorCode::kNotFound, "patient " + patient_id + " has no admission");
  return *best;
}

// Equal cells of interval_hours tiling the admission window from its start.
// Events are classified against their item's reference; items without one
// count as normal.
inline Timeline timeline_summary(const Dataset& ds, const std::string& patient_id,
                                 std::span<const std::string> sources, std::int64_t interval_hours,
                                 const std::map<std::string, ReferenceRange>& references) {
  if (std::find(std::begin(kTimelineIntervalsHours), std::end(kTimelineIntervalsHours),
                interval_hours) == std::end(kTimelineIntervalsHours)) {
    fail(ErrorCode::kInvalidArgument, "interval must be one of 1h, 4h, 8h");
  }
  Timeline tl;
  tl.window = admission_window(ds, patient_id);
  tl.interval_seconds = interval_hours * kSecondsPerHour;
  const std::int64_t span = tl.window.end.seconds - tl.window.start.seconds;
  const std::size_t n_cells =
      static_cast<std::size_t>(std::max<std::int64_t>(1, (span + tl.interval_seconds - 1) / tl.interval_seconds));
  for (const auto& source : sources) {
    TimelineRow row{source, {}};
    for (std::size_t c = 0; c < n_cells; ++c) {
      const std::int64_t s = tl.window.start.seconds + static_cast<std::int64_t>(c) * tl.interval_seconds;
      row.cells.push_back({{s}, {std::min(s + tl.interval_seconds, tl.window.end.seconds)}, 0, 0});
    }
    for (const auto& item : ds.items(source)) {
      const auto it = references.find(item);
      for (const auto& p : ds.get_series(patient_id, item, tl.window, source).points) {
        const auto offset = p.timestamp.seconds - tl.window.start.seconds;
        const std::size_t c = std::min<std::size_t>(static_cast<std::size_t>(offset / tl.interval_seconds), n_cells - 1);
        ++row.cells[c].event_count;
        if (it != references.end() && flag(p.value, it->second).flag != Flag::kWithin) {
          ++row.cells[c].abnormal_count;
        }
      }
    }
    tl.rows.push_back(std::move(row));
  }
  return tl;
}

inline nlohmann::json timeline_to_json(const Timeline& tl) {
  nlohmann::json j = {{"start", format_timestamp(tl.window.start)},
                      {"end", format_timestamp(tl.window.end)},
                      {"interval_hours", tl.interval_seconds / kSecondsPerHour},
                      {"rows", nlohmann::json::array()}};
  for (const auto& row : tl.rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : row.cells) {
      cells.push_back({{"start", format_timestamp(c.start)},
                       {"end", format_timestamp(c.end)},
                       {"count", c.event_count},
                       {"abnormal_fraction", c.abnormal_fraction()}});
    }
    j["rows"].push_back({{"source", row.source}, {"cells", cells}});
  }
  return j;
}

// A selected cohort together with its risk split.
struct CohortEntry {
  Cohort cohort;
  RiskSplit split;
};

// Concurrent-read, exclusive-insert map keyed by selector id.
class CohortCache {
 public:
  std::shared_ptr<const CohortEntry> get_or_select(const Dataset& ds, const CohortSelector& selector) {
    const std::string id = selector.id();
    if (auto hit = find(id)) return hit;
    auto entry = std::make_shared<CohortEntry>();
    entry->cohort = select_cohort(ds, selector);
    entry->split = split_risk(ds, entry->cohort);
    std::unique_lock lock(mutex_);
    auto [it, inserted] = entries_.emplace(id, std::move(entry));
    return it->second;
  }

  std::shared_ptr<const CohortEntry> find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return nullptr;
    return it->second;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const CohortEntry>> entries_;
};

}  // namespace ehrx
