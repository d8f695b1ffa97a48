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
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ehrx/csv.hpp"
#include "ehrx/error.hpp"
#include "ehrx/schema.hpp"
#include "ehrx/timestamp.hpp"

namespace ehrx {

// Closed interval [start, end].
struct TimeWindow {
  Timestamp start;
  Timestamp end;

  bool contains(Timestamp t) const { return start <= t && t <= end; }

  static TimeWindow all() {
    return {{std::numeric_limits<std::int64_t>::min()},
            {std::numeric_limits<std::int64_t>::max()}};
  }
};

// A cell of a loaded table.
struct RecordRef {
  std::string entity;
  std::size_t row = 0;
  std::string column;

  friend bool operator==(const RecordRef&, const RecordRef&) = default;
};

struct RecordEvent {
  std::string patient_id;
  std::string entity;
  std::string item_id;
  Timestamp timestamp;
  double value = 0.0;
  std::string unit;
  RecordRef source;
};

struct SeriesPoint {
  Timestamp timestamp;
  double value = 0.0;
  std::size_t event = 0;  // index into Dataset::events()
};

struct RecordSeries {
  std::string patient_id;
  std::string item_id;
  TimeWindow window;
  std::vector<SeriesPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

namespace detail {

inline std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end != begin + text.size() || errno == ERANGE || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

}  // namespace detail

// Raw string cells of one table as read from disk, in input order.
struct TableData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // source line per row (diagnostics only)
};

class Table {
 public:
  Table() = default;
  Table(TableSchema schema, std::vector<std::vector<std::string>> rows)
      : schema_(std::move(schema)), rows_(std::move(rows)) {}

  const TableSchema& schema() const { return schema_; }
  std::size_t size() const { return rows_.size(); }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  const std::string& cell(std::size_t row, std::size_t column) const {
    return rows_[row][column];
  }
  const std::string& cell(std::size_t row, const std::string& column) const {
    return rows_[row][schema_.require_column(column)];
  }

  std::optional<double> number(std::size_t row, std::size_t column) const {
    return detail::parse_number(rows_[row][column]);
  }
  std::optional<Timestamp> timestamp(std::size_t row, std::size_t column) const {
    return parse_timestamp(rows_[row][column]);
  }

  std::optional<std::size_t> find(const std::string& key) const {
    auto it = pk_index_.find(key);
    if (it == pk_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  friend class Dataset;

  TableSchema schema_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> pk_index_;
};

// Immutable, indexed relational store. Built once, then only read.
class Dataset {
 public:
  // Validates every row against the schema and builds the indices.
  static Dataset build(Schema schema, std::map<std::string, TableData> data) {
    schema.validate();
    Dataset ds;
    ds.schema_ = std::move(schema);

    // Patients first so "missing table: patients" wins over other errors.
    std::vector<const TableSchema*> order;
    for (const auto& t : ds.schema_.tables) {
      if (t.entity == kPatientsEntity) order.insert(order.begin(), &t);
      else order.push_back(&t);
    }
    for (const TableSchema* ts : order) {
      auto it = data.find(ts->entity);
      if (it == data.end()) fail(ErrorCode::kNotFound, "missing table: " + ts->entity);
      ds.load_table(*ts, std::move(it->second));
    }
    for (const TableSchema* ts : order) ds.check_foreign_keys(*ts);
    ds.index_events();
    return ds;
  }

  const Schema& schema() const { return schema_; }

  bool has_table(const std::string& entity) const { return tables_.count(entity) > 0; }

  const Table& table(const std::string& entity) const {
    auto it = tables_.find(entity);
    if (it == tables_.end()) fail(ErrorCode::kNotFound, "no table " + entity);
    return it->second;
  }

  const std::vector<std::string>& patient_ids() const { return patient_ids_; }
  std::size_t patient_count() const { return patient_ids_.size(); }
  bool has_patient(const std::string& id) const {
    return table(kPatientsEntity).find(id).has_value();
  }

  const std::vector<RecordEvent>& events() const { return events_; }

  // Sorted item ids seen in one event table.
  std::vector<std::string> items(const std::string& entity) const {
    auto it = items_.find(entity);
    if (it == items_.end()) return {};
    return it->second;
  }

  // Events of (patient, item) inside the window, ascending by time with ties
  // kept in input order. An empty entity matches every event table.
  RecordSeries get_series(const std::string& patient_id, const std::string& item_id,
                          TimeWindow window, const std::string& entity = "") const {
    if (!has_patient(patient_id)) {
      fail(ErrorCode::kNotFound, "unknown patient id " + patient_id);
    }
    RecordSeries series{patient_id, item_id, window, {}};
    auto pit = series_index_.find(patient_id);
    if (pit == series_index_.end()) return series;
    auto iit = pit->second.find(item_id);
    if (iit == pit->second.end()) return series;
    const std::vector<std::size_t>& idx = iit->second;
    auto lo = std::lower_bound(idx.begin(), idx.end(), window.start,
                               [&](std::size_t e, Timestamp t) {
                                 return events_[e].timestamp < t;
                               });
    auto hi = std::upper_bound(lo, idx.end(), window.end,
                               [&](Timestamp t, std::size_t e) {
                                 return t < events_[e].timestamp;
                               });
    for (auto it = lo; it != hi; ++it) {
      const RecordEvent& ev = events_[*it];
      if (!entity.empty() && ev.entity != entity) continue;
      series.points.push_back({ev.timestamp, ev.value, *it});
    }
    return series;
  }

  // Raw rows per entity, suitable for write_dataset.
  std::map<std::string, TableData> raw_tables() const {
    std::map<std::string, TableData> out;
    for (const auto& [name, t] : tables_) {
      TableData d;
      for (const auto& c : t.schema().columns) d.header.push_back(c.name);
      d.rows = t.rows();
      out.emplace(name, std::move(d));
    }
    return out;
  }

 private:
  void load_table(const TableSchema& ts, TableData data) {
    const std::string source = ts.file.empty() ? ts.entity : ts.file;
    std::vector<std::size_t> column_of(ts.columns.size());
    for (std::size_t c = 0; c < ts.columns.size(); ++c) {
      auto it = std::find(data.header.begin(), data.header.end(), ts.columns[c].name);
      if (it == data.header.end()) {
        fail(ErrorCode::kDataLoss, source + ": missing column " + ts.columns[c].name);
      }
      column_of[c] = static_cast<std::size_t>(it - data.header.begin());
    }
    std::vector<bool> required(ts.columns.size(), false);
    required[*ts.column_index(ts.primary_key)] = true;
    for (const auto& fk : ts.foreign_keys) required[*ts.column_index(fk.column)] = true;
    if (ts.events) {
      required[*ts.column_index(ts.events->item_column)] = true;
      required[*ts.column_index(ts.events->time_column)] = true;
      required[*ts.column_index(ts.events->value_column)] = true;
    }
    if (ts.entity == schema_.target.entity) {
      required[*ts.column_index(schema_.target.start_column)] = true;
      required[*ts.column_index(schema_.target.end_column)] = true;
    }
    if (ts.entity == schema_.admission.entity) {
      required[*ts.column_index(schema_.admission.start_column)] = true;
      required[*ts.column_index(schema_.admission.end_column)] = true;
    }

    Table table;
    table.schema_ = ts;
    table.rows_.reserve(data.rows.size());
    const std::size_t pk = *ts.column_index(ts.primary_key);
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
      const std::size_t line = r < data.lines.size() ? data.lines[r] : r + 2;
      auto where = [&] { return source + ":" + std::to_string(line) + ": "; };
      const auto& raw = data.rows[r];
      if (raw.size() != data.header.size()) {
        fail(ErrorCode::kDataLoss, where() + "wrong number of cells");
      }
      std::vector<std::string> row(ts.columns.size());
      for (std::size_t c = 0; c < ts.columns.size(); ++c) {
        row[c] = raw[column_of[c]];
        const std::string& cell = row[c];
        const ColumnSpec& col = ts.columns[c];
        if (cell.empty()) {
          if (required[c]) fail(ErrorCode::kDataLoss, where() + "empty required cell " + col.name);
          continue;
        }
        if (col.kind == ColumnKind::kNumeric && !detail::parse_number(cell)) {
          fail(ErrorCode::kDataLoss,
               where() + "non-numeric value '" + cell + "' in column " + col.name);
        }
        if (col.kind == ColumnKind::kTimestamp && !parse_timestamp(cell)) {
          fail(ErrorCode::kDataLoss,
               where() + "unparseable timestamp '" + cell + "' in column " + col.name);
        }
      }
      if (!table.pk_index_.emplace(row[pk], table.rows_.size()).second) {
        fail(ErrorCode::kDataLoss, where() + "duplicate primary key " + row[pk]);
      }
      table.rows_.push_back(std::move(row));
      lines_[ts.entity].push_back(line);
    }
    if (ts.entity == kPatientsEntity) {
      for (const auto& row : table.rows_) patient_ids_.push_back(row[pk]);
    }
    tables_.emplace(ts.entity, std::move(table));
  }

  void check_foreign_keys(const TableSchema& ts) const {
    const Table& t = tables_.at(ts.entity);
    for (const auto& fk : ts.foreign_keys) {
      const std::size_t c = *ts.column_index(fk.column);
      const Table& ref = tables_.at(fk.entity);
      for (std::size_t r = 0; r < t.size(); ++r) {
        if (!ref.find(t.cell(r, c))) {
          fail(ErrorCode::kDataLoss,
               (ts.file.empty() ? ts.entity : ts.file) + ":" +
                   std::to_string(lines_.at(ts.entity)[r]) + ": dangling foreign key " +
                   fk.column + "=" + t.cell(r, c) + " (no such " + fk.entity + ")");
        }
      }
    }
  }

  void index_events() {
    for (const auto& ts : schema_.tables) {
      if (!ts.events) continue;
      const Table& t = tables_.at(ts.entity);
      const std::size_t pc = *ts.column_index(*ts.foreign_key_column(kPatientsEntity));
      const std::size_t ic = *ts.column_index(ts.events->item_column);
      const std::size_t tc = *ts.column_index(ts.events->time_column);
      const std::size_t vc = *ts.column_index(ts.events->value_column);
      const auto uc = ts.column_index(ts.events->unit_column);
      std::vector<std::string> items;
      for (std::size_t r = 0; r < t.size(); ++r) {
        RecordEvent ev;
        ev.patient_id = t.cell(r, pc);
        ev.entity = ts.entity;
        ev.item_id = t.cell(r, ic);
        ev.timestamp = *t.timestamp(r, tc);
        ev.value = *t.number(r, vc);
        if (uc) ev.unit = t.cell(r, *uc);
        ev.source = {ts.entity, r, ts.events->value_column};
        items.push_back(ev.item_id);
        series_index_[ev.patient_id][ev.item_id].push_back(events_.size());
        events_.push_back(std::move(ev));
      }
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
      items_[ts.entity] = std::move(items);
    }
    for (auto& [patient, by_item] : series_index_) {
      for (auto& [item, idx] : by_item) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
          return events_[a].timestamp < events_[b].timestamp;
        });
      }
    }
  }

  Schema schema_;
  std::map<std::string, Table> tables_;
  std::map<std::string, std::vector<std::size_t>> lines_;
  std::vector<std::string> patient_ids_;
  std::vector<RecordEvent> events_;
  std::map<std::string, std::vector<std::string>> items_;
  std::unordered_map<std::string, std::unordered_map<std::string, std::vector<std::size_t>>>
      series_index_;
};

inline TableData read_table_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  csv::Document doc = csv::read(in, path.filename().string());
  TableData data;
  data.header = std::move(doc.header);
  for (auto& row : doc.rows) {
    data.lines.push_back(row.line);
    data.rows.push_back(std::move(row.cells));
  }
  return data;
}

// Loads one CSV per declared entity. schema.json is optional; without it the
// built-in default schema is assumed.
inline Dataset load_dataset(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory)) {
    fail(ErrorCode::kNotFound, "not a directory: " + directory.string());
  }
  Schema schema = default_schema();
  const auto manifest = directory / "schema.json";
  if (std::filesystem::exists(manifest)) {
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidArgument, std::string("schema.json: ") + e.what());
    }
    schema = schema_from_json(j);
  }
  std::map<std::string, TableData> data;
  for (const auto& t : schema.tables) {
    const auto path = directory / t.file;
    if (std::filesystem::exists(path)) data.emplace(t.entity, read_table_file(path));
  }
  return Dataset::build(std::move(schema), std::move(data));
}

inline void write_table(const std::filesystem::path& path, const TableData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  csv::write_row(out, data.header);
  for (const auto& row : data.rows) csv::write_row(out, row);
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

inline void write_dataset(const Schema& schema, const std::map<std::string, TableData>& data,
                          const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec || !std::filesystem::is_directory(directory)) {
    fail(ErrorCode::kIo, "cannot create directory " + directory.string());
  }
  {
    std::ofstream out(directory / "schema.json", std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + (directory / "schema.json").string());
    out << schema_to_json(schema).dump(2) << '\n';
  }
  for (const auto& t : schema.tables) {
    auto it = data.find(t.entity);
    if (it == data.end()) fail(ErrorCode::kInvalidArgument, "no data for " + t.entity);
    write_table(directory / t.file, it->second);
  }
}

inline void write_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  write_dataset(dataset.schema(), dataset.raw_tables(), directory);
}

}  // namespace ehrx
