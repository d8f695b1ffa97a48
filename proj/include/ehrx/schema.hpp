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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ehrx/error.hpp"
#include "json.hpp"

namespace ehrx {

enum class ColumnKind { kIdentifier, kCategorical, kNumeric, kTimestamp, kText };

NLOHMANN_JSON_SERIALIZE_ENUM(ColumnKind, {
                                             {ColumnKind::kIdentifier, "identifier"},
                                             {ColumnKind::kCategorical, "categorical"},
                                             {ColumnKind::kNumeric, "numeric"},
                                             {ColumnKind::kTimestamp, "timestamp"},
                                             {ColumnKind::kText, "text"},
                                         })

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kText;
};

struct ForeignKey {
  std::string column;
  std::string entity;
};

// Marks a table as a stream of timestamped measurements.
struct EventRoles {
  std::string item_column;
  std::string time_column;
  std::string value_column;
  std::string unit_column;
  // Symbolic windows ("pre-surgery", "in-surgery") features are built over.
  std::vector<std::string> windows;
};

struct TableSchema {
  std::string entity;
  std::string file;
  std::vector<ColumnSpec> columns;
  std::string primary_key;
  std::vector<ForeignKey> foreign_keys;
  std::optional<EventRoles> events;

  std::optional<std::size_t> column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require_column(const std::string& name) const {
    auto idx = column_index(name);
    if (!idx) {
      fail(ErrorCode::kInvalidArgument,
           "table " + entity + " has no column " + name);
    }
    return *idx;
  }

  std::optional<std::string> foreign_key_column(const std::string& target) const {
    for (const auto& fk : foreign_keys) {
      if (fk.entity == target) return fk.column;
    }
    return std::nullopt;
  }
};

// The prediction target (one row per instance) and its complication labels.
struct TargetSpec {
  std::string entity = "surgeries";
  std::string start_column = "start_time";
  std::string end_column = "end_time";
  // label code (L, C, A, I, O) -> 0/1 column on the target table
  std::map<std::string, std::string> labels;
};

struct AdmissionSpec {
  std::string entity = "admissions";
  std::string start_column = "admit_time";
  std::string end_column = "discharge_time";
};

inline const std::vector<std::string>& complication_labels() {
  static const std::vector<std::string> kLabels = {"L", "C", "A", "I", "O"};
  return kLabels;
}

inline constexpr const char* kPatientsEntity = "patients";

struct Schema {
  std::vector<TableSchema> tables;
  TargetSpec target;
  AdmissionSpec admission;

  const TableSchema* find(const std::string& entity) const {
    for (const auto& t : tables) {
      if (t.entity == entity) return &t;
    }
    return nullptr;
  }

  bool is_label_column(const std::string& entity, const std::string& column) const {
    if (entity != target.entity) return false;
    return std::any_of(target.labels.begin(), target.labels.end(),
                       [&](const auto& kv) { return kv.second == column; });
  }

  // Checks the structural invariants: unique column names, identifier primary
  // keys, resolvable foreign keys, declared event roles.
  void validate() const {
    std::set<std::string> entities;
    for (const auto& t : tables) {
      if (!entities.insert(t.entity).second) {
        fail(ErrorCode::kInvalidArgument, "duplicate entity " + t.entity);
      }
    }
    for (const auto& t : tables) {
      std::set<std::string> names;
      for (const auto& c : t.columns) {
        if (!names.insert(c.name).second) {
          fail(ErrorCode::kInvalidArgument,
               "duplicate column " + c.name + " in " + t.entity);
        }
      }
      auto pk = t.column_index(t.primary_key);
      if (!pk || t.columns[*pk].kind != ColumnKind::kIdentifier) {
        fail(ErrorCode::kInvalidArgument,
             "primary key " + t.primary_key + " of " + t.entity +
                 " must be a declared identifier column");
      }
      for (const auto& fk : t.foreign_keys) {
        if (!t.column_index(fk.column)) {
          fail(ErrorCode::kInvalidArgument,
               "foreign key column " + fk.column + " missing in " + t.entity);
        }
        if (!entities.count(fk.entity)) {
          fail(ErrorCode::kInvalidArgument, "foreign key " + t.entity + "." +
                                                fk.column +
                                                " references undeclared entity " +
                                                fk.entity);
        }
      }
      if (t.events) {
        for (const auto* col : {&t.events->item_column, &t.events->time_column,
                                &t.events->value_column}) {
          if (!t.column_index(*col)) {
            fail(ErrorCode::kInvalidArgument,
                 "event column " + *col + " missing in " + t.entity);
          }
        }
        if (!t.foreign_key_column(kPatientsEntity)) {
          fail(ErrorCode::kInvalidArgument,
               "event table " + t.entity + " has no foreign key to patients");
        }
        for (const auto& w : t.events->windows) {
          if (w != "pre-surgery" && w != "in-surgery") {
            fail(ErrorCode::kInvalidArgument, "unknown window " + w);
          }
        }
      }
    }
    if (!find(kPatientsEntity)) {
      fail(ErrorCode::kInvalidArgument, "schema declares no patients entity");
    }
    const TableSchema* target_table = find(target.entity);
    if (!target_table) {
      fail(ErrorCode::kInvalidArgument,
           "target entity " + target.entity + " not declared");
    }
    target_table->require_column(target.start_column);
    target_table->require_column(target.end_column);
    for (const auto& [code, column] : target.labels) {
      target_table->require_column(column);
    }
    if (const TableSchema* adm = find(admission.entity)) {
      adm->require_column(admission.start_column);
      adm->require_column(admission.end_column);
    }
  }
};

inline void to_json(nlohmann::json& j, const TableSchema& t) {
  j = nlohmann::json{{"entity", t.entity},
                     {"file", t.file},
                     {"primary_key", t.primary_key},
                     {"columns", nlohmann::json::array()},
                     {"foreign_keys", nlohmann::json::array()}};
  for (const auto& c : t.columns) {
    j["columns"].push_back({{"name", c.name}, {"kind", c.kind}});
  }
  for (const auto& fk : t.foreign_keys) {
    j["foreign_keys"].push_back({{"column", fk.column}, {"entity", fk.entity}});
  }
  if (t.events) {
    j["events"] = {{"item", t.events->item_column},
                   {"time", t.events->time_column},
                   {"value", t.events->value_column},
                   {"unit", t.events->unit_column},
                   {"windows", t.events->windows}};
  }
}

inline void from_json(const nlohmann::json& j, TableSchema& t) {
  t.entity = j.at("entity").get<std::string>();
  t.file = j.value("file", t.entity + ".csv");
  t.primary_key = j.at("primary_key").get<std::string>();
  t.columns.clear();
  for (const auto& c : j.at("columns")) {
    t.columns.push_back({c.at("name").get<std::string>(), c.at("kind").get<ColumnKind>()});
  }
  t.foreign_keys.clear();
  for (const auto& fk : j.value("foreign_keys", nlohmann::json::array())) {
    t.foreign_keys.push_back(
        {fk.at("column").get<std::string>(), fk.at("entity").get<std::string>()});
  }
  t.events.reset();
  if (j.contains("events")) {
    const auto& e = j.at("events");
    t.events = EventRoles{e.at("item").get<std::string>(), e.at("time").get<std::string>(),
                          e.at("value").get<std::string>(), e.value("unit", std::string()),
                          e.value("windows", std::vector<std::string>{})};
  }
}

inline nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json j;
  j["tables"] = s.tables;
  j["target"] = {{"entity", s.target.entity},
                 {"start", s.target.start_column},
                 {"end", s.target.end_column},
                 {"labels", s.target.labels}};
  j["admission"] = {{"entity", s.admission.entity},
                    {"start", s.admission.start_column},
                    {"end", s.admission.end_column}};
  return j;
}

inline Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  try {
    s.tables = j.at("tables").get<std::vector<TableSchema>>();
    if (j.contains("target")) {
      const auto& t = j.at("target");
      s.target.entity = t.value("entity", s.target.entity);
      s.target.start_column = t.value("start", s.target.start_column);
      s.target.end_column = t.value("end", s.target.end_column);
      s.target.labels = t.value("labels", std::map<std::string, std::string>{});
    }
    if (j.contains("admission")) {
      const auto& a = j.at("admission");
      s.admission.entity = a.value("entity", s.admission.entity);
      s.admission.start_column = a.value("start", s.admission.start_column);
      s.admission.end_column = a.value("end", s.admission.end_column);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed schema manifest: ") + e.what());
  }
  return s;
}

// Schema of the six tables the synthetic generator writes. Used
// when a dataset directory carries no schema.json.
inline Schema default_schema() {
  using K = ColumnKind;
  Schema s;
  s.tables.push_back({"patients",
                      "patients.csv",
                      {{"patient_id", K::kIdentifier},
                       {"gender", K::kCategorical},
                       {"age_days", K::kNumeric},
                       {"weight_kg", K::kNumeric},
                       {"height_cm", K::kNumeric}},
                      "patient_id",
                      {},
                      std::nullopt});
  s.tables.push_back({"admissions",
                      "admissions.csv",
                      {{"admission_id", K::kIdentifier},
                       {"patient_id", K::kIdentifier},
                       {"admit_time", K::kTimestamp},
                       {"discharge_time", K::kTimestamp},
                       {"diagnosis", K::kCategorical}},
                      "admission_id",
                      {{"patient_id", "patients"}},
                      std::nullopt});
  s.tables.push_back({"surgeries",
                      "surgeries.csv",
                      {{"surgery_id", K::kIdentifier},
                       {"admission_id", K::kIdentifier},
                       {"patient_id", K::kIdentifier},
                       {"start_time", K::kTimestamp},
                       {"end_time", K::kTimestamp},
                       {"duration_min", K::kNumeric},
                       {"cpb_min", K::kNumeric},
                       {"procedure", K::kCategorical},
                       {"complication_lung", K::kNumeric},
                       {"complication_cardiac", K::kNumeric},
                       {"complication_arrhythmia", K::kNumeric},
                       {"complication_infectious", K::kNumeric},
                       {"complication_other", K::kNumeric}},
                      "surgery_id",
                      {{"admission_id", "admissions"}, {"patient_id", "patients"}},
                      std::nullopt});
  auto event_table = [](std::string entity, std::vector<std::string> windows,
                        bool with_surgery) {
    TableSchema t{entity,
                  entity + ".csv",
                  {{"event_id", K::kIdentifier},
                   {"patient_id", K::kIdentifier},
                   {"admission_id", K::kIdentifier}},
                  "event_id",
                  {{"patient_id", "patients"}, {"admission_id", "admissions"}},
                  EventRoles{"item_id", "charttime", "value", "unit", std::move(windows)}};
    if (with_surgery) {
      t.columns.push_back({"surgery_id", K::kIdentifier});
      t.foreign_keys.push_back({"surgery_id", "surgeries"});
    }
    t.columns.push_back({"item_id", K::kCategorical});
    t.columns.push_back({"charttime", K::kTimestamp});
    t.columns.push_back({"value", K::kNumeric});
    t.columns.push_back({"unit", K::kText});
    return t;
  };
  s.tables.push_back(event_table("labtests", {"pre-surgery"}, false));
  s.tables.push_back(event_table("chartevents", {"pre-surgery"}, false));
  s.tables.push_back(event_table("vitalsigns", {"in-surgery"}, true));
  s.target.labels = {{"L", "complication_lung"},
                     {"C", "complication_cardiac"},
                     {"A", "complication_arrhythmia"},
                     {"I", "complication_infectious"},
                     {"O", "complication_other"}};
  return s;
}

}  // namespace ehrx
