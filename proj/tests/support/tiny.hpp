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

// Hand-built datasets over the default schema.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ehrx/ehr_store.hpp"
#include "ehrx/features.hpp"
#include "ehrx/schema.hpp"

namespace tiny {

inline std::string num(double v) { return ehrx::format_double(v); }

class Builder {
 public:
  Builder() : schema_(ehrx::default_schema()) {
    for (const auto& t : schema_.tables) {
      ehrx::TableData d;
      for (const auto& c : t.columns) d.header.push_back(c.name);
      tables_[t.entity] = d;
    }
  }

  Builder& patient(const std::string& id, const std::string& gender, double age_days,
                   double weight = 10, double height = 80) {
    add("patients", {id, gender, num(age_days), num(weight), num(height)});
    return *this;
  }

  Builder& admission(const std::string& id, const std::string& pid, const std::string& admit,
                     const std::string& discharge, const std::string& diagnosis = "VSD") {
    add("admissions", {id, pid, admit, discharge, diagnosis});
    return *this;
  }

  // labels in L, C, A, I, O order
  Builder& surgery(const std::string& id, const std::string& adm, const std::string& pid,
                   const std::string& start, const std::string& end, double duration, double cpb,
                   const std::string& procedure, std::array<int, 5> labels = {}) {
    std::vector<std::string> row = {id, adm, pid, start, end, num(duration), num(cpb), procedure};
    for (int l : labels) row.push_back(std::to_string(l));
    add("surgeries", row);
    return *this;
  }

  Builder& lab(const std::string& pid, const std::string& adm, const std::string& item,
               const std::string& time, double value) {
    add("labtests", {"L" + std::to_string(++events_), pid, adm, item, time, num(value), "u"});
    return *this;
  }

  Builder& chart(const std::string& pid, const std::string& adm, const std::string& item,
                 const std::string& time, double value) {
    add("chartevents", {"C" + std::to_string(++events_), pid, adm, item, time, num(value), "u"});
    return *this;
  }

  Builder& vital(const std::string& pid, const std::string& adm, const std::string& sid,
                 const std::string& item, const std::string& time, double value) {
    add("vitalsigns",
        {"V" + std::to_string(++events_), pid, adm, sid, item, time, num(value), "u"});
    return *this;
  }

  std::map<std::string, ehrx::TableData>& tables() { return tables_; }
  const ehrx::Schema& schema() const { return schema_; }
  ehrx::Dataset build() const { return ehrx::Dataset::build(schema_, tables_); }

 private:
  void add(const std::string& entity, std::vector<std::string> row) {
    auto& t = tables_.at(entity);
    t.rows.push_back(std::move(row));
    t.lines.push_back(t.rows.size() + 1);
  }

  ehrx::Schema schema_;
  std::map<std::string, ehrx::TableData> tables_;
  int events_ = 0;
};

// Two patients, one surgery each, a few labs and vitals.
inline Builder two_patients() {
  Builder b;
  b.patient("P1", "F", 120, 5.1, 60)
      .patient("P2", "M", 400, 9.0, 75)
      .admission("A1", "P1", "2020-01-01T08:00:00Z", "2020-01-10T08:00:00Z")
      .admission("A2", "P2", "2020-02-01T08:00:00Z", "2020-02-05T08:00:00Z", "ASD")
      .surgery("S1", "A1", "P1", "2020-01-02T10:00:00Z", "2020-01-02T12:00:00Z", 120, 60, "VSD repair",
               {0, 1, 0, 0, 0})
      .surgery("S2", "A2", "P2", "2020-02-02T09:00:00Z", "2020-02-02T10:00:00Z", 60, 0, "ASD repair")
      .lab("P1", "A1", "Lactate", "2020-01-01T09:00:00Z", 1.5)
      .lab("P1", "A1", "Lactate", "2020-01-02T09:59:59Z", 2.5)
      .lab("P1", "A1", "Lactate", "2020-01-02T10:30:00Z", 9.0)  // during surgery: not pre-surgery
      .lab("P2", "A2", "Lactate", "2020-02-01T09:00:00Z", 1.0)
      .vital("P1", "A1", "S1", "Pulse", "2020-01-02T10:00:00Z", 120)
      .vital("P1", "A1", "S1", "Pulse", "2020-01-02T11:00:00Z", 130)
      .vital("P1", "A1", "S1", "Pulse", "2020-01-02T12:00:00Z", 140)
      .vital("P1", "A1", "S1", "Pulse", "2020-01-02T12:00:01Z", 999)  // after end
      .vital("P2", "A2", "S2", "Pulse", "2020-02-02T09:30:00Z", 100)
      .vital("P2", "A2", "S2", "SpO2", "2020-02-02T09:30:00Z", 97);
  return b;
}

}  // namespace tiny
