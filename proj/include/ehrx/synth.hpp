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
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "ehrx/schema.hpp"
#include "ehrx/timestamp.hpp"
#include "json.hpp"

namespace ehrx::synth {

struct PlantedEffect {
  std::string label;    // complication code
  std::string feature;  // feature id, e.g. "vitalsigns:Pulse:in-surgery:MEAN"
  double weight = 0.0;  // per standardized unit of the feature
};

inline std::vector<PlantedEffect> default_planted_effects() {
  return {
      {"L", "vitalsigns:SpO2:in-surgery:MEAN", -2.2},
      {"L", "labtests:Lactate:pre-surgery:MEAN", 1.6},
      {"L", "patients:age_days", -1.0},
      {"C", "vitalsigns:Pulse:in-surgery:MEAN", 2.4},
      {"C", "surgeries:duration_min", 1.6},
      {"C", "patients:age_days", -1.2},
      {"A", "vitalsigns:Pulse:in-surgery:SD", 2.0},
      {"A", "vitalsigns:SBP:in-surgery:MIN", -1.6},
      {"I", "labtests:Lactate:pre-surgery:MEAN", 2.0},
      {"I", "chartevents:Temperature:pre-surgery:MEAN", 1.8},
      {"O", "surgeries:duration_min", 2.0},
      {"O", "vitalsigns:SBP:in-surgery:MEAN", -1.6},
  };
}

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_patients = 100;
  std::map<std::string, double> target_prevalence = {
      {"L", 0.25}, {"C", 0.25}, {"A", 0.25}, {"I", 0.25}, {"O", 0.25}};
  std::vector<PlantedEffect> planted_effects = default_planted_effects();
  double anomaly_rate = 0.2;
  std::size_t series_min = 60;
  std::size_t series_max = 180;

  void validate() const {
    for (const auto& code : complication_labels()) {
      auto it = target_prevalence.find(code);
      if (it == target_prevalence.end()) {
        fail(ErrorCode::kInvalidArgument, "missing prevalence for label " + code);
      }
      if (!(it->second > 0.0 && it->second < 1.0)) {
        fail(ErrorCode::kInvalidArgument, "prevalence of " + code + " must lie in (0, 1)");
      }
    }
    for (const auto& e : planted_effects) {
      if (!target_prevalence.count(e.label)) {
        fail(ErrorCode::kInvalidArgument, "planted effect on unknown label " + e.label);
      }
      if (!std::isfinite(e.weight)) fail(ErrorCode::kInvalidArgument, "non-finite effect weight");
    }
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "anomaly_rate must lie in [0, 1]");
    }
    if (series_min < 30 || series_max < series_min) {
      fail(ErrorCode::kInvalidArgument, "series_length_range must satisfy 30 <= min <= max");
    }
  }
};

inline SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("n_patients")) {
      const auto n = j.at("n_patients").get<long long>();
      if (n < 0) fail(ErrorCode::kInvalidArgument, "n_patients must be >= 0");
      c.n_patients = static_cast<std::size_t>(n);
    }
    if (j.contains("target_prevalence")) {
      const auto& p = j.at("target_prevalence");
      if (p.is_number()) {
        for (const auto& code : complication_labels()) c.target_prevalence[code] = p.get<double>();
      } else {
        for (const auto& [code, v] : p.items()) c.target_prevalence[code] = v.get<double>();
      }
    }
    if (j.contains("planted_effects")) {
      c.planted_effects.clear();
      for (const auto& e : j.at("planted_effects")) {
        c.planted_effects.push_back({e.at("label").get<std::string>(),
                                     e.at("feature").get<std::string>(),
                                     e.at("weight").get<double>()});
      }
    }
    c.anomaly_rate = j.value("anomaly_rate", c.anomaly_rate);
    if (j.contains("series_length_range")) {
      const auto r = j.at("series_length_range").get<std::vector<long long>>();
      if (r.size() != 2 || r[0] < 0 || r[1] < 0) {
        fail(ErrorCode::kInvalidArgument, "series_length_range must be [min, max]");
      }
      c.series_min = static_cast<std::size_t>(r[0]);
      c.series_max = static_cast<std::size_t>(r[1]);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const SynthConfig& c) {
  nlohmann::json effects = nlohmann::json::array();
  for (const auto& e : c.planted_effects) {
    effects.push_back({{"label", e.label}, {"feature", e.feature}, {"weight", e.weight}});
  }
  return {{"seed", c.seed},
          {"n_patients", c.n_patients},
          {"target_prevalence", c.target_prevalence},
          {"planted_effects", effects},
          {"anomaly_rate", c.anomaly_rate},
          {"series_length_range", {c.series_min, c.series_max}}};
}

// One planted out-of-range vital-sign segment; indices are inclusive
// positions in the patient's in-surgery series of that item.
struct PlantedAnomaly {
  std::string patient_id;
  std::string surgery_id;
  std::string item_id;
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  Timestamp start_ts;
  Timestamp end_ts;
  std::string direction;
  double amplitude = 0.0;
};

struct GenerationReport {
  std::map<std::string, std::size_t> table_rows;
  std::map<std::string, double> prevalence;
  double any_complication = 0.0;
  std::vector<PlantedAnomaly> anomalies;
};

inline nlohmann::json anomalies_to_json(const std::vector<PlantedAnomaly>& anomalies) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : anomalies) {
    j.push_back({{"patient_id", a.patient_id},
                 {"surgery_id", a.surgery_id},
                 {"item_id", a.item_id},
                 {"start_index", a.start_index},
                 {"end_index", a.end_index},
                 {"start_ts", format_timestamp(a.start_ts)},
                 {"end_ts", format_timestamp(a.end_ts)},
                 {"direction", a.direction},
                 {"amplitude", a.amplitude}});
  }
  return j;
}

inline std::vector<PlantedAnomaly> anomalies_from_json(const nlohmann::json& j) {
  std::vector<PlantedAnomaly> out;
  for (const auto& a : j) {
    out.push_back({a.at("patient_id").get<std::string>(), a.at("surgery_id").get<std::string>(),
                   a.at("item_id").get<std::string>(), a.at("start_index").get<std::size_t>(),
                   a.at("end_index").get<std::size_t>(),
                   *parse_timestamp(a.at("start_ts").get<std::string>()),
                   *parse_timestamp(a.at("end_ts").get<std::string>()),
                   a.at("direction").get<std::string>(), a.at("amplitude").get<double>()});
  }
  return out;
}

inline nlohmann::json report_to_json(const GenerationReport& r) {
  return {{"table_rows", r.table_rows},
          {"prevalence", r.prevalence},
          {"any_complication", r.any_complication},
          {"planted_anomalies", r.anomalies.size()}};
}

struct GeneratedData {
  Schema schema;
  std::map<std::string, TableData> tables;
  GenerationReport report;

  Dataset dataset() const { return Dataset::build(schema, tables); }
};

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string padded_id(char prefix, std::size_t i, int width = 5) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i);
  return buf;
}

// Explicit transforms over the engine's raw 64-bit output keep the stream
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t integer(std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean, double sd) {
    // Box-Muller, one draw per call.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double logistic() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return std::log(u / (1.0 - u));
  }

 private:
  std::mt19937_64 engine_;
};

struct VitalSpec {
  std::string item;
  std::string unit;
  double mean;
  double between_sd;
  double ar_sd;
  double noise_sd;
  double lo;
  double hi;
};

struct SpotSpec {
  std::string item;
  std::string unit;
  double mean;
  double between_sd;
  double within_sd;
  int decimals;
};

}  // namespace detail

// Builds the six tables in memory. Labels come from thresholding
// s + Logistic(0, 1) noise at its (1 - p) quantile, where s is the weighted sum
// of the standardized planted features; this is a logistic link whose
// intercept realizes prevalence p exactly.
inline GeneratedData generate_tables(const SynthConfig& config) {
  config.validate();
  detail::Rng rng(config.seed);
  GeneratedData out;
  out.schema = default_schema();
  auto header = [&](const std::string& entity) {
    TableData d;
    for (const auto& c : out.schema.find(entity)->columns) d.header.push_back(c.name);
    return d;
  };
  TableData patients = header("patients"), admissions = header("admissions"),
            surgeries = header("surgeries"), labtests = header("labtests"),
            chartevents = header("chartevents"), vitalsigns = header("vitalsigns");

  const std::vector<detail::VitalSpec> vitals = {
      {"Pulse", "bpm", 125.0, 12.0, 1.5, 1.5, 40.0, 230.0},
      {"SBP", "mmHg", 82.0, 9.0, 1.2, 1.5, 30.0, 160.0},
      {"SpO2", "%", 95.0, 2.5, 0.4, 0.5, 60.0, 100.0},
  };
  const std::vector<detail::SpotSpec> labs = {
      {"Lactate", "mmol/L", 1.6, 0.45, 0.25, 2},
      {"Hemoglobin", "g/dL", 12.5, 1.4, 0.5, 1},
      {"Creatinine", "mg/dL", 0.42, 0.1, 0.05, 2},
  };
  const std::vector<detail::SpotSpec> charts = {
      {"Temperature", "C", 36.9, 0.35, 0.2, 1},
      {"RespRate", "/min", 32.0, 5.0, 3.0, 0},
  };
  const std::vector<std::string> diagnoses = {"ASD", "PDA", "TGA", "TOF", "VSD"};
  const std::vector<std::string> procedures = {"other", "palliative", "repair"};
  const Timestamp origin = *parse_timestamp("2019-01-01T00:00:00Z");
  std::size_t lab_id = 0, chart_id = 0, vital_id = 0;

  for (std::size_t i = 0; i < config.n_patients; ++i) {
    const std::string pid = detail::padded_id('P', i + 1);
    const std::string aid = detail::padded_id('A', i + 1);
    const std::string sid = detail::padded_id('S', i + 1);
    const double age_days = std::round(rng.uniform(28.0, 3650.0));
    const double age_years = age_days / 365.25;
    const std::string gender = rng.bernoulli(0.5) ? "M" : "F";
    const double weight = std::max(2.0, 3.5 + 2.4 * age_years + rng.normal(0.0, 1.2));
    const double height = std::max(45.0, 52.0 + 7.5 * age_years + rng.normal(0.0, 3.0));
    patients.rows.push_back({pid, gender, detail::fixed(age_days, 0), detail::fixed(weight, 1),
                             detail::fixed(height, 1)});

    const Timestamp admit{origin.seconds + static_cast<std::int64_t>(i) * 86400 +
                          static_cast<std::int64_t>(rng.integer(0, 23)) * 3600};
    const std::size_t n_points = rng.integer(config.series_min, config.series_max);
    const Timestamp start{admit.seconds + static_cast<std::int64_t>(rng.integer(24, 72)) * 3600};
    const Timestamp end{start.seconds + static_cast<std::int64_t>(n_points - 1) * 60};
    const Timestamp discharge{end.seconds + static_cast<std::int64_t>(rng.integer(3, 10)) * 86400};
    admissions.rows.push_back({aid, pid, format_timestamp(admit), format_timestamp(discharge),
                               diagnoses[rng.integer(0, diagnoses.size() - 1)]});

    const double duration_min = static_cast<double>(n_points - 1);
    const double cpb = std::round(duration_min * rng.uniform(0.4, 0.75));
    std::vector<std::string> srow = {sid,
                                     aid,
                                     pid,
                                     format_timestamp(start),
                                     format_timestamp(end),
                                     detail::fixed(duration_min, 0),
                                     detail::fixed(cpb, 0),
                                     procedures[rng.integer(0, procedures.size() - 1)],
                                     "0", "0", "0", "0", "0"};
    surgeries.rows.push_back(std::move(srow));

    // Spot measurements between admission and surgery start.
    auto spot = [&](const std::vector<detail::SpotSpec>& specs, TableData& table,
                    std::size_t& counter, char prefix) {
      for (const auto& s : specs) {
        const double level = rng.normal(s.mean, s.between_sd);
        const std::size_t n = rng.integer(3, 6);
        std::vector<std::int64_t> offsets;
        for (std::size_t k = 0; k < n; ++k) {
          offsets.push_back(static_cast<std::int64_t>(
              rng.integer(0, static_cast<std::size_t>((start.seconds - admit.seconds) / 60 - 1))) * 60);
        }
        std::sort(offsets.begin(), offsets.end());
        for (std::int64_t off : offsets) {
          const double v = std::max(0.0, rng.normal(level, s.within_sd));
          table.rows.push_back({detail::padded_id(prefix, ++counter, 8), pid, aid, s.item,
                                format_timestamp({admit.seconds + off}),
                                detail::fixed(v, s.decimals), s.unit});
        }
      }
    };
    spot(labs, labtests, lab_id, 'L');
    spot(charts, chartevents, chart_id, 'C');

    // In-surgery vital signs once a minute: patient level + AR(1) drift +
    // measurement noise, and optionally one short raised run (3-6 minutes) on
    // Pulse. Runs much longer than the occlusion window are locally flat and
    // their interior carries no occlusion signal.
    std::optional<PlantedAnomaly> anomaly;
    if (rng.bernoulli(config.anomaly_rate)) {
      const std::size_t len = rng.integer(3, 6);
      const std::size_t a = rng.integer(6, n_points - len - 6);
      anomaly = PlantedAnomaly{pid,
                               sid,
                               "Pulse",
                               a,
                               a + len - 1,
                               {start.seconds + static_cast<std::int64_t>(a) * 60},
                               {start.seconds + static_cast<std::int64_t>(a + len - 1) * 60},
                               "above",
                               rng.uniform(35.0, 50.0)};
    }
    for (const auto& v : vitals) {
      const double level = rng.normal(v.mean, v.between_sd);
      double drift = 0.0;
      for (std::size_t t = 0; t < n_points; ++t) {
        drift = 0.9 * drift + rng.normal(0.0, v.ar_sd);
        double value = level + drift + rng.normal(0.0, v.noise_sd);
        if (anomaly && anomaly->item_id == v.item && t >= anomaly->start_index &&
            t <= anomaly->end_index) {
          value += anomaly->amplitude;
        }
        value = std::clamp(value, v.lo, v.hi);
        vitalsigns.rows.push_back({detail::padded_id('V', ++vital_id, 9), pid, aid, sid, v.item,
                                   format_timestamp({start.seconds + static_cast<std::int64_t>(t) * 60}),
                                   detail::fixed(value, 1), v.unit});
      }
    }
    if (anomaly) out.report.anomalies.push_back(*anomaly);
  }

  out.tables = {{"patients", std::move(patients)},       {"admissions", std::move(admissions)},
                {"surgeries", std::move(surgeries)},     {"labtests", std::move(labtests)},
                {"chartevents", std::move(chartevents)}, {"vitalsigns", std::move(vitalsigns)}};

  const std::size_t n = config.n_patients;
  if (n > 0) {
    const Dataset ds = Dataset::build(out.schema, out.tables);
    const FeatureSet features(synthesize_descriptors(ds));
    std::map<std::string, std::vector<double>> planted;  // feature -> standardized values
    for (const auto& e : config.planted_effects) {
      if (planted.count(e.feature)) continue;
      const auto idx = features.index_of(e.feature);
      if (!idx || features[*idx].categorical) {
        fail(ErrorCode::kInvalidArgument, "planted effect on unknown numeric feature " + e.feature);
      }
      std::vector<double> raw(n, std::nan(""));
      for (std::size_t r = 0; r < n; ++r) {
        const FeatureValue v = compute_feature(features[*idx], ds, resolve_instance(ds, r));
        if (!is_missing(v)) raw[r] = std::get<double>(v);
      }
      std::vector<double> seen;
      for (double v : raw) if (!std::isnan(v)) seen.push_back(v);
      const double mu = seen.empty() ? 0.0 : stats::mean(seen);
      const double sd = stats::sample_sd(seen).value_or(0.0);
      for (double& v : raw) v = (std::isnan(v) || sd == 0.0) ? 0.0 : (v - mu) / sd;
      planted[e.feature] = std::move(raw);
    }
    TableData& surg = out.tables.at("surgeries");
    const TableSchema& sts = *out.schema.find("surgeries");
    std::vector<bool> any(n, false);
    for (const auto& code : complication_labels()) {
      std::vector<double> latent(n, 0.0);
      for (const auto& e : config.planted_effects) {
        if (e.label != code) continue;
        for (std::size_t r = 0; r < n; ++r) latent[r] += e.weight * planted.at(e.feature)[r];
      }
      for (double& v : latent) v += rng.logistic();
      const auto positives = static_cast<std::size_t>(
          std::llround(config.target_prevalence.at(code) * static_cast<double>(n)));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return latent[a] > latent[b]; });
      const std::size_t col = *sts.column_index(out.schema.target.labels.at(code));
      for (std::size_t k = 0; k < positives; ++k) {
        surg.rows[order[k]][col] = "1";
        any[order[k]] = true;
      }
      out.report.prevalence[code] = static_cast<double>(positives) / static_cast<double>(n);
    }
    out.report.any_complication =
        static_cast<double>(std::count(any.begin(), any.end(), true)) / static_cast<double>(n);
  }
  for (const auto& [name, t] : out.tables) out.report.table_rows[name] = t.rows.size();
  return out;
}

// Writes the dataset (schema.json + one CSV per table) and
// planted_anomalies.json. Identical configs produce identical bytes.
inline GenerationReport generate(const SynthConfig& config,
                                 const std::filesystem::path& output_directory) {
  GeneratedData data = generate_tables(config);
  write_dataset(data.schema, data.tables, output_directory);
  std::ofstream out(output_directory / "planted_anomalies.json", std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write planted_anomalies.json");
  out << anomalies_to_json(data.report.anomalies).dump(2) << '\n';
  return data.report;
}

}  // namespace ehrx::synth
