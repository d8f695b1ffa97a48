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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ehrx/ehrx.hpp"
#include "ehrx/http_server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) ehrx::fail(ehrx::ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    ehrx::fail(ehrx::ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

ehrx::service::ServiceConfig service_config(const std::string& config_file, const std::string& data,
                                            const std::string& models) {
  ehrx::service::ServiceConfig c;
  if (!config_file.empty()) c = ehrx::service::config_from_json(read_json_file(config_file));
  if (!data.empty()) c.data_dir = data;
  if (!models.empty()) c.models_dir = models;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ehrx: explainable surgical complication risk over relational EHR data"};
  app.require_subcommand(1);

  std::string config_file, out_dir, data_dir, models_dir, target = "C", out_file, patient, feature,
                                                          static_dir;
  int port = -1, folds = 10;
  std::size_t window = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_file, "SynthConfig JSON (defaults when omitted)");
  synth->add_option("--out", out_dir, "output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "validate a dataset and optionally export features");
  ingest->add_option("--data", data_dir, "dataset directory")->required();
  ingest->add_option("--out", out_dir, "write matrix.csv and descriptors.json here");

  auto* train_cmd = app.add_subcommand("train", "cross-validate and fit one target model");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--target", target, "complication label (L, C, A, I, O)")->required();
  train_cmd->add_option("--out", out_file, "model JSON path")->required();
  train_cmd->add_option("--folds", folds, "cross-validation folds");

  auto* explain = app.add_subcommand("explain", "print the ContributionSet for a patient");
  explain->add_option("--data", data_dir, "dataset directory")->required();
  explain->add_option("--models", models_dir, "directory of model_<target>.json");
  explain->add_option("--patient", patient, "patient id")->required();
  explain->add_option("--target", target, "complication label");
  explain->add_option("--config", config_file, "service config JSON");

  auto* influence = app.add_subcommand("influence", "print the SegmentSet for a dynamic feature");
  influence->add_option("--data", data_dir, "dataset directory")->required();
  influence->add_option("--models", models_dir, "directory of model_<target>.json");
  influence->add_option("--patient", patient, "patient id")->required();
  influence->add_option("--feature", feature, "dynamic feature id")->required();
  influence->add_option("--k", window, "occlusion window (0 = automatic)");
  influence->add_option("--config", config_file, "service config JSON");

  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  serve->add_option("--config", config_file, "service config JSON");
  serve->add_option("--data", data_dir, "dataset directory");
  serve->add_option("--models", models_dir, "directory of model_<target>.json");
  serve->add_option("--port", port, "listen port");
  serve->add_option("--static", static_dir, "UI assets served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      ehrx::synth::SynthConfig config;
      if (!config_file.empty()) config = ehrx::synth::config_from_json(read_json_file(config_file));
      const auto report = ehrx::synth::generate(config, out_dir);
      std::cout << ehrx::synth::report_to_json(report).dump(2) << "\n";
    } else if (*ingest) {
      const ehrx::Dataset ds = ehrx::load_dataset(data_dir);
      const ehrx::FeatureSet features(ehrx::synthesize_descriptors(ds));
      const ehrx::FeatureMatrix matrix = ehrx::build_matrix(ds, features);
      json summary = {{"patients", ds.patient_count()},
                      {"instances", matrix.rows()},
                      {"features", features.size()},
                      {"matrix_columns", matrix.cols()},
                      {"tables", json::object()}};
      for (const auto& t : ds.schema().tables) summary["tables"][t.entity] = ds.table(t.entity).size();
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        ehrx::write_matrix_csv(matrix, fs::path(out_dir) / "matrix.csv");
        ehrx::write_descriptors_json(features, fs::path(out_dir) / "descriptors.json");
      }
      std::cout << summary.dump(2) << "\n";
    } else if (*train_cmd) {
      const ehrx::Dataset ds = ehrx::load_dataset(data_dir);
      const ehrx::FeatureSet features(ehrx::synthesize_descriptors(ds));
      const ehrx::FeatureMatrix matrix = ehrx::build_matrix(ds, features);
      const auto labels = ehrx::target_labels(ds, target);
      ehrx::TrainConfig config;
      config.cv_folds = folds;
      const auto cv = ehrx::cross_validate(matrix, labels, config);
      std::printf("target %s  n=%zu  features=%zu\n", target.c_str(), matrix.rows(), matrix.cols());
      std::printf("%-6s %s\n", "fold", "auc");
      for (std::size_t f = 0; f < cv.fold_auc.size(); ++f) std::printf("%-6zu %.4f\n", f, cv.fold_auc[f]);
      std::printf("%-6s %.4f\n", "mean", cv.mean_auc);
      ehrx::save_model(ehrx::train(matrix, labels, config, target), out_file);
      std::printf("model written to %s\n", out_file.c_str());
    } else if (*explain || *influence) {
      auto state = ehrx::service::AppState::load(service_config(config_file, data_dir, models_dir));
      const std::size_t row = state->instance_row(patient);
      const auto cohort = state->cohort({});
      if (*explain) {
        const auto exp = state->explanation(row, target, *cohort);
        std::cout << ehrx::contributions_to_json(exp->contributions, &exp->hierarchy).dump(2) << "\n";
      } else {
        const auto& d = state->features().get(feature);
        if (!d.is_dynamic()) ehrx::fail(ehrx::ErrorCode::kInvalidArgument, feature + " is not dynamic");
        const auto& m = state->matrix();
        const std::size_t c = *m.column_index(d.id);
        if (m.is_missing(row, c)) {
          ehrx::fail(ehrx::ErrorCode::kFailedPrecondition, feature + " is missing for " + patient);
        }
        const auto series = ehrx::feature_series(d, state->dataset(),
                                                 ehrx::resolve_instance(state->dataset(), m.row_ids[row]));
        const std::size_t k = window > 0 ? window : ehrx::default_window_size(series);
        const auto ref = ehrx::feature_reference(m, cohort->split.low_rows, c);
        const auto set =
            ehrx::influential_segments(series, d, m.at(row, c), ref, k, state->config().z_grid);
        std::cout << ehrx::segments_to_json(set).dump(2) << "\n";
      }
    } else if (*serve) {
      // config file < environment < flags
      auto config = service_config(config_file, "", "");
      ehrx::service::apply_env_overrides(config);
      if (!data_dir.empty()) config.data_dir = data_dir;
      if (!models_dir.empty()) config.models_dir = models_dir;
      if (port >= 0) config.port = port;
      if (!static_dir.empty()) config.static_dir = static_dir;
      if (config.data_dir.empty()) ehrx::fail(ehrx::ErrorCode::kInvalidArgument, "--data is required");
      auto state = ehrx::service::AppState::load(config);
      std::fprintf(stderr, "listening on %s:%d\n", config.host.c_str(), config.port);
      ehrx::service::serve(*state);
    }
  } catch (const ehrx::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(ehrx::error_code_name(e.code())).c_str(),
                 e.what());
    return 1;
  }
  return 0;
}
