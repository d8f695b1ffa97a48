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

// Everything except the HTTP server (ehrx/http_server.hpp).
#include "ehrx/cohort.hpp"
#include "ehrx/csv.hpp"
#include "ehrx/ehr_store.hpp"
#include "ehrx/error.hpp"
#include "ehrx/features.hpp"
#include "ehrx/influence.hpp"
#include "ehrx/predictor.hpp"
#include "ehrx/reference.hpp"
#include "ehrx/schema.hpp"
#include "ehrx/service.hpp"
#include "ehrx/shapley.hpp"
#include "ehrx/stats.hpp"
#include "ehrx/synth.hpp"
#include "ehrx/timestamp.hpp"
#include "ehrx/whatif.hpp"
