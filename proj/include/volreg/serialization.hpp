/*
 * Copyright 2026 The volreg Authors.
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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "volreg/metrics.hpp"
#include "volreg/phantom.hpp"
#include "volreg/ranking.hpp"
#include "volreg/registration.hpp"

namespace volreg {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

Json read_json_file(const std::filesystem::path& path);
// Pretty-printed, trailing newline; object keys come out sorted.
void write_json_file(const Json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

// Config readers reject unknown keys and a missing or different schema_version.
Json to_json(const RegistrationConfig& cfg);
RegistrationConfig registration_config_from_json(const Json& j);
Json to_json(const RankConfig& cfg);
RankConfig rank_config_from_json(const Json& j);
Json to_json(const PhantomConfig& cfg);
PhantomConfig phantom_config_from_json(const Json& j);

Json to_json(const RunReport& r);
Json to_json(const CaseMetrics& m);
CaseMetrics case_metrics_from_json(const Json& j);
Json to_json(const MetricTable& t);
MetricTable metric_table_from_json(const Json& j);
Json to_json(const Leaderboard& lb);

// method,case,label,dsc,hd95 with one line per label; hd95 blank when excluded.
std::string per_label_csv(const MetricTable& t);

// Case directory description. Paths are stored relative to the manifest and
// resolved to absolute ones on load.
struct CaseManifest {
  std::string case_id;
  std::filesystem::path fixed, moving, labels_fixed, labels_moving, trunk;
  std::filesystem::path landmarks_fixed, landmarks_moving;
  std::optional<std::filesystem::path> gt_field;
  std::optional<std::uint64_t> seed;
  Json generator;  // generator settings, null when absent
};

// Throws IoError naming the first referenced file that does not exist.
CaseManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const CaseManifest& m, const std::filesystem::path& path);

// Writes fixed/moving/labels/trunk NIfTIs, landmark CSVs, gt_field and
// manifest.json into `dir` and returns the manifest (absolute paths).
CaseManifest write_phantom_case(const PhantomCase& pc, const std::string& case_id,
                                const std::filesystem::path& dir);

struct CaseData {
  CaseManifest manifest;
  Volume fixed, moving;
  LabelMask labels_fixed, labels_moving;
  TrunkMask trunk;
  LandmarkSet landmarks;
};

CaseData load_case(const CaseManifest& m);

}  // namespace volreg
