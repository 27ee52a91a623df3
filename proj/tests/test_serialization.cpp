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

#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "volreg/error.hpp"
#include "volreg/serialization.hpp"

namespace volreg {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

TEST(Config, RegistrationRoundTrip) {
  RegistrationConfig c;
  c.search_radius = 5;
  c.keypoints.max_count = 321;
  c.mind.dilation = 3;
  c.io_step_halving = false;
  c.clamp_lo = -900.0f;
  const RegistrationConfig r = registration_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_EQ(r.search_radius, 5);
  EXPECT_EQ(r.keypoints.max_count, 321);
  EXPECT_EQ(r.mind.dilation, 3);
  EXPECT_FALSE(r.io_step_halving);
}

TEST(Config, PartialObjectKeepsDefaults) {
  const RegistrationConfig r = registration_config_from_json(Json{{"schema_version", 1}, {"io_iters", 12}});
  EXPECT_EQ(r.io_iters, 12);
  EXPECT_EQ(r.search_radius, RegistrationConfig().search_radius);
}

TEST(Config, RejectsUnknownKeysAndSchemaProblems) {
  Json j = to_json(RegistrationConfig());
  j["serach_radius"] = 3;
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);

  j = to_json(RegistrationConfig());
  j["keypoints"]["radius"] = 3;
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);

  j = to_json(RegistrationConfig());
  j.erase("schema_version");
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);
  j["schema_version"] = 2;
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);

  j = to_json(RegistrationConfig());
  j["io_iters"] = "many";
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);
  EXPECT_THROW(registration_config_from_json(Json::array()), ArgumentError);
}

TEST(Config, RegistrationValuesAreValidated) {
  Json j = to_json(RegistrationConfig());
  j["search_radius"] = 0;
  EXPECT_THROW(registration_config_from_json(j), ArgumentError);
}

TEST(Config, RankRoundTrip) {
  RankConfig c;
  c.alpha = 0.01;
  c.metrics_in_rank = {{Metric::DSC, Better::Higher}, {Metric::RT, Better::Lower}};
  c.initial_method = "Before";
  const RankConfig r = rank_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_EQ(r.alpha, 0.01);
  ASSERT_EQ(r.metrics_in_rank.size(), 2u);
  EXPECT_EQ(r.metrics_in_rank[1].metric, Metric::RT);
}

TEST(Config, RankMetricShorthandAndErrors) {
  const RankConfig r = rank_config_from_json(Json{{"schema_version", 1}, {"metrics_in_rank", {"TRE", "DSC"}}});
  ASSERT_EQ(r.metrics_in_rank.size(), 2u);
  EXPECT_EQ(r.metrics_in_rank[0].better, Better::Lower);
  EXPECT_EQ(r.metrics_in_rank[1].better, Better::Higher);

  EXPECT_THROW(rank_config_from_json(Json{{"schema_version", 1}, {"metrics_in_rank", {"ABC"}}}), ArgumentError);
  EXPECT_THROW(rank_config_from_json(Json{{"schema_version", 1},
                                          {"metrics_in_rank", {{{"metric", "TRE"}, {"better", "up"}}}}}),
               ArgumentError);
  EXPECT_THROW(rank_config_from_json(Json{{"schema_version", 1}, {"alpha", 0.0}}), ArgumentError);
  EXPECT_THROW(rank_config_from_json(Json{{"schema_version", 1}, {"alpha", 0.05}, {"beta", 1}}), ArgumentError);
}

TEST(Config, PhantomRoundTrip) {
  PhantomConfig c;
  c.dims = Dims3(48, 64, 80);
  c.spacing = Eigen::Vector3d(1.0, 1.25, 2.0);
  c.cbct = false;
  c.cbct_config.noise_sigma = 12.5;
  c.palette.bone = 900.0f;
  const PhantomConfig r = phantom_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_EQ(r.dims, c.dims);
  EXPECT_EQ(r.spacing, c.spacing);
  EXPECT_FALSE(r.cbct);

  Json j = to_json(c);
  j["palette"]["bones"] = 1.0;
  EXPECT_THROW(phantom_config_from_json(j), ArgumentError);
  j = to_json(c);
  j["dims"] = {48, 64};
  EXPECT_THROW(phantom_config_from_json(j), ArgumentError);
}

TEST(JsonFile, WriteThenRead) {
  TempDir dir("json");
  const Json j = to_json(RankConfig());
  write_json_file(j, dir / "rank.json");
  EXPECT_EQ(read_json_file(dir / "rank.json"), j);
  EXPECT_THROW(read_json_file(dir / "missing.json"), IoError);
  write_text_file("{not json", dir / "bad.json");
  EXPECT_THROW(read_json_file(dir / "bad.json"), MalformedFileError);
}

CaseMetrics sample_row() {
  CaseMetrics m;
  m.case_id = "c1";
  m.method_id = "A";
  m.tre_mm = {1.5, kNaN, 2.25};
  m.dsc = {{1, 0.9}, {2, 0.0}};
  m.hd95 = {{1, 3.5}};
  m.hd95_excluded = 1;
  m.sdlogj = 0.07;
  m.runtime_s = kNaN;
  return m;
}

TEST(MetricTableJson, NanBecomesNullAndBack) {
  MetricTable t;
  t.add(sample_row());
  CaseMetrics failed;
  failed.case_id = "c2";
  failed.method_id = "A";
  failed.failed = true;
  failed.failure = "diverged";
  t.add(failed);

  const Json j = to_json(t);
  EXPECT_TRUE(j["rows"][0]["tre_mm"][1].is_null());
  EXPECT_TRUE(j["rows"][0]["runtime_s"].is_null());
  EXPECT_EQ(j["rows"][1]["failure"], "diverged");
  // Valid JSON text: no bare NaN tokens.
  EXPECT_EQ(j.dump().find("NaN"), std::string::npos);

  const MetricTable r = metric_table_from_json(Json::parse(j.dump()));
  ASSERT_EQ(r.rows.size(), 2u);
  const CaseMetrics& a = r.rows[0];
  EXPECT_EQ(a.tre_mm[0], 1.5);
  EXPECT_TRUE(std::isnan(a.tre_mm[1]));
  EXPECT_TRUE(std::isnan(a.runtime_s));
  EXPECT_EQ(a.dsc, sample_row().dsc);
  EXPECT_EQ(a.hd95, sample_row().hd95);
  EXPECT_EQ(a.hd95_excluded, 1);
  EXPECT_TRUE(r.rows[1].failed);
  EXPECT_EQ(r.rows[1].failure, "diverged");
}

TEST(MetricTableJson, RequiresIdentifiers) {
  Json j = to_json(MetricTable());
  j["rows"] = Json::array({{{"method_id", "A"}}});
  EXPECT_THROW(metric_table_from_json(j), ArgumentError);
}

TEST(PerLabelCsv, OneLinePerLabel) {
  MetricTable t;
  t.add(sample_row());
  EXPECT_EQ(per_label_csv(t), "method,case,label,dsc,hd95\nA,c1,1,0.90000000000000002,3.5\nA,c1,2,0,\n");
}

TEST(Manifest, PhantomCaseRoundTrip) {
  TempDir dir("manifest");
  PhantomConfig cfg;
  cfg.dims = Dims3(48, 48, 48);
  cfg.deform_magnitude = 2.0;
  const PhantomCase pc = make_phantom(11, cfg);
  const CaseManifest written = write_phantom_case(pc, "case_011", dir.path());

  const CaseManifest m = read_manifest(dir / "manifest.json");
  EXPECT_EQ(m.case_id, "case_011");
  EXPECT_EQ(fs::canonical(m.fixed), fs::canonical(written.fixed));
  ASSERT_TRUE(m.gt_field.has_value());
  EXPECT_EQ(m.seed, std::optional<std::uint64_t>(11));
  EXPECT_EQ(m.generator["deform_magnitude"], 2.0);

  const CaseData c = load_case(m);
  EXPECT_EQ(c.fixed.dims(), cfg.dims);
  EXPECT_TRUE((c.fixed.data() == pc.fixed.data()).all());
  EXPECT_TRUE((c.labels_moving.data() == pc.labels_moving.data()).all());
  ASSERT_EQ(c.landmarks.size(), pc.landmarks.size());
  for (std::size_t i = 0; i < c.landmarks.size(); ++i) {
    EXPECT_LT((c.landmarks.pairs[i].moving - pc.landmarks.pairs[i].moving).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Manifest, MissingFileIsNamed) {
  TempDir dir("manifest_missing");
  PhantomConfig cfg;
  cfg.dims = Dims3(48, 48, 48);
  write_phantom_case(make_phantom(2, cfg), "c", dir.path());
  fs::remove(dir / "landmarks_moving.csv");
  try {
    read_manifest(dir / "manifest.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("landmarks_moving"), std::string::npos) << e.what();
  }
}

TEST(Manifest, PathsAreStoredRelative) {
  TempDir dir("manifest_rel");
  PhantomConfig cfg;
  cfg.dims = Dims3(48, 48, 48);
  write_phantom_case(make_phantom(3, cfg), "c", dir.path());
  const Json j = read_json_file(dir / "manifest.json");
  EXPECT_EQ(j["fixed"], "fixed.nii.gz");
  EXPECT_EQ(j["schema_version"], kSchemaVersion);

  // Moving the directory keeps the manifest usable.
  const fs::path moved = dir.path().string() + "_moved";
  fs::rename(dir.path(), moved);
  const CaseManifest m = read_manifest(moved / "manifest.json");
  EXPECT_EQ(m.fixed.parent_path(), fs::absolute(moved));
  fs::rename(moved, dir.path());
}

}  // namespace
}  // namespace volreg
