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

#include "volreg/serialization.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "volreg/error.hpp"
#include "volreg/nifti.hpp"

namespace volreg {
namespace fs = std::filesystem;

namespace {

// Reads members of one JSON object and rejects the ones nobody asked for.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ArgumentError(what_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw ArgumentError(what_ + ": bad value for '" + key + "': " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void require(const char* key) const {
    if (!j_.contains(key)) throw ArgumentError(what_ + ": missing key '" + std::string(key) + "'");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ArgumentError(what_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

void check_schema(StrictObject& o, const std::string& what) {
  o.require("schema_version");
  int version = 0;
  o.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ArgumentError(what + ": unsupported schema_version " + std::to_string(version));
  }
}

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double num_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Json vec3(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ArgumentError(what + ": expected 3 numbers");
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Better better_from(const std::string& s) {
  if (s == "lower") return Better::Lower;
  if (s == "higher") return Better::Higher;
  throw ArgumentError("rank config: direction must be 'lower' or 'higher', got '" + s + "'");
}

const char* better_name(Better b) { return b == Better::Lower ? "lower" : "higher"; }

}  // namespace

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw MalformedFileError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json_file(const Json& j, const fs::path& path) { write_text_file(j.dump(2) + "\n", path); }

Json to_json(const RegistrationConfig& c) {
  return Json{{"schema_version", kSchemaVersion},
              {"clamp_lo", c.clamp_lo},
              {"clamp_hi", c.clamp_hi},
              {"keypoints", {{"sigma", c.keypoints.sigma}, {"nms_radius", c.keypoints.nms_radius},
                             {"max_count", c.keypoints.max_count}}},
              {"mind", {{"patch_radius", c.mind.patch_radius}, {"dilation", c.mind.dilation}}},
              {"search_radius", c.search_radius},
              {"quantization", c.quantization},
              {"match_patch_radius", c.match_patch_radius},
              {"coupling_alpha", c.coupling_alpha},
              {"coupling_iters", c.coupling_iters},
              {"coupling_neighbors", c.coupling_neighbors},
              {"tps_lambda", c.tps_lambda},
              {"instance_optimization", c.instance_optimization},
              {"io_half_resolution", c.io_half_resolution},
              {"io_lr", c.io_lr},
              {"io_iters", c.io_iters},
              {"io_reg_weight", c.io_reg_weight},
              {"io_step_halving", c.io_step_halving},
              {"smooth_window", c.smooth_window},
              {"smooth_repeats", c.smooth_repeats}};
}

RegistrationConfig registration_config_from_json(const Json& j) {
  RegistrationConfig c;
  StrictObject o(j, "registration config");
  check_schema(o, "registration config");
  o.get("clamp_lo", c.clamp_lo);
  o.get("clamp_hi", c.clamp_hi);
  if (const Json* k = o.child("keypoints")) {
    StrictObject ko(*k, "registration config keypoints");
    ko.get("sigma", c.keypoints.sigma);
    ko.get("nms_radius", c.keypoints.nms_radius);
    ko.get("max_count", c.keypoints.max_count);
    ko.finish();
  }
  if (const Json* m = o.child("mind")) {
    StrictObject mo(*m, "registration config mind");
    mo.get("patch_radius", c.mind.patch_radius);
    mo.get("dilation", c.mind.dilation);
    mo.finish();
  }
  o.get("search_radius", c.search_radius);
  o.get("quantization", c.quantization);
  o.get("match_patch_radius", c.match_patch_radius);
  o.get("coupling_alpha", c.coupling_alpha);
  o.get("coupling_iters", c.coupling_iters);
  o.get("coupling_neighbors", c.coupling_neighbors);
  o.get("tps_lambda", c.tps_lambda);
  o.get("instance_optimization", c.instance_optimization);
  o.get("io_half_resolution", c.io_half_resolution);
  o.get("io_lr", c.io_lr);
  o.get("io_iters", c.io_iters);
  o.get("io_reg_weight", c.io_reg_weight);
  o.get("io_step_halving", c.io_step_halving);
  o.get("smooth_window", c.smooth_window);
  o.get("smooth_repeats", c.smooth_repeats);
  o.finish();
  c.validate();
  return c;
}

Json to_json(const RankConfig& c) {
  Json metrics = Json::array();
  for (const auto& m : c.metrics_in_rank) {
    metrics.push_back({{"metric", metric_name(m.metric)}, {"better", better_name(m.better)}});
  }
  return Json{{"schema_version", kSchemaVersion},  {"alpha", c.alpha},
              {"metrics_in_rank", metrics},        {"score_floor", c.score_floor},
              {"score_ceiling", c.score_ceiling},  {"robustness_p", c.robustness_p},
              {"initial_method", c.initial_method}};
}

RankConfig rank_config_from_json(const Json& j) {
  RankConfig c;
  StrictObject o(j, "rank config");
  check_schema(o, "rank config");
  o.get("alpha", c.alpha);
  if (const Json* ms = o.child("metrics_in_rank")) {
    if (!ms->is_array()) throw ArgumentError("rank config: metrics_in_rank must be an array");
    c.metrics_in_rank.clear();
    for (const Json& e : *ms) {
      if (e.is_string()) {
        const Metric m = metric_from_name(e.get<std::string>());
        c.metrics_in_rank.push_back({m, default_direction(m)});
        continue;
      }
      StrictObject eo(e, "rank config metric");
      eo.require("metric");
      std::string name, better;
      eo.get("metric", name);
      eo.get("better", better);
      eo.finish();
      const Metric m = metric_from_name(name);
      c.metrics_in_rank.push_back({m, better.empty() ? default_direction(m) : better_from(better)});
    }
  }
  o.get("score_floor", c.score_floor);
  o.get("score_ceiling", c.score_ceiling);
  o.get("robustness_p", c.robustness_p);
  o.get("initial_method", c.initial_method);
  o.finish();
  c.validate();
  return c;
}

Json to_json(const PhantomConfig& c) {
  const CbctConfig& k = c.cbct_config;
  const Palette& p = c.palette;
  return Json{{"schema_version", kSchemaVersion},
              {"dims", {c.dims.x(), c.dims.y(), c.dims.z()}},
              {"spacing", vec3(c.spacing)},
              {"deform_magnitude", c.deform_magnitude},
              {"cbct", c.cbct},
              {"cbct_config",
               {{"contrast", k.contrast},
                {"bias", k.bias},
                {"blur_sigma", k.blur_sigma},
                {"ring_amplitude", k.ring_amplitude},
                {"ring_period", k.ring_period},
                {"streak_amplitude", k.streak_amplitude},
                {"streak_count", k.streak_count},
                {"noise_sigma", k.noise_sigma},
                {"fov_radius", k.fov_radius},
                {"fill", k.fill}}},
              {"palette",
               {{"air", p.air},
                {"lung", p.lung},
                {"soft_tissue", p.soft_tissue},
                {"heart", p.heart},
                {"bone", p.bone},
                {"tumour", p.tumour},
                {"airway_wall", p.airway_wall}}}};
}

PhantomConfig phantom_config_from_json(const Json& j) {
  PhantomConfig c;
  StrictObject o(j, "phantom config");
  check_schema(o, "phantom config");
  if (const Json* d = o.child("dims")) {
    if (!d->is_array() || d->size() != 3) throw ArgumentError("phantom config: dims must hold 3 integers");
    c.dims = Dims3((*d)[0].get<int>(), (*d)[1].get<int>(), (*d)[2].get<int>());
  }
  if (const Json* s = o.child("spacing")) c.spacing = vec3_from(*s, "phantom config spacing");
  o.get("deform_magnitude", c.deform_magnitude);
  o.get("cbct", c.cbct);
  if (const Json* k = o.child("cbct_config")) {
    StrictObject ko(*k, "phantom config cbct_config");
    CbctConfig& b = c.cbct_config;
    ko.get("contrast", b.contrast);
    ko.get("bias", b.bias);
    ko.get("blur_sigma", b.blur_sigma);
    ko.get("ring_amplitude", b.ring_amplitude);
    ko.get("ring_period", b.ring_period);
    ko.get("streak_amplitude", b.streak_amplitude);
    ko.get("streak_count", b.streak_count);
    ko.get("noise_sigma", b.noise_sigma);
    ko.get("fov_radius", b.fov_radius);
    ko.get("fill", b.fill);
    ko.finish();
  }
  if (const Json* p = o.child("palette")) {
    StrictObject po(*p, "phantom config palette");
    Palette& q = c.palette;
    po.get("air", q.air);
    po.get("lung", q.lung);
    po.get("soft_tissue", q.soft_tissue);
    po.get("heart", q.heart);
    po.get("bone", q.bone);
    po.get("tumour", q.tumour);
    po.get("airway_wall", q.airway_wall);
    po.finish();
  }
  o.finish();
  return c;
}

Json to_json(const RunReport& r) {
  Json stages = Json::object();
  for (const auto& [name, s] : r.stage_seconds) stages[name] = s;
  return Json{{"schema_version", kSchemaVersion},
              {"runtime_s", r.runtime_s},
              {"stage_seconds", stages},
              {"keypoints", r.keypoints},
              {"matched", r.matched},
              {"skipped", r.skipped},
              {"io_objective_start", num(r.io_objective_start)},
              {"io_objective_end", num(r.io_objective_end)},
              {"io_halvings", r.io_halvings}};
}

Json to_json(const CaseMetrics& m) {
  Json dsc = Json::object(), hd = Json::object(), tre = Json::array();
  for (const auto& [l, v] : m.dsc) dsc[std::to_string(l)] = num(v);
  for (const auto& [l, v] : m.hd95) hd[std::to_string(l)] = num(v);
  for (double v : m.tre_mm) tre.push_back(num(v));
  Json j{{"case_id", m.case_id},     {"method_id", m.method_id}, {"tre_mm", tre},
         {"dsc", dsc},               {"hd95", hd},               {"hd95_excluded", m.hd95_excluded},
         {"sdlogj", num(m.sdlogj)},  {"runtime_s", num(m.runtime_s)}, {"failed", m.failed}};
  if (m.failed) j["failure"] = m.failure;
  return j;
}

CaseMetrics case_metrics_from_json(const Json& j) {
  CaseMetrics m;
  StrictObject o(j, "case metrics");
  o.require("case_id");
  o.require("method_id");
  o.get("case_id", m.case_id);
  o.get("method_id", m.method_id);
  if (const Json* t = o.child("tre_mm")) {
    for (const Json& v : *t) m.tre_mm.push_back(num_from(v));
  }
  auto label_map = [](const Json* src, std::map<int, double>& dst) {
    if (!src) return;
    for (auto it = src->begin(); it != src->end(); ++it) dst[std::stoi(it.key())] = num_from(it.value());
  };
  label_map(o.child("dsc"), m.dsc);
  label_map(o.child("hd95"), m.hd95);
  o.get("hd95_excluded", m.hd95_excluded);
  if (const Json* s = o.child("sdlogj")) m.sdlogj = num_from(*s);
  if (const Json* r = o.child("runtime_s")) m.runtime_s = num_from(*r);
  o.get("failed", m.failed);
  o.get("failure", m.failure);
  o.finish();
  return m;
}

Json to_json(const MetricTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) rows.push_back(to_json(r));
  return Json{{"schema_version", kSchemaVersion}, {"rows", rows}};
}

MetricTable metric_table_from_json(const Json& j) {
  StrictObject o(j, "metric table");
  check_schema(o, "metric table");
  MetricTable t;
  if (const Json* rows = o.child("rows")) {
    if (!rows->is_array()) throw ArgumentError("metric table: rows must be an array");
    for (const Json& r : *rows) t.add(case_metrics_from_json(r));
  }
  o.finish();
  return t;
}

Json to_json(const Leaderboard& lb) {
  Json rows = Json::array();
  for (const auto& r : lb.rows) {
    Json agg = Json::object(), score = Json::object();
    for (const auto& [m, v] : r.aggregate) agg[metric_name(m)] = num(v);
    for (const auto& [m, v] : r.score) score[metric_name(m)] = num(v);
    rows.push_back({{"method", r.method},
                    {"initial", r.initial},
                    {"position", r.position},
                    {"aggregate", agg},
                    {"score", score},
                    {"overall", r.overall ? num(*r.overall) : Json(nullptr)}});
  }
  return Json{{"schema_version", kSchemaVersion},
              {"columns", {"Method", "TRE", "TRE30", "DSC", "HD95", "SDLogJ", "RT", "Rank"}},
              {"rows", rows}};
}

std::string per_label_csv(const MetricTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << "method,case,label,dsc,hd95\n";
  for (const auto& r : t.rows) {
    for (const auto& [l, d] : r.dsc) {
      out << r.method_id << ',' << r.case_id << ',' << l << ',' << d << ',';
      auto it = r.hd95.find(l);
      if (it != r.hd95.end()) out << it->second;
      out << '\n';
    }
  }
  return out.str();
}

CaseManifest read_manifest(const fs::path& path) {
  const Json j = read_json_file(path);
  StrictObject o(j, "manifest " + path.string());
  check_schema(o, "manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  CaseManifest m;
  for (const char* key : {"case_id", "fixed", "moving", "labels_fixed", "labels_moving", "trunk",
                          "landmarks_fixed", "landmarks_moving"}) {
    o.require(key);
  }
  o.get("case_id", m.case_id);
  auto path_of = [&](const char* key) {
    std::string rel;
    o.get(key, rel);
    const fs::path p = base / rel;
    if (!fs::exists(p)) throw IoError("manifest " + path.string() + ": " + key + " file not found: " + p.string());
    return p;
  };
  m.fixed = path_of("fixed");
  m.moving = path_of("moving");
  m.labels_fixed = path_of("labels_fixed");
  m.labels_moving = path_of("labels_moving");
  m.trunk = path_of("trunk");
  m.landmarks_fixed = path_of("landmarks_fixed");
  m.landmarks_moving = path_of("landmarks_moving");
  if (j.contains("gt_field") && !j["gt_field"].is_null()) {
    m.gt_field = path_of("gt_field");
  } else {
    o.child("gt_field");
  }
  if (const Json* s = o.child("seed"); s && !s->is_null()) m.seed = s->get<std::uint64_t>();
  if (const Json* g = o.child("generator")) m.generator = *g;
  o.finish();
  return m;
}

void write_manifest(const CaseManifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) { return fs::absolute(p).lexically_relative(base).generic_string(); };
  Json j{{"schema_version", kSchemaVersion},
         {"case_id", m.case_id},
         {"fixed", rel(m.fixed)},
         {"moving", rel(m.moving)},
         {"labels_fixed", rel(m.labels_fixed)},
         {"labels_moving", rel(m.labels_moving)},
         {"trunk", rel(m.trunk)},
         {"landmarks_fixed", rel(m.landmarks_fixed)},
         {"landmarks_moving", rel(m.landmarks_moving)}};
  j["gt_field"] = m.gt_field ? Json(rel(*m.gt_field)) : Json(nullptr);
  j["seed"] = m.seed ? Json(*m.seed) : Json(nullptr);
  j["generator"] = m.generator;
  write_json_file(j, path);
}

CaseManifest write_phantom_case(const PhantomCase& pc, const std::string& case_id, const fs::path& dir) {
  fs::create_directories(dir);
  CaseManifest m;
  m.case_id = case_id;
  m.fixed = dir / "fixed.nii.gz";
  m.moving = dir / "moving.nii.gz";
  m.labels_fixed = dir / "labels_fixed.nii.gz";
  m.labels_moving = dir / "labels_moving.nii.gz";
  m.trunk = dir / "trunk.nii.gz";
  m.landmarks_fixed = dir / "landmarks_fixed.csv";
  m.landmarks_moving = dir / "landmarks_moving.csv";
  m.gt_field = dir / "gt_field.nii.gz";
  m.seed = pc.seed;
  m.generator = to_json(pc.config);
  m.generator["magnitude_used"] = pc.magnitude_used;
  m.generator["retries"] = pc.retries;

  write_nifti(pc.fixed, m.fixed);
  write_nifti(pc.moving, m.moving);
  write_nifti(pc.labels_fixed, m.labels_fixed);
  write_nifti(pc.labels_moving, m.labels_moving);
  write_nifti(pc.trunk, m.trunk);
  write_landmarks(pc.landmarks, m.landmarks_fixed, m.landmarks_moving);
  write_field(pc.gt_field, *m.gt_field);
  write_manifest(m, dir / "manifest.json");
  return m;
}

CaseData load_case(const CaseManifest& m) {
  CaseData c;
  c.manifest = m;
  c.fixed = read_volume(m.fixed);
  c.moving = read_volume(m.moving);
  c.labels_fixed = read_labels(m.labels_fixed);
  c.labels_moving = read_labels(m.labels_moving);
  c.trunk = read_trunk(m.trunk);
  c.landmarks = read_landmarks(m.landmarks_fixed, m.landmarks_moving);
  require_same_grid(c.fixed, c.labels_fixed, "fixed labels");
  require_same_grid(c.fixed, c.trunk, "trunk");
  require_same_grid(c.moving, c.labels_moving, "moving labels");
  check_landmarks(c.landmarks, c.fixed.dims(), c.moving.dims());
  return c;
}

}  // namespace volreg
