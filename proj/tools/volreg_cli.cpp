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

// volreg command-line driver: phantom, register, evaluate, rank, convert, keypoints.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "volreg/error.hpp"
#include "volreg/features.hpp"
#include "volreg/metrics.hpp"
#include "volreg/nifti.hpp"
#include "volreg/phantom.hpp"
#include "volreg/ranking.hpp"
#include "volreg/registration.hpp"
#include "volreg/serialization.hpp"

namespace fs = std::filesystem;
using namespace volreg;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

bool has_suffix(const fs::path& p, const std::string& s) {
  const std::string n = p.filename().string();
  return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

// ---- phantom -------------------------------------------------------------

struct PhantomArgs {
  int cases = 3;
  std::uint64_t seed = 1;
  std::vector<int> dims = {96, 96, 96};
  double magnitude = 5.0;
  bool no_cbct = false;
  std::string config;
  std::string out;
  bool force = false;
  int jobs = 1;
};

int cmd_phantom(const PhantomArgs& a) {
  PhantomConfig cfg;
  if (!a.config.empty()) cfg = phantom_config_from_json(read_json_file(a.config));
  if (a.dims.size() == 1) {
    cfg.dims = Dims3::Constant(a.dims[0]);
  } else if (a.dims.size() == 3) {
    cfg.dims = Dims3(a.dims[0], a.dims[1], a.dims[2]);
  } else {
    throw ArgumentError("--dims takes one or three integers");
  }
  cfg.deform_magnitude = a.magnitude;
  if (a.no_cbct) cfg.cbct = false;
  if (a.cases < 1) throw ArgumentError("--cases must be >= 1");

  const fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out) && !a.force) {
    throw ArgumentError("output directory " + out.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(out);
  std::mutex io;
  parallel_for(a.cases, a.jobs, [&](int k) {
    char name[32];
    std::snprintf(name, sizeof(name), "case_%03d", k);
    const PhantomCase pc = make_phantom(a.seed + std::uint64_t(k), cfg);
    write_phantom_case(pc, name, out / name);
    std::lock_guard<std::mutex> lock(io);
    std::cout << name << ": seed " << pc.seed << ", " << pc.landmarks.size() << " landmarks";
    if (pc.retries) std::cout << ", magnitude reduced to " << pc.magnitude_used << " after " << pc.retries << " retries";
    std::cout << "\n";
  });
  return kOk;
}

// ---- register ------------------------------------------------------------

struct RegisterArgs {
  std::vector<std::string> manifests;
  std::string config;
  std::string out;
  int jobs = 1;
};

int cmd_register(const RegisterArgs& a) {
  RegistrationConfig cfg;
  if (!a.config.empty()) cfg = registration_config_from_json(read_json_file(a.config));
  cfg.validate();
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<CaseManifest> manifests;
  for (const auto& m : a.manifests) manifests.push_back(read_manifest(manifest_path(m)));
  std::mutex io;
  parallel_for(int(manifests.size()), a.jobs, [&](int i) {
    const CaseData c = load_case(manifests[std::size_t(i)]);
    const RegistrationResult r = register_pair(c.fixed, c.moving, c.trunk, cfg);
    const DisplacementFieldd identity(c.fixed.dims(), c.fixed.spacing());
    const double before = mean(tre(c.landmarks, identity, c.fixed.spacing()));
    const double after = mean(tre(c.landmarks, r.field, c.fixed.spacing()));
    Json report = to_json(r.report);
    report["case_id"] = c.manifest.case_id;
    report["tre_before_mm"] = before;
    report["tre_after_mm"] = after;
    report["config"] = to_json(cfg);
    write_field(r.field, out / (c.manifest.case_id + ".nii.gz"));
    write_json_file(report, out / (c.manifest.case_id + ".json"));
    std::lock_guard<std::mutex> lock(io);
    std::printf("%s: TRE %.3f -> %.3f mm in %.1f s\n", c.manifest.case_id.c_str(), before, after, r.report.runtime_s);
  });
  return kOk;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> manifests;
  std::string fields;
  std::string initial;
  std::string out;
  int jobs = 1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::vector<CaseManifest> manifests;
  for (const auto& m : a.manifests) manifests.push_back(read_manifest(manifest_path(m)));

  std::vector<std::string> methods;
  if (!a.fields.empty()) {
    if (!fs::is_directory(a.fields)) throw IoError("fields directory not found: " + a.fields);
    for (const auto& e : fs::directory_iterator(a.fields))
      if (e.is_directory()) methods.push_back(e.path().filename().string());
    std::sort(methods.begin(), methods.end());
  }
  if (methods.empty() && a.initial.empty()) throw ArgumentError("nothing to evaluate: no method directories and no --initial");

  struct Job {
    std::size_t manifest;
    std::string method;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    if (!a.initial.empty()) jobs.push_back({i, a.initial});
    for (const auto& m : methods) jobs.push_back({i, m});
  }
  std::vector<CaseMetrics> rows(jobs.size());
  parallel_for(int(jobs.size()), a.jobs, [&](int j) {
    const Job& job = jobs[std::size_t(j)];
    const CaseManifest& man = manifests[job.manifest];
    CaseMetrics& row = rows[std::size_t(j)];
    row.case_id = man.case_id;
    row.method_id = job.method;
    try {
      const CaseData c = load_case(man);
      DisplacementFieldd field(c.fixed.dims(), c.fixed.spacing());
      double runtime = 0.0;
      if (job.method != a.initial) {
        const fs::path dir = fs::path(a.fields) / job.method;
        const fs::path fp = dir / (man.case_id + ".nii.gz");
        const fs::path fp_plain = dir / (man.case_id + ".nii");
        if (fs::exists(fp)) {
          field = read_field(fp);
        } else if (fs::exists(fp_plain)) {
          field = read_field(fp_plain);
        } else {
          throw IoError("missing field " + fp.string());
        }
        const fs::path rp = dir / (man.case_id + ".json");
        if (fs::exists(rp)) {
          const Json r = read_json_file(rp);
          if (r.contains("runtime_s")) runtime = r["runtime_s"].get<double>();
        }
      }
      CaseInputs in;
      in.case_id = man.case_id;
      in.method_id = job.method;
      in.fixed = &c.fixed;
      in.moving_labels = &c.labels_moving;
      in.fixed_labels = &c.labels_fixed;
      in.landmarks = &c.landmarks;
      in.field = &field;
      in.trunk = &c.trunk;
      in.runtime_s = runtime;
      row = evaluate_case(in);
    } catch (const Error& e) {
      row.failed = true;
      row.failure = e.what();
    }
  });

  MetricTable table;
  int failures = 0;
  for (auto& r : rows) {
    if (r.failed) {
      ++failures;
      std::cerr << "evaluate: " << r.method_id << "/" << r.case_id << " failed: " << r.failure << "\n";
    }
    table.add(std::move(r));
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  write_json_file(to_json(table), out / "metrics.json");
  write_text_file(per_label_csv(table), out / "per_label.csv");
  return failures ? kData : kOk;
}

// ---- rank ----------------------------------------------------------------

struct RankArgs {
  std::string table;
  std::string config;
  double alpha = -1.0;
  std::string out;
};

int cmd_rank(const RankArgs& a) {
  RankConfig cfg;
  if (!a.config.empty()) cfg = rank_config_from_json(read_json_file(a.config));
  if (a.alpha >= 0.0) cfg.alpha = a.alpha;
  cfg.validate();
  const MetricTable table = metric_table_from_json(read_json_file(a.table));
  const Leaderboard lb = leaderboard(table, cfg);
  const fs::path out(a.out);
  fs::create_directories(out);
  const std::string csv = render_csv(lb);
  write_text_file(csv, out / "leaderboard.csv");
  Json j = to_json(lb);
  j["config"] = to_json(cfg);
  write_json_file(j, out / "leaderboard.json");
  std::cout << csv;
  return kOk;
}

// ---- convert -------------------------------------------------------------

struct ConvertArgs {
  std::string in, out;
  std::vector<int> dims;
  std::vector<double> spacing = {1.0, 1.0, 1.0};
};

int cmd_convert(const ConvertArgs& a) {
  const fs::path in(a.in), out(a.out);
  if (has_suffix(in, ".raw")) {
    if (a.dims.size() != 3 || a.spacing.size() != 3) throw ArgumentError("raw input needs --dims x y z and --spacing");
    const DisplacementFieldd f = read_field_raw(in, Dims3(a.dims[0], a.dims[1], a.dims[2]),
                                                Eigen::Vector3d(a.spacing[0], a.spacing[1], a.spacing[2]));
    write_field(f, out);
    return kOk;
  }
  const NiftiImage header = read_nifti(in);
  const bool is_field = header.dim[0] == 5 && header.dim[5] == 3;
  if (is_field) {
    const DisplacementFieldd f = read_field(in);
    if (has_suffix(out, ".raw")) {
      write_field_raw(f, out);
    } else {
      write_field(f, out);
    }
    return kOk;
  }
  if (has_suffix(out, ".raw")) throw ArgumentError("raw output is only supported for displacement fields");
  switch (header.datatype) {
    case NiftiType::UInt8: write_nifti(read_trunk(in), out); break;
    case NiftiType::UInt16: write_nifti(read_labels(in), out); break;
    default: write_nifti(read_volume(in), out); break;
  }
  return kOk;
}

// ---- keypoints -----------------------------------------------------------

struct KeypointArgs {
  std::string image, mask, out;
  KeypointParams params;
};

int cmd_keypoints(const KeypointArgs& a) {
  const Volume v = read_volume(a.image);
  TrunkMask mask(v.dims(), v.spacing(), 1);
  if (!a.mask.empty()) mask = read_trunk(a.mask);
  const KeypointSet kps = foerstner_keypoints(v, mask, a.params);
  write_keypoints_csv(kps, a.out);
  std::cout << kps.size() << " keypoints\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volreg: volumetric registration toolkit"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "Generate synthetic paired FBCT/CBCT phantom cases");
  ph->add_option("--cases", pa.cases, "Number of cases")->capture_default_str();
  ph->add_option("--seed", pa.seed, "Base seed; case k uses seed + k")->capture_default_str();
  ph->add_option("--dims", pa.dims, "Grid size, one or three integers")->capture_default_str();
  ph->add_option("--magnitude", pa.magnitude, "Peak velocity magnitude in voxels")->capture_default_str();
  ph->add_flag("--no-cbct", pa.no_cbct, "Leave the moving image undegraded");
  ph->add_option("--config", pa.config, "Phantom config JSON");
  ph->add_option("--out", pa.out, "Output directory")->required();
  ph->add_flag("--force", pa.force, "Write into a non-empty output directory");
  ph->add_option("--jobs", pa.jobs, "Parallel cases")->capture_default_str();

  RegisterArgs ra;
  auto* rg = app.add_subcommand("register", "Register case pairs with the baseline registrar");
  rg->add_option("--manifest", ra.manifests, "Case manifest(s) or case directories")->required();
  rg->add_option("--config", ra.config, "Registration config JSON");
  rg->add_option("--out", ra.out, "Output directory for <case_id>.nii.gz and <case_id>.json")->required();
  rg->add_option("--jobs", ra.jobs, "Parallel cases")->capture_default_str();

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Compute metrics for fields under <fields>/<method>/<case_id>.nii.gz");
  ev->add_option("--manifest", ea.manifests, "Case manifest(s) or case directories")->required();
  ev->add_option("--fields", ea.fields, "Directory of method subdirectories");
  ev->add_option("--initial", ea.initial, "Also evaluate the identity field under this method name");
  ev->add_option("--out", ea.out, "Output directory")->required();
  ev->add_option("--jobs", ea.jobs, "Parallel evaluations")->capture_default_str();

  RankArgs ka;
  auto* rk = app.add_subcommand("rank", "Rank methods from a metrics table");
  rk->add_option("--table", ka.table, "metrics.json from evaluate")->required();
  rk->add_option("--config", ka.config, "Rank config JSON");
  rk->add_option("--alpha", ka.alpha, "Override the significance level");
  rk->add_option("--out", ka.out, "Output directory")->required();

  ConvertArgs ca;
  auto* cv = app.add_subcommand("convert", "Convert between .nii, .nii.gz and raw field files");
  cv->add_option("--in", ca.in, "Input file")->required();
  cv->add_option("--out", ca.out, "Output file")->required();
  cv->add_option("--dims", ca.dims, "Grid size of a raw input")->expected(3);
  cv->add_option("--spacing", ca.spacing, "Spacing of a raw input")->expected(3)->capture_default_str();

  KeypointArgs kp;
  auto* kc = app.add_subcommand("keypoints", "Export Foerstner keypoints as CSV");
  kc->add_option("--image", kp.image, "Input volume")->required();
  kc->add_option("--mask", kp.mask, "Restrict to this binary mask");
  kc->add_option("--sigma", kp.params.sigma, "Structure tensor scale")->capture_default_str();
  kc->add_option("--nms-radius", kp.params.nms_radius, "Suppression radius")->capture_default_str();
  kc->add_option("--max-count", kp.params.max_count, "Keep at most this many")->capture_default_str();
  kc->add_option("--out", kp.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*ph) return cmd_phantom(pa);
    if (*rg) return cmd_register(ra);
    if (*ev) return cmd_evaluate(ea);
    if (*rk) return cmd_rank(ka);
    if (*cv) return cmd_convert(ca);
    if (*kc) return cmd_keypoints(kp);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const RegistrationFailedError& e) {
    std::cerr << "registration failed: " << e.what() << "\n";
    return kNumerical;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
    return kNumerical;
  } catch (const DegenerateConfigurationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
