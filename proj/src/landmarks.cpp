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

#include "volreg/landmarks.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "volreg/error.hpp"

namespace volreg {
namespace {

bool inside(const Eigen::Vector3d& p, const Dims3& dims) {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0 && p[a] <= dims[a] - 1)) return false;
  }
  return true;
}

}  // namespace

void check_landmarks(const LandmarkSet& lms, const Dims3& fixed_dims, const Dims3& moving_dims) {
  if (lms.empty()) throw ArgumentError("landmark set is empty");
  for (std::size_t i = 0; i < lms.size(); ++i) {
    if (!inside(lms.pairs[i].fixed, fixed_dims)) {
      throw ArgumentError("landmark " + std::to_string(i) + ": fixed point outside the fixed grid");
    }
    if (!inside(lms.pairs[i].moving, moving_dims)) {
      throw ArgumentError("landmark " + std::to_string(i) + ": moving point outside the moving grid");
    }
  }
}

std::vector<Eigen::Vector3d> read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark file " + path.string());
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Eigen::Vector3d p;
    std::string tok;
    for (int a = 0; a < 3; ++a) {
      if (!std::getline(ss, tok, ',')) {
        throw MalformedFileError(path.string() + ":" + std::to_string(lineno) + ": expected x,y,z");
      }
      try {
        std::size_t used = 0;
        p[a] = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw MalformedFileError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    pts.push_back(p);
  }
  return pts;
}

void write_points_csv(const std::vector<Eigen::Vector3d>& points, const std::filesystem::path& path,
                      int precision) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.*f,%.*f,%.*f\n", precision, p.x(), precision, p.y(), precision, p.z());
    out << buf;
  }
  if (!out) throw IoError("write error in " + path.string());
}

LandmarkSet read_landmarks(const std::filesystem::path& fixed_csv,
                           const std::filesystem::path& moving_csv) {
  const auto f = read_points_csv(fixed_csv);
  const auto m = read_points_csv(moving_csv);
  if (f.size() != m.size()) {
    throw MalformedFileError("landmark files " + fixed_csv.string() + " and " + moving_csv.string() +
                             " have different lengths");
  }
  LandmarkSet lms;
  for (std::size_t i = 0; i < f.size(); ++i) lms.pairs.push_back({f[i], m[i]});
  return lms;
}

void write_landmarks(const LandmarkSet& lms, const std::filesystem::path& fixed_csv,
                     const std::filesystem::path& moving_csv) {
  std::vector<Eigen::Vector3d> f, m;
  for (const auto& p : lms.pairs) {
    f.push_back(p.fixed);
    m.push_back(p.moving);
  }
  write_points_csv(f, fixed_csv);
  write_points_csv(m, moving_csv);
}

}  // namespace volreg
