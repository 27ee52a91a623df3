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

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "volreg/image.hpp"

namespace volreg {

// Landmark pair in voxel coordinates of the fixed and moving images respectively.
struct LandmarkPair {
  Eigen::Vector3d fixed;
  Eigen::Vector3d moving;
};

struct LandmarkSet {
  std::vector<LandmarkPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Throws ArgumentError naming the first pair outside either grid.
void check_landmarks(const LandmarkSet& lms, const Dims3& fixed_dims, const Dims3& moving_dims);

// CSV dialect: one "x,y,z" triple per line (extra columns ignored); blank
// lines and lines starting with '#' are skipped.
std::vector<Eigen::Vector3d> read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::vector<Eigen::Vector3d>& points, const std::filesystem::path& path,
                      int precision = 4);

// Fixed and moving files are paired line by line.
LandmarkSet read_landmarks(const std::filesystem::path& fixed_csv,
                           const std::filesystem::path& moving_csv);
void write_landmarks(const LandmarkSet& lms, const std::filesystem::path& fixed_csv,
                     const std::filesystem::path& moving_csv);

}  // namespace volreg
