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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "volreg/field.hpp"
#include "volreg/image.hpp"

namespace volreg {

// NIfTI-1 datatype codes handled by the reader.
enum class NiftiType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
  Float64 = 64,
  UInt16 = 512,
};

inline constexpr std::int16_t kNiftiIntentVector = 1007;

// Decoded single-file NIfTI-1 image. `values` holds the scaled samples
// (scl_slope/scl_inter applied) in file order.
struct NiftiImage {
  std::array<std::int16_t, 8> dim{};
  std::array<float, 8> pixdim{};
  NiftiType datatype = NiftiType::Float32;
  std::int16_t intent_code = 0;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 12> srow{};  // read, not applied
  std::vector<double> values;

  Dims3 spatial_dims() const;
  Eigen::Vector3d spacing() const;
  Eigen::Vector3d origin() const;
};

NiftiImage read_nifti(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path);
LabelMask read_labels(const std::filesystem::path& path);
TrunkMask read_trunk(const std::filesystem::path& path);
// Expects dims [nx, ny, nz, 1, 3] (components in the trailing dimension).
DisplacementFieldd read_field(const std::filesystem::path& path);

// Volumes are written as float32, label masks as uint16, trunk masks as uint8,
// fields as float32 5-D vector images. A ".gz" suffix requests gzip output.
void write_nifti(const Volume& v, const std::filesystem::path& path);
void write_nifti(const LabelMask& v, const std::filesystem::path& path);
void write_nifti(const TrunkMask& v, const std::filesystem::path& path);
void write_field(const DisplacementFieldd& f, const std::filesystem::path& path);

// Headerless little-endian float32, planar ux, uy, uz blocks in x-fastest order.
void write_field_raw(const DisplacementFieldd& f, const std::filesystem::path& path);
DisplacementFieldd read_field_raw(const std::filesystem::path& path, const Dims3& dims,
                                  const Eigen::Vector3d& spacing);

}  // namespace volreg
