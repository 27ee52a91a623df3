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

#include <algorithm>
#include <cmath>
#include <limits>

#include "volreg/image.hpp"
#include "volreg/interpolate.hpp"

namespace volreg {

namespace detail {

template <typename T, typename Sampler>
Image<T> resample_with(const Image<T>& v, const Eigen::Vector3d& new_spacing, Sampler&& sample) {
  if (!new_spacing.allFinite() || (new_spacing.array() <= 0.0).any()) {
    throw ArgumentError("resample: new spacing must be strictly positive");
  }
  const Eigen::Vector3d ratio = (new_spacing.array() / v.spacing().array()).matrix();
  Dims3 dims;
  for (int a = 0; a < 3; ++a) {
    dims[a] = std::max(1, int(std::lround(v.dims()[a] * v.spacing()[a] / new_spacing[a])));
  }
  Image<T> out(dims, new_spacing);
  out.set_origin(v.origin());
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) {
        const Eigen::Vector3d p = (Eigen::Vector3d(x, y, z).array() * ratio.array()).matrix();
        out(x, y, z) = sample(v, p);
      }
  return out;
}

}  // namespace detail

// Trilinear resampling to a new voxel spacing; voxel 0 stays anchored at the
// origin, so output voxel i maps to input coordinate i * new/old.
inline Volume resample(const Volume& v, const Eigen::Vector3d& new_spacing) {
  return detail::resample_with(v, new_spacing, [](const Volume& img, const Eigen::Vector3d& p) {
    return float(sample_trilinear(img, p));
  });
}

inline LabelMask resample(const LabelMask& v, const Eigen::Vector3d& new_spacing) {
  return detail::resample_with(v, new_spacing, [](const LabelMask& img, const Eigen::Vector3d& p) {
    return sample_nearest(img, p);
  });
}

template <typename T>
struct CropPadResult {
  Image<T> image;
  // Input voxel c lands at output voxel c + offset; add it to landmark coordinates.
  Eigen::Vector3i offset;
};

// Centred crop or symmetric pad to `target_dims`. Offsets truncate toward zero
// so that cropping and padding back are exact inverses on the overlap.
template <typename T>
CropPadResult<T> crop_pad(const Image<T>& v, const Dims3& target_dims, T fill) {
  check_dims(target_dims, "crop_pad target dims");
  const Eigen::Vector3i offset = (target_dims - v.dims()) / 2;
  Image<T> out(target_dims, v.spacing(), fill);
  out.set_origin(v.origin() - (offset.cast<double>().array() * v.spacing().array()).matrix());
  for (int z = 0; z < target_dims.z(); ++z)
    for (int y = 0; y < target_dims.y(); ++y)
      for (int x = 0; x < target_dims.x(); ++x) {
        const int sx = x - offset.x(), sy = y - offset.y(), sz = z - offset.z();
        if (v.in_bounds(sx, sy, sz)) out(x, y, z) = v(sx, sy, sz);
      }
  return {std::move(out), offset};
}

// Clamp every intensity into [lo, hi]. Infinite bounds disable that side.
inline Volume clamp_intensity(const Volume& v, float lo, float hi) {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw ArgumentError("clamp_intensity: requires lo <= hi");
  }
  Volume out = v;
  out.data() = out.data().max(lo).min(hi);
  return out;
}

}  // namespace volreg
