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

#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include <Eigen/Core>

#include "volreg/error.hpp"

namespace volreg {

using Dims3 = Eigen::Vector3i;

inline Eigen::Index voxel_count(const Dims3& dims) {
  return Eigen::Index(dims.x()) * dims.y() * dims.z();
}

inline void check_dims(const Dims3& dims, const char* what = "dims") {
  if ((dims.array() <= 0).any()) {
    throw ArgumentError(std::string(what) + " must be strictly positive");
  }
}

inline void check_spacing(const Eigen::Vector3d& spacing) {
  if (!spacing.allFinite() || (spacing.array() <= 0.0).any()) {
    throw ArgumentError("spacing must be strictly positive");
  }
}

// Dense scalar grid, x fastest (NIfTI order). Spacing is mm per voxel.
template <typename T>
class Image {
 public:
  using Scalar = T;
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Image() : dims_(0, 0, 0), spacing_(1, 1, 1), origin_(0, 0, 0) {}

  explicit Image(const Dims3& dims,
                 const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones(),
                 T value = T{})
      : dims_(dims), spacing_(spacing), origin_(Eigen::Vector3d::Zero()) {
    check_dims(dims_);
    check_spacing(spacing_);
    data_.setConstant(voxel_count(dims_), value);
  }

  const Dims3& dims() const { return dims_; }
  const Eigen::Vector3d& spacing() const { return spacing_; }
  const Eigen::Vector3d& origin() const { return origin_; }
  void set_spacing(const Eigen::Vector3d& s) {
    check_spacing(s);
    spacing_ = s;
  }
  void set_origin(const Eigen::Vector3d& o) { origin_ = o; }

  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Eigen::Index index(int x, int y, int z) const {
    return x + Eigen::Index(dims_.x()) * (y + Eigen::Index(dims_.y()) * z);
  }
  Dims3 coord(Eigen::Index i) const {
    const Eigen::Index nx = dims_.x(), ny = dims_.y();
    return Dims3(int(i % nx), int((i / nx) % ny), int(i / (nx * ny)));
  }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.x() && y < dims_.y() && z < dims_.z();
  }
  // Continuous coordinate inside the voxel extent [-0.5, n-0.5).
  bool contains(const Eigen::Vector3d& p) const {
    for (int a = 0; a < 3; ++a) {
      if (!(p[a] >= -0.5 && p[a] < dims_[a] - 0.5)) return false;
    }
    return true;
  }

  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](Eigen::Index i) { return data_[i]; }
  const T& operator[](Eigen::Index i) const { return data_[i]; }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

 private:
  Dims3 dims_;
  Eigen::Vector3d spacing_;
  Eigen::Vector3d origin_;
  Storage data_;
};

using Volume = Image<float>;
using LabelMask = Image<std::uint16_t>;
using TrunkMask = Image<std::uint8_t>;

template <typename A, typename B>
bool same_grid(const A& a, const B& b) {
  return a.dims() == b.dims();
}

template <typename A, typename B>
void require_same_grid(const A& a, const B& b, const char* what) {
  if (!same_grid(a, b)) throw ArgumentError(std::string(what) + ": dimension mismatch");
}

inline std::set<int> label_ids(const LabelMask& labels) {
  std::set<int> ids;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) ids.insert(labels[i]);
  }
  return ids;
}

inline void require_finite(const Volume& v) {
  if (!v.data().allFinite()) throw ArgumentError("volume contains non-finite intensities");
}

inline Eigen::Index mask_count(const TrunkMask& m) {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) n += m[i] != 0;
  return n;
}

// Binary mask selecting voxels at least `margin` voxels away from every face.
inline TrunkMask interior_mask(const Dims3& dims, int margin,
                               const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones()) {
  TrunkMask m(dims, spacing, 0);
  for (int z = margin; z < dims.z() - margin; ++z)
    for (int y = margin; y < dims.y() - margin; ++y)
      for (int x = margin; x < dims.x() - margin; ++x) m(x, y, z) = 1;
  return m;
}

}  // namespace volreg
