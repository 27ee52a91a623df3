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

struct KeypointSet {
  std::vector<Eigen::Vector3i> points;  // voxel coordinates
  std::vector<double> scores;           // nonincreasing

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct KeypointParams {
  double sigma = 1.4;
  int nms_radius = 3;
  int max_count = 2048;
};

// Foerstner distinctiveness det(S) / (trace(S)^2 + 1e-12) of the
// Gaussian-integrated structure tensor S, with gradients scaled by 1/spacing.
Image<double> foerstner_score(const Volume& v, double sigma);

// Local maxima of the score inside `mask`, greedily thinned so that accepted
// points are at least `nms_radius` apart (Chebyshev), best `max_count` kept.
KeypointSet foerstner_keypoints(const Volume& v, const TrunkMask& mask, double sigma, int nms_radius,
                                int max_count);

inline KeypointSet foerstner_keypoints(const Volume& v, const TrunkMask& mask, const KeypointParams& p) {
  return foerstner_keypoints(v, mask, p.sigma, p.nms_radius, p.max_count);
}

// "x,y,z,score" per line.
void write_keypoints_csv(const KeypointSet& kps, const std::filesystem::path& path);

inline constexpr int kMindChannels = 12;

// Per-voxel 12-channel self-similarity descriptor, channel values in (0, 1].
class DescriptorVolume {
 public:
  using Channels = Eigen::Matrix<float, kMindChannels, 1>;
  using Storage = Eigen::Matrix<float, kMindChannels, Eigen::Dynamic>;

  DescriptorVolume() : dims_(0, 0, 0) {}
  explicit DescriptorVolume(const Dims3& dims) : dims_(dims) {
    check_dims(dims);
    values_.setZero(kMindChannels, voxel_count(dims));
  }

  const Dims3& dims() const { return dims_; }
  Eigen::Index size() const { return values_.cols(); }
  Eigen::Index index(int x, int y, int z) const {
    return x + Eigen::Index(dims_.x()) * (y + Eigen::Index(dims_.y()) * z);
  }
  Storage& values() { return values_; }
  const Storage& values() const { return values_; }

  // Trilinear sample, coordinates clamped into the grid.
  Eigen::Matrix<double, kMindChannels, 1> sample(const Eigen::Vector3d& p) const;

 private:
  Dims3 dims_;
  Storage values_;
};

struct MindParams {
  int patch_radius = 1;
  int dilation = 2;
};

DescriptorVolume mind_descriptor(const Volume& v, int patch_radius = 1, int dilation = 2);

inline DescriptorVolume mind_descriptor(const Volume& v, const MindParams& p) {
  return mind_descriptor(v, p.patch_radius, p.dilation);
}

// Sum of squared channel differences between a@p and b@q (clamped trilinear).
double descriptor_ssd(const DescriptorVolume& a, const Eigen::Vector3d& p, const DescriptorVolume& b,
                      const Eigen::Vector3d& q);

// 2x2x2 block average; output dims are ceil(dims / 2).
DescriptorVolume downsample2(const DescriptorVolume& d);

}  // namespace volreg
