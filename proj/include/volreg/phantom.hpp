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
#include <set>
#include <string>

#include <Eigen/Core>

#include "volreg/field.hpp"
#include "volreg/image.hpp"
#include "volreg/landmarks.hpp"

namespace volreg {

// Phantom label values.
enum PhantomLabel : std::uint16_t {
  kLungLeft = 1,
  kLungRight = 2,
  kHeart = 3,
  kAirway = 4,
  kVertebra = 5,
  kRib = 6,
  kTumour = 7,
};

inline const std::set<int>& large_organ_labels() {
  static const std::set<int> labels = {kLungLeft, kLungRight, kHeart};
  return labels;
}

// HU-like intensities of the phantom scene.
struct Palette {
  float air = -1000.0f;
  float lung = -800.0f;
  float soft_tissue = 40.0f;
  float heart = 100.0f;
  float bone = 700.0f;
  float tumour = 60.0f;
  float airway_wall = 0.0f;
};

// Each effect is skipped when its amplitude (or radius) is zero.
struct CbctConfig {
  double contrast = 0.85;           // v -> contrast * v + bias
  double bias = 30.0;
  double blur_sigma = 0.6;          // voxels
  double ring_amplitude = 15.0;     // HU, concentric around the z axis
  double ring_period = 6.0;         // voxels
  double streak_amplitude = 20.0;   // HU, radial streaks
  int streak_count = 6;
  double noise_sigma = 40.0;        // HU, additive Gaussian
  double fov_radius = 0.92;         // fraction of the in-plane half extent; 0 disables
  float fill = -1000.0f;

  static CbctConfig none();
  bool any() const;
};

// Order: contrast/bias, blur, rings and streaks, noise, then the field-of-view
// cut, so every voxel outside the cylinder equals `fill` exactly.
Volume degrade_cbct(const Volume& v, const CbctConfig& cfg, std::uint64_t seed);

struct PhantomConfig {
  Dims3 dims = Dims3(96, 96, 96);
  Eigen::Vector3d spacing = Eigen::Vector3d::Constant(1.5);
  // Peak of the local velocity component in voxels; a global translation of
  // 0.6 times this length is added on top.
  double deform_magnitude = 5.0;
  bool cbct = true;
  CbctConfig cbct_config;
  Palette palette;
};

struct PhantomCase {
  std::uint64_t seed = 0;
  PhantomConfig config;
  double magnitude_used = 0.0;  // after retries
  int retries = 0;
  Volume fixed;
  Volume moving;
  LabelMask labels_fixed;
  LabelMask labels_moving;
  TrunkMask trunk;
  VelocityFieldd gt_velocity;
  DisplacementFieldd gt_field;  // fixed -> moving, pull-back
  LandmarkSet landmarks;
};

// Analytic thorax rendered twice: on the fixed grid and in the coordinates of
// the moving grid pulled through the inverse ground-truth map. Deterministic
// per seed.
PhantomCase make_phantom(std::uint64_t seed, const PhantomConfig& cfg);

inline PhantomCase make_phantom(std::uint64_t seed, const Dims3& dims, double deform_magnitude,
                                const CbctConfig& cbct) {
  PhantomConfig cfg;
  cfg.dims = dims;
  cfg.deform_magnitude = deform_magnitude;
  cfg.cbct = cbct.any();
  cfg.cbct_config = cbct;
  return make_phantom(seed, cfg);
}

}  // namespace volreg
