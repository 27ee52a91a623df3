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

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "volreg/features.hpp"
#include "volreg/field.hpp"
#include "volreg/tps.hpp"

namespace volreg {

struct RegistrationConfig {
  // Intensity window applied to both images before anything else.
  float clamp_lo = -1024.0f;
  float clamp_hi = 2048.0f;

  KeypointParams keypoints{1.4, 3, 1536};
  MindParams mind{1, 2};

  // Discrete stage: exhaustive search over a quantised displacement cube.
  int search_radius = 7;
  int quantization = 1;
  int match_patch_radius = 1;

  // Coupled selection: alpha doubles every iteration.
  double coupling_alpha = 0.02;
  int coupling_iters = 4;
  int coupling_neighbors = 10;

  double tps_lambda = 0.5;

  // Instance optimisation (Adam on the dense field, half resolution by default).
  bool instance_optimization = true;
  bool io_half_resolution = true;
  double io_lr = 0.05;
  int io_iters = 700;
  double io_reg_weight = 0.5;
  bool io_step_halving = true;

  int smooth_window = 3;
  int smooth_repeats = 2;

  void validate() const;
};

// Descriptor SSD of every candidate displacement for every usable keypoint.
struct CostTensor {
  int search_radius = 0;
  int quantization = 1;
  std::vector<Eigen::Vector3i> candidates;  // side^3 displacements, x fastest
  std::vector<Eigen::Vector3d> points;      // usable keypoints (fixed grid)
  std::vector<int> keypoint_index;          // index into the input KeypointSet
  Eigen::MatrixXf costs;                    // candidates x points
  int skipped = 0;                          // keypoints too close to the border

  int side() const { return 2 * search_radius / quantization + 1; }
  Eigen::Index num_points() const { return costs.cols(); }
};

// Mean descriptor SSD over a (2*patch_radius+1)^3 patch around each keypoint,
// for displacements {-R, -R+q, ..., R}^3. Keypoints closer than
// R + patch_radius to a face are skipped and counted.
CostTensor discrete_match(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                          const KeypointSet& kps, int search_radius, int quantization,
                          int patch_radius = 0);

// Alternates per-keypoint argmin of cost(d) + alpha * |d - dbar|^2 with
// recomputing dbar as the inverse-distance-weighted mean of the `neighbors`
// nearest other keypoints. Alpha doubles each iteration.
SparseDisplacements coupled_select(const CostTensor& costs, double alpha, int iters, int neighbors = 10);

// Mean descriptor SSD of the pulled-back moving descriptors against the fixed
// ones plus reg_weight times the mean squared forward difference of u.
class InstanceObjective {
 public:
  InstanceObjective(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                    double reg_weight);

  double value(const DisplacementFieldd& u) const;
  // Fills `grad` (3 x N) with dE/du.
  double value_and_gradient(const DisplacementFieldd& u, Eigen::Matrix3Xd& grad) const;

 private:
  double similarity(const DisplacementFieldd& u, Eigen::Matrix3Xd* grad) const;
  double regularizer(const DisplacementFieldd& u, Eigen::Matrix3Xd* grad) const;

  const DescriptorVolume& fixed_;
  const DescriptorVolume& moving_;
  double reg_weight_;
};

struct InstanceResult {
  DisplacementFieldd field;
  std::vector<double> trace;  // objective after each iteration (trace[0] = entry)
  int halvings = 0;
};

InstanceResult instance_optimize(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                                 const DisplacementFieldd& init, const RegistrationConfig& cfg);

struct RunReport {
  double runtime_s = 0.0;
  std::vector<std::pair<std::string, double>> stage_seconds;
  int keypoints = 0;
  int matched = 0;
  int skipped = 0;
  double io_objective_start = 0.0;
  double io_objective_end = 0.0;
  int io_halvings = 0;
};

struct RegistrationResult {
  DisplacementFieldd field;
  RunReport report;
};

// clamp -> descriptors -> keypoints(fixed, trunk) -> discrete_match ->
// coupled_select -> tps_densify -> instance_optimize -> smooth_field.
RegistrationResult register_pair(const Volume& fixed, const Volume& moving, const TrunkMask& trunk,
                                 const RegistrationConfig& cfg);

}  // namespace volreg
