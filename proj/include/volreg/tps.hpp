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

#include <vector>

#include <Eigen/Core>

#include "volreg/field.hpp"

namespace volreg {

struct SparseDisplacements {
  std::vector<Eigen::Vector3d> points;   // fixed-grid voxel coordinates
  std::vector<Eigen::Vector3d> vectors;  // voxels

  std::size_t size() const { return points.size(); }
};

// 3-D thin-plate spline with kernel U(r) = r plus an affine term, fitted per
// displacement component. `lambda` is added to the kernel diagonal.
class ThinPlateSpline {
 public:
  ThinPlateSpline(const SparseDisplacements& sd, double lambda);

  Eigen::Vector3d operator()(const Eigen::Vector3d& p) const;

  const Eigen::Matrix<double, Eigen::Dynamic, 3>& kernel_weights() const { return weights_; }
  const Eigen::Matrix<double, 4, 3>& affine() const { return affine_; }

 private:
  Eigen::Matrix<double, 3, Eigen::Dynamic> centers_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> weights_;
  Eigen::Matrix<double, 4, 3> affine_;
};

// Dense field on `dims` from sparse displacements. Throws
// DegenerateConfigurationError for fewer than 4 or coplanar points.
DisplacementFieldd tps_densify(const SparseDisplacements& sd, const Dims3& dims, double lambda,
                               const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones());

}  // namespace volreg
