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

#include "volreg/tps.hpp"

#include <cmath>

#include <Eigen/LU>
#include <Eigen/QR>

#include "volreg/error.hpp"

namespace volreg {

ThinPlateSpline::ThinPlateSpline(const SparseDisplacements& sd, double lambda) {
  if (sd.points.size() != sd.vectors.size()) {
    throw ArgumentError("tps: points and vectors differ in length");
  }
  if (!(lambda >= 0.0)) throw ArgumentError("tps: lambda must be nonnegative");
  const Eigen::Index n = Eigen::Index(sd.points.size());
  if (n < 4) throw DegenerateConfigurationError("tps: need at least 4 control points");

  centers_.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) centers_.col(i) = sd.points[std::size_t(i)];

  // Affine completeness: the [1 x y z] block must have full column rank.
  Eigen::Matrix<double, Eigen::Dynamic, 4> P(n, 4);
  P.col(0).setOnes();
  P.rightCols<3>() = centers_.transpose();
  const Eigen::Vector3d mean = centers_.rowwise().mean();
  Eigen::Matrix<double, Eigen::Dynamic, 3> centred = (centers_.colwise() - mean).transpose();
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 3>> qr(centred);
  qr.setThreshold(1e-9);
  if (qr.rank() < 3) throw DegenerateConfigurationError("tps: control points are coplanar");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 4, n + 4);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double r = (centers_.col(i) - centers_.col(j)).norm();
      A(i, j) = r;
      A(j, i) = r;
    }
    A(j, j) = lambda;
  }
  A.topRightCorner(n, 4) = P;
  A.bottomLeftCorner(4, n) = P.transpose();

  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 4, 3);
  for (Eigen::Index i = 0; i < n; ++i) rhs.row(i) = sd.vectors[std::size_t(i)].transpose();

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  const Eigen::MatrixXd sol = lu.solve(rhs);
  if (!sol.allFinite() || (A * sol - rhs).norm() > 1e-6 * (1.0 + rhs.norm())) {
    throw DegenerateConfigurationError("tps: singular system");
  }
  weights_ = sol.topRows(n);
  affine_ = sol.bottomRows<4>();
}

Eigen::Vector3d ThinPlateSpline::operator()(const Eigen::Vector3d& p) const {
  Eigen::Vector3d v = affine_.row(0).transpose() + affine_.bottomRows<3>().transpose() * p;
  for (Eigen::Index i = 0; i < centers_.cols(); ++i) {
    v += (centers_.col(i) - p).norm() * weights_.row(i).transpose();
  }
  return v;
}

DisplacementFieldd tps_densify(const SparseDisplacements& sd, const Dims3& dims, double lambda,
                               const Eigen::Vector3d& spacing) {
  for (const auto& p : sd.points) {
    for (int a = 0; a < 3; ++a) {
      if (!(p[a] >= -0.5 && p[a] <= dims[a] - 0.5)) throw ArgumentError("tps_densify: control point outside grid");
    }
  }
  const ThinPlateSpline tps(sd, lambda);
  DisplacementFieldd out(dims, spacing);
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) out(x, y, z) = tps(Eigen::Vector3d(x, y, z));
  return out;
}

}  // namespace volreg
