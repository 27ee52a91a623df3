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

#include "volreg/image.hpp"

namespace volreg {

// Eight-corner trilinear stencil with coordinates clamped into the grid
// (edge replication). `dweight[a][k]` is d weight[k] / d p[a]; it is zero along
// an axis whose coordinate was clamped.
struct TrilinearStencil {
  Eigen::Index corner[8];
  double weight[8];
  double dweight[3][8];
};

namespace detail {

struct AxisCell {
  int i0, i1;
  double f;
  bool clamped;
};

inline AxisCell axis_cell(double p, int n) {
  AxisCell c{0, 0, 0.0, false};
  if (n == 1) {
    c.clamped = true;
    return c;
  }
  if (std::isnan(p)) {
    // Valid indices, NaN weights: the sample propagates NaN.
    c.i0 = 0, c.i1 = 1, c.f = p;
    return c;
  }
  if (p <= 0.0) {
    c.i0 = 0, c.i1 = 1, c.f = 0.0, c.clamped = p < 0.0;
    return c;
  }
  if (p >= n - 1) {
    c.i0 = n - 2, c.i1 = n - 1, c.f = 1.0, c.clamped = p > n - 1;
    return c;
  }
  const double fl = std::floor(p);
  c.i0 = std::min(int(fl), n - 2);
  c.i1 = c.i0 + 1;
  c.f = p - c.i0;
  return c;
}

}  // namespace detail

inline TrilinearStencil trilinear_stencil(const Dims3& dims, const Eigen::Vector3d& p) {
  const detail::AxisCell cx = detail::axis_cell(p.x(), dims.x());
  const detail::AxisCell cy = detail::axis_cell(p.y(), dims.y());
  const detail::AxisCell cz = detail::axis_cell(p.z(), dims.z());
  const double wx[2] = {1.0 - cx.f, cx.f};
  const double wy[2] = {1.0 - cy.f, cy.f};
  const double wz[2] = {1.0 - cz.f, cz.f};
  const double dx[2] = {cx.clamped ? 0.0 : -1.0, cx.clamped ? 0.0 : 1.0};
  const double dy[2] = {cy.clamped ? 0.0 : -1.0, cy.clamped ? 0.0 : 1.0};
  const double dz[2] = {cz.clamped ? 0.0 : -1.0, cz.clamped ? 0.0 : 1.0};
  const int ix[2] = {cx.i0, cx.i1}, iy[2] = {cy.i0, cy.i1}, iz[2] = {cz.i0, cz.i1};
  const Eigen::Index nx = dims.x(), nxy = nx * dims.y();

  TrilinearStencil s;
  int k = 0;
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a, ++k) {
        s.corner[k] = ix[a] + nx * iy[b] + nxy * iz[c];
        s.weight[k] = wx[a] * wy[b] * wz[c];
        s.dweight[0][k] = dx[a] * wy[b] * wz[c];
        s.dweight[1][k] = wx[a] * dy[b] * wz[c];
        s.dweight[2][k] = wx[a] * wy[b] * dz[c];
      }
  return s;
}

template <typename T>
double sample_trilinear(const Image<T>& img, const Eigen::Vector3d& p) {
  const TrilinearStencil s = trilinear_stencil(img.dims(), p);
  double v = 0.0;
  for (int k = 0; k < 8; ++k) v += s.weight[k] * double(img[s.corner[k]]);
  return v;
}

template <typename T>
T sample_nearest(const Image<T>& img, const Eigen::Vector3d& p) {
  int c[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = std::clamp(int(std::lround(p[a])), 0, img.dims()[a] - 1);
  }
  return img(c[0], c[1], c[2]);
}

}  // namespace volreg
