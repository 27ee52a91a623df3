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
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "volreg/image.hpp"
#include "volreg/interpolate.hpp"

namespace volreg {

struct DisplacementTag {};
struct VelocityTag {};

// Dense 3-vector field on a voxel grid; vectors are in voxel units and stored
// column-wise (one column per voxel, x fastest). The tag separates
// displacements from stationary velocities at the type level.
template <typename T, typename Tag>
class VectorField {
 public:
  using Scalar = T;
  using Vector = Eigen::Matrix<T, 3, 1>;
  using Storage = Eigen::Matrix<T, 3, Eigen::Dynamic>;

  VectorField() : dims_(0, 0, 0), spacing_(1, 1, 1) {}

  explicit VectorField(const Dims3& dims,
                       const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones())
      : dims_(dims), spacing_(spacing) {
    check_dims(dims_);
    check_spacing(spacing_);
    u_.setZero(3, voxel_count(dims_));
  }

  static VectorField Zero(const Dims3& dims,
                          const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones()) {
    return VectorField(dims, spacing);
  }

  static VectorField Constant(const Dims3& dims, const Vector& t,
                              const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones()) {
    VectorField f(dims, spacing);
    f.u_.colwise() = t;
    return f;
  }

  const Dims3& dims() const { return dims_; }
  const Eigen::Vector3d& spacing() const { return spacing_; }
  Eigen::Index size() const { return u_.cols(); }

  Eigen::Index index(int x, int y, int z) const {
    return x + Eigen::Index(dims_.x()) * (y + Eigen::Index(dims_.y()) * z);
  }

  Storage& vectors() { return u_; }
  const Storage& vectors() const { return u_; }

  auto operator()(int x, int y, int z) { return u_.col(index(x, y, z)); }
  auto operator()(int x, int y, int z) const { return u_.col(index(x, y, z)); }
  auto operator[](Eigen::Index i) { return u_.col(i); }
  auto operator[](Eigen::Index i) const { return u_.col(i); }

  // Trilinear sample with edge replication outside the grid.
  Eigen::Vector3d sample(const Eigen::Vector3d& p) const {
    const TrilinearStencil s = trilinear_stencil(dims_, p);
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (int k = 0; k < 8; ++k) v += s.weight[k] * u_.col(s.corner[k]).template cast<double>();
    return v;
  }

  bool all_finite() const { return u_.allFinite(); }

  VectorField operator-() const {
    VectorField r = *this;
    r.u_ = -u_;
    return r;
  }
  VectorField operator*(T s) const {
    VectorField r = *this;
    r.u_ *= s;
    return r;
  }
  VectorField operator+(const VectorField& o) const {
    require_same_grid(*this, o, "field addition");
    VectorField r = *this;
    r.u_ += o.u_;
    return r;
  }

  template <typename U>
  VectorField<U, Tag> cast() const {
    VectorField<U, Tag> r(dims_, spacing_);
    r.vectors() = u_.template cast<U>();
    return r;
  }

 private:
  Dims3 dims_;
  Eigen::Vector3d spacing_;
  Storage u_;
};

template <typename T>
using DisplacementField = VectorField<T, DisplacementTag>;
template <typename T>
using VelocityField = VectorField<T, VelocityTag>;

using DisplacementFieldd = DisplacementField<double>;
using DisplacementFieldf = DisplacementField<float>;
using VelocityFieldd = VelocityField<double>;

template <typename T>
DisplacementField<T> as_displacement(const VelocityField<T>& v) {
  DisplacementField<T> d(v.dims(), v.spacing());
  d.vectors() = v.vectors();
  return d;
}

template <typename T>
VelocityField<T> as_velocity(const DisplacementField<T>& f) {
  VelocityField<T> v(f.dims(), f.spacing());
  v.vectors() = f.vectors();
  return v;
}

enum class Interp { Trilinear, Nearest };

// Pull-back warp: out(x) = moving(x + u(x)). Samples outside the voxel extent
// of `moving` take `fill`.
template <typename V, typename T>
Image<V> warp(const Image<V>& moving, const DisplacementField<T>& field, Interp interp,
              V fill) {
  Image<V> out(field.dims(), field.spacing(), fill);
  const Dims3& d = field.dims();
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Index i = out.index(x, y, z);
        const Eigen::Vector3d p = Eigen::Vector3d(x, y, z) + field[i].template cast<double>();
        if (!moving.contains(p)) continue;
        if (interp == Interp::Nearest) {
          out[i] = sample_nearest(moving, p);
        } else {
          const double v = sample_trilinear(moving, p);
          if constexpr (std::is_integral_v<V>) {
            out[i] = V(std::lround(v));
          } else {
            out[i] = V(v);
          }
        }
      }
  return out;
}

// (f o g)(x) = g(x) + f(x + g(x)).
template <typename T, typename Tag>
VectorField<T, Tag> compose(const VectorField<T, Tag>& f, const VectorField<T, Tag>& g) {
  require_same_grid(f, g, "compose");
  VectorField<T, Tag> out(g.dims(), g.spacing());
  const Dims3& d = g.dims();
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Index i = g.index(x, y, z);
        const Eigen::Vector3d gi = g[i].template cast<double>();
        const Eigen::Vector3d fi = f.sample(Eigen::Vector3d(x, y, z) + gi);
        out[i] = (gi + fi).template cast<T>();
      }
  return out;
}

namespace detail {

// d(x + u)_c / d x_a at voxel (x,y,z): central differences inside, one-sided at faces.
template <typename T, typename Tag>
Eigen::Matrix3d deformation_gradient(const VectorField<T, Tag>& f, int x, int y, int z) {
  Eigen::Matrix3d J;
  const int c[3] = {x, y, z};
  for (int a = 0; a < 3; ++a) {
    const int n = f.dims()[a];
    int lo[3] = {c[0], c[1], c[2]}, hi[3] = {c[0], c[1], c[2]};
    double h = 2.0;
    if (n == 1) {
      J.col(a) = Eigen::Vector3d::Zero();
      J(a, a) += 1.0;
      continue;
    }
    if (c[a] == 0) {
      hi[a] = 1, lo[a] = 0, h = 1.0;
    } else if (c[a] == n - 1) {
      hi[a] = n - 1, lo[a] = n - 2, h = 1.0;
    } else {
      hi[a] = c[a] + 1, lo[a] = c[a] - 1;
    }
    const Eigen::Vector3d du =
        (f(hi[0], hi[1], hi[2]).template cast<double>() - f(lo[0], lo[1], lo[2]).template cast<double>()) / h;
    J.col(a) = du;
    J(a, a) += 1.0;
  }
  return J;
}

}  // namespace detail

// Per-voxel determinant of the Jacobian of x + u(x).
template <typename T>
Image<T> jacobian_determinant(const DisplacementField<T>& field) {
  Image<T> det(field.dims(), field.spacing(), T(0));
  const Dims3& d = field.dims();
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        det(x, y, z) = T(detail::deformation_gradient(field, x, y, z).determinant());
      }
  return det;
}

inline constexpr double kLogJacobianFloor = 1e-6;

namespace detail {

template <typename T>
double sdlogj_impl(const DisplacementField<T>& field, const TrunkMask* mask) {
  const Image<T> det = jacobian_determinant(field);
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < det.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    sum += std::log(std::max(double(det[i]), kLogJacobianFloor));
    ++n;
  }
  if (n == 0) throw ArgumentError("sdlogj: mask selects no voxels");
  const double mean = sum / n;
  // Two-pass variance for stability.
  double acc = 0.0;
  for (Eigen::Index i = 0; i < det.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    const double l = std::log(std::max(double(det[i]), kLogJacobianFloor)) - mean;
    acc += l * l;
  }
  return std::sqrt(acc / n);
}

}  // namespace detail

// Population standard deviation of log(max(det J, 1e-6)).
template <typename T>
double sdlogj(const DisplacementField<T>& field) {
  return detail::sdlogj_impl(field, nullptr);
}

template <typename T>
double sdlogj(const DisplacementField<T>& field, const TrunkMask& mask) {
  require_same_grid(field, mask, "sdlogj");
  return detail::sdlogj_impl(field, &mask);
}

inline constexpr int kDefaultSvfSteps = 7;

// Scaling and squaring: phi = v / 2^steps, then phi <- phi o phi, `steps` times.
template <typename T>
DisplacementField<T> exp_svf(const VelocityField<T>& v, int steps = kDefaultSvfSteps) {
  if (steps < 1) throw ArgumentError("exp_svf: steps must be >= 1");
  DisplacementField<T> phi = as_displacement(v) * T(std::ldexp(1.0, -steps));
  for (int s = 0; s < steps; ++s) phi = compose(phi, phi);
  return phi;
}

template <typename T>
DisplacementField<T> sqrt_field(const VelocityField<T>& v, int steps = kDefaultSvfSteps) {
  return exp_svf(v * T(0.5), steps);
}

// Two-step inverse-consistent composition sqrt(Phi) o Psi o sqrt(Phi).
template <typename T>
DisplacementField<T> tsc_compose(const VelocityField<T>& phi_v, const VelocityField<T>& psi_v,
                                 int steps = kDefaultSvfSteps) {
  require_same_grid(phi_v, psi_v, "tsc_compose");
  const DisplacementField<T> root = sqrt_field(phi_v, steps);
  const DisplacementField<T> psi = exp_svf(psi_v, steps);
  return compose(root, compose(psi, root));
}

// Mean Euclidean norm (voxels) of f_ab o f_ba over the mask.
template <typename T>
double inverse_consistency_error(const DisplacementField<T>& f_ab,
                                 const DisplacementField<T>& f_ba, const TrunkMask& mask) {
  require_same_grid(f_ab, f_ba, "inverse_consistency_error");
  require_same_grid(f_ab, mask, "inverse_consistency_error mask");
  const DisplacementField<T> c = compose(f_ab, f_ba);
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (mask[i] == 0) continue;
    sum += c[i].template cast<double>().norm();
    ++n;
  }
  if (n == 0) throw ArgumentError("inverse_consistency_error: empty mask");
  return sum / n;
}

namespace detail {

// Box mean of odd width along one axis with edge replication; running sum.
template <typename T, typename Tag>
void box_mean_axis(VectorField<T, Tag>& f, int axis, int radius) {
  const Dims3 d = f.dims();
  const int n = d[axis];
  const Eigen::Index stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(d.x()) : Eigen::Index(d.x()) * d.y();
  const double inv = 1.0 / (2 * radius + 1);
  std::vector<Eigen::Vector3d> line(n), out(n);
  int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  for (int j = 0; j < d[o2]; ++j)
    for (int i = 0; i < d[o1]; ++i) {
      int c[3] = {0, 0, 0};
      c[o1] = i, c[o2] = j;
      const Eigen::Index base = f.index(c[0], c[1], c[2]);
      for (int k = 0; k < n; ++k) line[k] = f[base + k * stride].template cast<double>();
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int k = -radius; k <= radius; ++k) acc += line[std::clamp(k, 0, n - 1)];
      for (int k = 0; k < n; ++k) {
        out[k] = acc * inv;
        acc += line[std::min(k + radius + 1, n - 1)] - line[std::max(k - radius, 0)];
      }
      for (int k = 0; k < n; ++k) f[base + k * stride] = out[k].template cast<T>();
    }
}

}  // namespace detail

// Separable box-mean filter per component, edge-replicated, applied `repeats` times.
template <typename T, typename Tag>
VectorField<T, Tag> smooth_field(const VectorField<T, Tag>& f, int window, int repeats = 1) {
  if (window < 1 || window % 2 == 0) throw ArgumentError("smooth_field: window must be odd and >= 1");
  if (repeats < 0) throw ArgumentError("smooth_field: repeats must be >= 0");
  VectorField<T, Tag> out = f;
  if (window == 1) return out;
  for (int r = 0; r < repeats; ++r)
    for (int a = 0; a < 3; ++a) detail::box_mean_axis(out, a, window / 2);
  return out;
}

// Anisotropic total variation: sum of |forward differences| over axes and components.
template <typename T, typename Tag>
double total_variation(const VectorField<T, Tag>& f) {
  const Dims3& d = f.dims();
  double tv = 0.0;
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const auto u = f(x, y, z);
        if (x + 1 < d.x()) tv += (f(x + 1, y, z) - u).template cast<double>().cwiseAbs().sum();
        if (y + 1 < d.y()) tv += (f(x, y + 1, z) - u).template cast<double>().cwiseAbs().sum();
        if (z + 1 < d.z()) tv += (f(x, y, z + 1) - u).template cast<double>().cwiseAbs().sum();
      }
  return tv;
}

template <typename T, typename Tag>
double mean_magnitude(const VectorField<T, Tag>& f, const TrunkMask* mask = nullptr) {
  double s = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    s += f[i].template cast<double>().norm();
    ++n;
  }
  return n ? s / n : 0.0;
}

// Resample a displacement field defined on a half-resolution grid (voxel i
// centred at full-resolution coordinate 2i + 0.5) onto `full_dims`, scaling
// vectors by 2.
template <typename T>
DisplacementField<T> upsample2_field(const DisplacementField<T>& half, const Dims3& full_dims,
                                     const Eigen::Vector3d& full_spacing) {
  DisplacementField<T> out(full_dims, full_spacing);
  for (int z = 0; z < full_dims.z(); ++z)
    for (int y = 0; y < full_dims.y(); ++y)
      for (int x = 0; x < full_dims.x(); ++x) {
        const Eigen::Vector3d p = (Eigen::Vector3d(x, y, z).array() - 0.5) / 2.0;
        out(x, y, z) = (2.0 * half.sample(p)).template cast<T>();
      }
  return out;
}

}  // namespace volreg
