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
#include <vector>

#include "volreg/field.hpp"
#include "volreg/image.hpp"

namespace volreg {

// Normalised sampled Gaussian, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("gaussian kernel: sigma must be positive");
  const int r = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= s;
  return k;
}

namespace detail {

// Visits every 1-D line along `axis`: fn(base_index, stride, length).
template <typename Fn>
void for_each_line(const Dims3& d, int axis, Fn&& fn) {
  const Eigen::Index stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(d.x()) : Eigen::Index(d.x()) * d.y();
  const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  for (int j = 0; j < d[o2]; ++j)
    for (int i = 0; i < d[o1]; ++i) {
      int c[3] = {0, 0, 0};
      c[o1] = i, c[o2] = j;
      fn(c[0] + Eigen::Index(d.x()) * (c[1] + Eigen::Index(d.y()) * c[2]), stride, d[axis]);
    }
}

}  // namespace detail

// Separable convolution with edge replication (kernel centred, odd length).
template <typename T>
void convolve_axis(Image<T>& img, int axis, const std::vector<double>& kernel) {
  const int r = int(kernel.size()) / 2;
  std::vector<double> line;
  detail::for_each_line(img.dims(), axis, [&](Eigen::Index base, Eigen::Index stride, int n) {
    line.resize(n);
    for (int k = 0; k < n; ++k) line[k] = double(img[base + k * stride]);
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += kernel[t + r] * line[std::clamp(k + t, 0, n - 1)];
      img[base + k * stride] = T(acc);
    }
  });
}

template <typename T>
Image<T> gaussian_smooth(const Image<T>& img, double sigma) {
  Image<T> out = img;
  const auto k = gaussian_kernel(sigma);
  for (int a = 0; a < 3; ++a) convolve_axis(out, a, k);
  return out;
}

template <typename T, typename Tag>
VectorField<T, Tag> gaussian_smooth(const VectorField<T, Tag>& f, double sigma) {
  VectorField<T, Tag> out(f.dims(), f.spacing());
  const auto k = gaussian_kernel(sigma);
  for (int c = 0; c < 3; ++c) {
    Image<double> comp(f.dims());
    comp.data() = f.vectors().row(c).transpose().template cast<double>().array();
    for (int a = 0; a < 3; ++a) convolve_axis(comp, a, k);
    out.vectors().row(c) = comp.data().matrix().transpose().template cast<T>();
  }
  return out;
}

// Box mean over a (2r+1)^3 window, edge replicated, running sums.
template <typename T>
void box_mean_inplace(Image<T>& img, int radius) {
  if (radius <= 0) return;
  const double inv = 1.0 / (2 * radius + 1);
  std::vector<double> line;
  for (int a = 0; a < 3; ++a) {
    detail::for_each_line(img.dims(), a, [&](Eigen::Index base, Eigen::Index stride, int n) {
      line.resize(n);
      for (int k = 0; k < n; ++k) line[k] = double(img[base + k * stride]);
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += line[std::clamp(t, 0, n - 1)];
      for (int k = 0; k < n; ++k) {
        img[base + k * stride] = T(acc * inv);
        acc += line[std::min(k + radius + 1, n - 1)] - line[std::max(k - radius, 0)];
      }
    });
  }
}

// Max over a (2r+1)^3 window (clipped at faces).
template <typename T>
Image<T> max_filter(const Image<T>& img, int radius) {
  Image<T> out = img;
  std::vector<T> line;
  for (int a = 0; a < 3; ++a) {
    detail::for_each_line(out.dims(), a, [&](Eigen::Index base, Eigen::Index stride, int n) {
      line.resize(n);
      for (int k = 0; k < n; ++k) line[k] = out[base + k * stride];
      for (int k = 0; k < n; ++k) {
        T m = line[k];
        for (int t = std::max(0, k - radius); t <= std::min(n - 1, k + radius); ++t) m = std::max(m, line[t]);
        out[base + k * stride] = m;
      }
    });
  }
  return out;
}

}  // namespace volreg
