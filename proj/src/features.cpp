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

#include "volreg/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "volreg/error.hpp"
#include "volreg/filters.hpp"
#include "volreg/interpolate.hpp"

namespace volreg {
namespace {

constexpr double kForstnerEps = 1e-12;
constexpr double kSigmaFloor = 1e-6;

// Central differences scaled by 1/spacing, one-sided at faces.
Image<double> gradient(const Volume& v, int axis) {
  Image<double> g(v.dims(), v.spacing(), 0.0);
  const Dims3& d = v.dims();
  const double inv_h = 1.0 / v.spacing()[axis];
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        const int c = hi[axis], n = d[axis];
        if (n == 1) continue;
        double h = 2.0;
        if (c == 0) {
          hi[axis] = 1, h = 1.0;
        } else if (c == n - 1) {
          lo[axis] = n - 2, h = 1.0;
        } else {
          hi[axis] = c + 1, lo[axis] = c - 1;
        }
        g(x, y, z) = (double(v(hi[0], hi[1], hi[2])) - double(v(lo[0], lo[1], lo[2]))) / h * inv_h;
      }
  return g;
}

int clampi(int v, int n) { return std::clamp(v, 0, n - 1); }

}  // namespace

Image<double> foerstner_score(const Volume& v, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("foerstner: sigma must be positive");
  const Image<double> gx = gradient(v, 0), gy = gradient(v, 1), gz = gradient(v, 2);
  Image<double> t[6];
  for (auto& img : t) img = Image<double>(v.dims(), v.spacing(), 0.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    t[0][i] = gx[i] * gx[i];
    t[1][i] = gy[i] * gy[i];
    t[2][i] = gz[i] * gz[i];
    t[3][i] = gx[i] * gy[i];
    t[4][i] = gx[i] * gz[i];
    t[5][i] = gy[i] * gz[i];
  }
  const auto k = gaussian_kernel(sigma);
  for (auto& img : t)
    for (int a = 0; a < 3; ++a) convolve_axis(img, a, k);

  Image<double> score(v.dims(), v.spacing(), 0.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Eigen::Matrix3d S;
    S << t[0][i], t[3][i], t[4][i],
         t[3][i], t[1][i], t[5][i],
         t[4][i], t[5][i], t[2][i];
    const double tr = S.trace();
    score[i] = std::max(0.0, S.determinant() / (tr * tr + kForstnerEps));
  }
  return score;
}

KeypointSet foerstner_keypoints(const Volume& v, const TrunkMask& mask, double sigma, int nms_radius,
                                int max_count) {
  if (!(sigma > 0.0)) throw ArgumentError("foerstner_keypoints: sigma must be positive");
  if (nms_radius < 1) throw ArgumentError("foerstner_keypoints: nms_radius must be >= 1");
  if (max_count < 0) throw ArgumentError("foerstner_keypoints: max_count must be >= 0");
  require_same_grid(v, mask, "foerstner_keypoints");
  if (mask_count(mask) == 0) throw ArgumentError("foerstner_keypoints: empty mask");

  const Image<double> score = foerstner_score(v, sigma);
  const Image<double> local_max = max_filter(score, nms_radius);

  std::vector<Eigen::Index> cand;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    if (mask[i] != 0 && score[i] > 0.0 && score[i] >= local_max[i]) cand.push_back(i);
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });

  KeypointSet out;
  TrunkMask blocked(v.dims(), v.spacing(), 0);
  const int r = nms_radius - 1;
  const Dims3& d = v.dims();
  for (Eigen::Index i : cand) {
    if (int(out.size()) >= max_count) break;
    if (blocked[i]) continue;
    const Dims3 c = score.coord(i);
    out.points.push_back(c);
    out.scores.push_back(score[i]);
    for (int z = std::max(0, c.z() - r); z <= std::min(d.z() - 1, c.z() + r); ++z)
      for (int y = std::max(0, c.y() - r); y <= std::min(d.y() - 1, c.y() + r); ++y)
        for (int x = std::max(0, c.x() - r); x <= std::min(d.x() - 1, c.x() + r); ++x) blocked(x, y, z) = 1;
  }
  return out;
}

void write_keypoints_csv(const KeypointSet& kps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[128];
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const auto& p = kps.points[i];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9g\n", p.x(), p.y(), p.z(), kps.scores[i]);
    out << buf;
  }
}

Eigen::Matrix<double, kMindChannels, 1> DescriptorVolume::sample(const Eigen::Vector3d& p) const {
  const TrilinearStencil s = trilinear_stencil(dims_, p);
  Eigen::Matrix<double, kMindChannels, 1> v = Eigen::Matrix<double, kMindChannels, 1>::Zero();
  for (int k = 0; k < 8; ++k) v += s.weight[k] * values_.col(s.corner[k]).cast<double>();
  return v;
}

DescriptorVolume mind_descriptor(const Volume& v, int patch_radius, int dilation) {
  if (patch_radius < 1) throw ArgumentError("mind_descriptor: patch_radius must be >= 1");
  if (dilation < 1) throw ArgumentError("mind_descriptor: dilation must be >= 1");
  const Dims3& d = v.dims();
  const int need = 2 * (dilation + patch_radius) + 1;
  if ((d.array() < need).any()) {
    throw ArgumentError("mind_descriptor: volume smaller than the descriptor neighbourhood");
  }

  // Six-neighbourhood sites at the dilation; the 12 non-opposite pairs.
  const Eigen::Vector3i six[6] = {{dilation, 0, 0}, {-dilation, 0, 0}, {0, dilation, 0},
                                  {0, -dilation, 0}, {0, 0, dilation}, {0, 0, -dilation}};
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      if (j != i + 1 || i % 2 == 1) pairs.emplace_back(i, j);

  DescriptorVolume out(d);
  Image<double> dist(d, v.spacing(), 0.0);
  Eigen::Matrix<double, kMindChannels, Eigen::Dynamic> all(kMindChannels, v.size());
  for (int c = 0; c < kMindChannels; ++c) {
    const Eigen::Vector3i a = six[pairs[c].first], b = six[pairs[c].second];
    for (int z = 0; z < d.z(); ++z)
      for (int y = 0; y < d.y(); ++y)
        for (int x = 0; x < d.x(); ++x) {
          const double va = v(clampi(x + a.x(), d.x()), clampi(y + a.y(), d.y()), clampi(z + a.z(), d.z()));
          const double vb = v(clampi(x + b.x(), d.x()), clampi(y + b.y(), d.y()), clampi(z + b.z(), d.z()));
          dist(x, y, z) = (va - vb) * (va - vb);
        }
    box_mean_inplace(dist, patch_radius);
    all.row(c) = dist.data().matrix().transpose();
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sigma = std::max(all.col(i).mean(), kSigmaFloor);
    out.values().col(i) = (-all.col(i).array() / sigma).exp().cast<float>().matrix();
  }
  return out;
}

double descriptor_ssd(const DescriptorVolume& a, const Eigen::Vector3d& p, const DescriptorVolume& b,
                      const Eigen::Vector3d& q) {
  return (a.sample(p) - b.sample(q)).squaredNorm();
}

DescriptorVolume downsample2(const DescriptorVolume& d) {
  const Dims3 h((d.dims().array() + 1) / 2);
  DescriptorVolume out(h);
  for (int z = 0; z < h.z(); ++z)
    for (int y = 0; y < h.y(); ++y)
      for (int x = 0; x < h.x(); ++x) {
        Eigen::Matrix<double, kMindChannels, 1> acc = Eigen::Matrix<double, kMindChannels, 1>::Zero();
        int n = 0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int sx = 2 * x + dx, sy = 2 * y + dy, sz = 2 * z + dz;
              if (sx >= d.dims().x() || sy >= d.dims().y() || sz >= d.dims().z()) continue;
              acc += d.values().col(d.index(sx, sy, sz)).cast<double>();
              ++n;
            }
        out.values().col(out.index(x, y, z)) = (acc / n).cast<float>();
      }
  return out;
}

}  // namespace volreg
