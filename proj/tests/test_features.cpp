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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "volreg/error.hpp"
#include "volreg/features.hpp"

namespace volreg {
namespace {

using testing::random_volume;

// Parity octants meeting at (15.5,15.5,15.5): equal contrast across every face.
Volume octants() {
  Volume v(Dims3(32, 32, 32));
  for (int z = 0; z < 32; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) v(x, y, z) = 100.0f * float((x >= 16) ^ (y >= 16) ^ (z >= 16));
  return v;
}

TrunkMask full_mask(const Dims3& d) { return TrunkMask(d, Eigen::Vector3d::Ones(), 1); }

TEST(Foerstner, ConstantVolumeHasNoKeypoints) {
  const Volume v(Dims3(16, 16, 16), Eigen::Vector3d::Ones(), 42.0f);
  EXPECT_TRUE(foerstner_keypoints(v, full_mask(v.dims()), 1.4, 3, 100).empty());
  EXPECT_TRUE((foerstner_score(v, 1.4).data() == 0.0).all());
}

TEST(Foerstner, PlanesAndEdgesScoreNothing) {
  // A single step in x: rank-one structure tensor everywhere.
  Volume v(Dims3(16, 16, 16));
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 8; x < 16; ++x) v(x, y, z) = 100.0f;
  EXPECT_LT(foerstner_score(v, 1.4).data().maxCoeff(), 1e-9);
}

TEST(Foerstner, OctantCornerIsTopKeypoint) {
  const Volume v = octants();
  const KeypointSet k = foerstner_keypoints(v, full_mask(v.dims()), 1.4, 3, 10);
  ASSERT_FALSE(k.empty());
  const Eigen::Vector3d corner(15.5, 15.5, 15.5);
  EXPECT_LE((k.points[0].cast<double>() - corner).lpNorm<Eigen::Infinity>(), 2.0);
}

// Independent score at one interior voxel: explicit central differences and a
// full 3-D Gaussian window.
double oracle_score(const Volume& v, const Eigen::Vector3i& p, double sigma) {
  const int r = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> w(2 * r + 1);
  double ws = 0.0;
  for (int i = -r; i <= r; ++i) ws += w[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& x : w) x /= ws;
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const int x = p.x() + dx, y = p.y() + dy, z = p.z() + dz;
        const Eigen::Vector3d g((v(x + 1, y, z) - v(x - 1, y, z)) / (2 * v.spacing().x()),
                                (v(x, y + 1, z) - v(x, y - 1, z)) / (2 * v.spacing().y()),
                                (v(x, y, z + 1) - v(x, y, z - 1)) / (2 * v.spacing().z()));
        S += w[dx + r] * w[dy + r] * w[dz + r] * g * g.transpose();
      }
  const double tr = S.trace();
  return std::max(0.0, S.determinant() / (tr * tr + 1e-12));
}

TEST(Foerstner, ScoreMatchesOracle) {
  Volume v = random_volume(Dims3(20, 20, 20), 3, 0.0, 100.0);
  v.set_spacing(Eigen::Vector3d(1.0, 1.5, 0.8));
  const Image<double> s = foerstner_score(v, 1.4);
  for (const Eigen::Vector3i& p : {Eigen::Vector3i(10, 10, 10), Eigen::Vector3i(7, 12, 9), Eigen::Vector3i(11, 8, 12)}) {
    const double o = oracle_score(v, p, 1.4);
    EXPECT_NEAR(s(p.x(), p.y(), p.z()), o, 1e-7 * std::max(1.0, o));
  }
}

TEST(Foerstner, NmsSpacingOrderingAndCap) {
  const Volume v = random_volume(Dims3(24, 24, 24), 4);
  const TrunkMask m = full_mask(v.dims());
  for (int radius : {1, 2, 3, 5}) {
    const KeypointSet k = foerstner_keypoints(v, m, 1.0, radius, 100000);
    ASSERT_FALSE(k.empty());
    for (std::size_t i = 1; i < k.size(); ++i) EXPECT_GE(k.scores[i - 1], k.scores[i]);
    for (std::size_t i = 0; i < k.size(); ++i)
      for (std::size_t j = i + 1; j < k.size(); ++j)
        ASSERT_GE((k.points[i] - k.points[j]).cwiseAbs().maxCoeff(), radius) << radius;
  }
  const KeypointSet all = foerstner_keypoints(v, m, 1.0, 2, 100000);
  const KeypointSet capped = foerstner_keypoints(v, m, 1.0, 2, 7);
  ASSERT_EQ(capped.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(capped.points[i], all.points[i]);
}

TEST(Foerstner, RespectsMask) {
  const Volume v = random_volume(Dims3(24, 24, 24), 5);
  const TrunkMask m = interior_mask(v.dims(), 6);
  const KeypointSet k = foerstner_keypoints(v, m, 1.0, 2, 1000);
  ASSERT_FALSE(k.empty());
  for (const auto& p : k.points) EXPECT_EQ(m(p.x(), p.y(), p.z()), 1);
}

TEST(Foerstner, InvalidArguments) {
  const Volume v = random_volume(Dims3(8, 8, 8), 6);
  EXPECT_THROW(foerstner_keypoints(v, TrunkMask(v.dims()), 1.4, 3, 10), ArgumentError);
  EXPECT_THROW(foerstner_keypoints(v, full_mask(v.dims()), 0.0, 3, 10), ArgumentError);
  EXPECT_THROW(foerstner_keypoints(v, full_mask(v.dims()), 1.4, 0, 10), ArgumentError);
  EXPECT_THROW(foerstner_keypoints(v, full_mask(Dims3(8, 8, 9)), 1.4, 3, 10), ArgumentError);
}

TEST(Mind, ChannelValuesInUnitInterval) {
  const DescriptorVolume d = mind_descriptor(random_volume(Dims3(12, 12, 12), 7));
  EXPECT_EQ(d.values().rows(), kMindChannels);
  EXPECT_GT(d.values().minCoeff(), 0.0f);
  EXPECT_LE(d.values().maxCoeff(), 1.0f);
}

TEST(Mind, InvariantToAffineIntensity) {
  const Volume v = random_volume(Dims3(12, 12, 12), 8, 0.0, 100.0);
  Volume w = v;
  w.data() = 3.0f * v.data() + 100.0f;
  const DescriptorVolume a = mind_descriptor(v), b = mind_descriptor(w);
  EXPECT_LT((a.values() - b.values()).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(Mind, MatchesOracleAtInteriorVoxel) {
  const Volume v = random_volume(Dims3(14, 14, 14), 9, 0.0, 10.0);
  const int dil = 2, pr = 1;
  const DescriptorVolume d = mind_descriptor(v, pr, dil);
  const Eigen::Vector3i six[6] = {{dil, 0, 0}, {-dil, 0, 0}, {0, dil, 0}, {0, -dil, 0}, {0, 0, dil}, {0, 0, -dil}};
  const Eigen::Vector3i p(7, 6, 7);
  std::vector<double> dist;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      if (six[i] == -six[j]) continue;
      double s = 0.0;
      for (int dz = -pr; dz <= pr; ++dz)
        for (int dy = -pr; dy <= pr; ++dy)
          for (int dx = -pr; dx <= pr; ++dx) {
            const Eigen::Vector3i q = p + Eigen::Vector3i(dx, dy, dz), a = q + six[i], b = q + six[j];
            const double diff = v(a.x(), a.y(), a.z()) - v(b.x(), b.y(), b.z());
            s += diff * diff;
          }
      dist.push_back(s / 27.0);
    }
  ASSERT_EQ(dist.size(), std::size_t(kMindChannels));
  double mean = 0.0;
  for (double x : dist) mean += x / dist.size();
  std::vector<double> expected, got;
  for (double x : dist) expected.push_back(std::exp(-x / mean));
  for (int c = 0; c < kMindChannels; ++c) got.push_back(d.values()(c, d.index(p.x(), p.y(), p.z())));
  std::sort(expected.begin(), expected.end());
  std::sort(got.begin(), got.end());
  for (int c = 0; c < kMindChannels; ++c) EXPECT_NEAR(got[c], expected[c], 1e-5);
}

TEST(Mind, RejectsSmallVolumesAndBadParameters) {
  EXPECT_THROW(mind_descriptor(random_volume(Dims3(6, 12, 12), 10)), ArgumentError);
  EXPECT_THROW(mind_descriptor(random_volume(Dims3(12, 12, 12), 10), 0, 2), ArgumentError);
  EXPECT_THROW(mind_descriptor(random_volume(Dims3(12, 12, 12), 10), 1, 0), ArgumentError);
}

TEST(Mind, SsdSymmetricAndZeroOnSelf) {
  const DescriptorVolume a = mind_descriptor(random_volume(Dims3(12, 12, 12), 11));
  const DescriptorVolume b = mind_descriptor(random_volume(Dims3(12, 12, 12), 12));
  const Eigen::Vector3d p(4.3, 5.5, 6.1), q(7.2, 3.9, 5.0);
  EXPECT_EQ(descriptor_ssd(a, p, a, p), 0.0);
  EXPECT_NEAR(descriptor_ssd(a, p, b, q), descriptor_ssd(b, q, a, p), 1e-12);
  EXPECT_GT(descriptor_ssd(a, p, b, q), 0.0);
}

TEST(Mind, Downsample2AveragesBlocks) {
  const DescriptorVolume d = mind_descriptor(random_volume(Dims3(11, 12, 13), 13));
  const DescriptorVolume h = downsample2(d);
  EXPECT_EQ(h.dims(), Dims3(6, 6, 7));
  Eigen::Matrix<double, kMindChannels, 1> acc = Eigen::Matrix<double, kMindChannels, 1>::Zero();
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) acc += d.values().col(d.index(2 + dx, 4 + dy, 6 + dz)).cast<double>();
  EXPECT_LT((h.values().col(h.index(1, 2, 3)).cast<double>() - acc / 8).cwiseAbs().maxCoeff(), 1e-6);
  // Odd edge: only the voxels that exist are averaged.
  EXPECT_LT((h.values().col(h.index(5, 0, 0)).cast<double>() -
             (d.values().col(d.index(10, 0, 0)) + d.values().col(d.index(10, 1, 0)) + d.values().col(d.index(10, 0, 1)) +
              d.values().col(d.index(10, 1, 1)))
                     .cast<double>() /
                 4)
                .cwiseAbs()
                .maxCoeff(),
            1e-6);
}

}  // namespace
}  // namespace volreg
