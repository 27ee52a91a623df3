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

#include <cmath>
#include <cstring>
#include <memory>

#include <gtest/gtest.h>

#include "volreg/error.hpp"
#include "volreg/metrics.hpp"
#include "volreg/phantom.hpp"

namespace volreg {
namespace {

template <typename T>
bool same_bytes(const Image<T>& a, const Image<T>& b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.data().data(), b.data().data(), sizeof(T) * std::size_t(a.size())) == 0;
}

bool same_field(const DisplacementFieldd& a, const DisplacementFieldd& b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.vectors().data(), b.vectors().data(), sizeof(double) * 3 * std::size_t(a.size())) == 0;
}

PhantomConfig small_config() {
  PhantomConfig cfg;
  cfg.dims = Dims3(48, 48, 48);
  cfg.deform_magnitude = 3.0;
  return cfg;
}

TEST(Phantom, DeterministicPerSeed) {
  const PhantomCase a = make_phantom(3, small_config());
  const PhantomCase b = make_phantom(3, small_config());
  EXPECT_TRUE(same_bytes(a.fixed, b.fixed));
  EXPECT_TRUE(same_bytes(a.moving, b.moving));
  EXPECT_TRUE(same_bytes(a.labels_fixed, b.labels_fixed));
  EXPECT_TRUE(same_bytes(a.labels_moving, b.labels_moving));
  EXPECT_TRUE(same_bytes(a.trunk, b.trunk));
  EXPECT_TRUE(same_field(a.gt_field, b.gt_field));
  ASSERT_EQ(a.landmarks.size(), b.landmarks.size());
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    EXPECT_EQ(a.landmarks.pairs[i].fixed, b.landmarks.pairs[i].fixed);
    EXPECT_EQ(a.landmarks.pairs[i].moving, b.landmarks.pairs[i].moving);
  }
  const PhantomCase c = make_phantom(4, small_config());
  EXPECT_FALSE(same_bytes(a.fixed, c.fixed));
  EXPECT_FALSE(same_field(a.gt_field, c.gt_field));
}

TEST(Phantom, ZeroMagnitudeWithoutCbctIsIdentity) {
  PhantomConfig cfg = small_config();
  cfg.deform_magnitude = 0.0;
  cfg.cbct = false;
  const PhantomCase pc = make_phantom(5, cfg);
  EXPECT_TRUE(pc.gt_field.vectors().isZero(0));
  EXPECT_TRUE(same_bytes(pc.fixed, pc.moving));
  EXPECT_TRUE(same_bytes(pc.labels_fixed, pc.labels_moving));
  ASSERT_FALSE(pc.landmarks.empty());
  for (const auto& p : pc.landmarks.pairs) EXPECT_EQ(p.fixed, p.moving);
}

TEST(Phantom, GridLabelsAndTrunk) {
  const PhantomCase pc = make_phantom(6, small_config());
  for (const auto* img : {&pc.fixed, &pc.moving}) {
    EXPECT_EQ(img->dims(), Dims3(48, 48, 48));
    EXPECT_EQ(img->spacing(), Eigen::Vector3d::Constant(1.5));
  }
  EXPECT_EQ(pc.gt_field.spacing(), Eigen::Vector3d::Constant(1.5));
  const std::set<int> ids = label_ids(pc.labels_fixed);
  for (int l : ids) {
    EXPECT_GE(l, 1);
    EXPECT_LE(l, 7);
  }
  for (int l : large_organ_labels()) EXPECT_TRUE(ids.count(l)) << l;
  for (Eigen::Index i = 0; i < pc.trunk.size(); ++i)
    if (pc.labels_fixed[i]) {
      ASSERT_EQ(pc.trunk[i], 1) << i;
    }
  EXPECT_TRUE(pc.fixed.data().allFinite());
  EXPECT_TRUE(pc.moving.data().allFinite());
}

TEST(Phantom, LandmarksFollowGroundTruth) {
  const PhantomCase pc = make_phantom(7, small_config());
  ASSERT_GE(pc.landmarks.size(), 10u);
  for (const auto& p : pc.landmarks.pairs) {
    EXPECT_EQ(p.fixed, p.fixed.array().round().matrix());
    const Eigen::Vector3d exact = p.fixed + pc.gt_field.sample(p.fixed);
    EXPECT_LE((p.moving - exact).cwiseAbs().maxCoeff(), 0.5e-4 + 1e-12);
  }
  const auto t = tre(pc.landmarks, pc.gt_field, pc.fixed.spacing());
  for (double e : t) EXPECT_LT(e, 1e-3);
}

TEST(Phantom, GroundTruthIsItsVelocityExponential) {
  const PhantomCase pc = make_phantom(8, small_config());
  const DisplacementFieldd again = exp_svf(pc.gt_velocity);
  EXPECT_LT((again.vectors() - pc.gt_field.vectors()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT(jacobian_determinant(pc.gt_field).data().minCoeff(), 0.05);
  EXPECT_GT(pc.magnitude_used, 0.0);
  EXPECT_LE(pc.magnitude_used, 3.0);
}

TEST(Phantom, Preconditions) {
  PhantomConfig cfg = small_config();
  cfg.dims = Dims3(40, 48, 48);
  EXPECT_THROW(make_phantom(1, cfg), ArgumentError);
  cfg = small_config();
  cfg.deform_magnitude = 6.5;
  EXPECT_THROW(make_phantom(1, cfg), ArgumentError);
  cfg.deform_magnitude = -1.0;
  EXPECT_THROW(make_phantom(1, cfg), ArgumentError);
}

TEST(Cbct, NoneIsIdentity) {
  Volume v(Dims3(10, 10, 4));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = float(i % 17) * 10.0f;
  EXPECT_TRUE(same_bytes(degrade_cbct(v, CbctConfig::none(), 1), v));
  EXPECT_FALSE(CbctConfig::none().any());
  EXPECT_TRUE(CbctConfig().any());
}

TEST(Cbct, NoiseLevel) {
  const Volume v(Dims3(40, 40, 20), Eigen::Vector3d::Ones(), 0.0f);
  CbctConfig c = CbctConfig::none();
  c.noise_sigma = 50.0;
  const Volume n = degrade_cbct(v, c, 2);
  const double mean = n.data().cast<double>().mean();
  const double sd = std::sqrt((n.data().cast<double>() - mean).square().mean());
  EXPECT_GE(sd, 48.0);
  EXPECT_LE(sd, 52.0);
  EXPECT_LT(std::fabs(mean), 2.0);
  EXPECT_FALSE(same_bytes(n, degrade_cbct(v, c, 3)));
  EXPECT_TRUE(same_bytes(n, degrade_cbct(v, c, 2)));
}

TEST(Cbct, ContrastBiasAndFieldOfView) {
  const Volume v(Dims3(32, 32, 4), Eigen::Vector3d::Ones(), 100.0f);
  CbctConfig c = CbctConfig::none();
  c.contrast = 0.5;
  c.bias = 7.0;
  c.fov_radius = 0.5;
  c.fill = -1000.0f;
  const Volume out = degrade_cbct(v, c, 1);
  const double r = 0.5 * 32 / 2.0, ctr = 15.5;
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        if (std::hypot(x - ctr, y - ctr) > r) {
          ASSERT_EQ(out(x, y, z), -1000.0f);
        } else {
          ASSERT_EQ(out(x, y, z), 57.0f);
        }
      }
  c.ring_period = 0.0;
  EXPECT_THROW(degrade_cbct(v, c, 1), ArgumentError);
}

// Default-size case shared by the quality checks below.
class PhantomDefault : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { pc_ = std::make_unique<PhantomCase>(make_phantom(1, PhantomConfig())); }
  static void TearDownTestSuite() { pc_.reset(); }
  static std::unique_ptr<PhantomCase> pc_;
};
std::unique_ptr<PhantomCase> PhantomDefault::pc_;

TEST_F(PhantomDefault, SmoothGroundTruth) {
  EXPECT_EQ(pc_->retries, 0);
  EXPECT_LT(sdlogj(pc_->gt_field, pc_->trunk), 0.2);
  EXPECT_GT(jacobian_determinant(pc_->gt_field).data().minCoeff(), 0.05);
}

TEST_F(PhantomDefault, InitialMisalignment) {
  const auto t = tre(pc_->landmarks, DisplacementFieldd(pc_->fixed.dims()), pc_->fixed.spacing());
  double mean = 0.0;
  for (double e : t) mean += e / double(t.size());
  EXPECT_GE(mean, 4.0);
  EXPECT_LE(mean, 9.0);
  EXPECT_GE(pc_->landmarks.size(), 20u);
}

TEST_F(PhantomDefault, WarpedLabelsOverlapMovingRendering) {
  const LabelMask warped = warp(pc_->labels_moving, pc_->gt_field, Interp::Nearest, std::uint16_t(0));
  const auto after = dice(pc_->labels_fixed, warped);
  const auto before = dice(pc_->labels_fixed, pc_->labels_moving);
  for (int l : large_organ_labels()) EXPECT_GE(after.at(l), 0.95) << l;
  for (const auto& [l, d] : after) {
    EXPECT_GE(d, 0.80) << l;
    EXPECT_GT(d, before.at(l)) << l;
  }
}

TEST(Phantom, GroundTruthWarpAlignsIntensities) {
  PhantomConfig cfg;
  cfg.dims = Dims3(64, 64, 64);
  cfg.deform_magnitude = 4.0;
  cfg.cbct = false;
  const PhantomCase pc = make_phantom(2, cfg);
  const Volume warped = warp(pc.moving, pc.gt_field, Interp::Trilinear, -1000.0f);
  double before = 0.0, after = 0.0;
  for (Eigen::Index i = 0; i < warped.size(); ++i) {
    if (!pc.trunk[i]) continue;
    before += std::fabs(pc.moving[i] - pc.fixed[i]);
    after += std::fabs(warped[i] - pc.fixed[i]);
  }
  EXPECT_LT(after, 0.4 * before);
}

}  // namespace
}  // namespace volreg
