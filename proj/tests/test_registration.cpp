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
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "volreg/error.hpp"
#include "volreg/features.hpp"
#include "volreg/filters.hpp"
#include "volreg/registration.hpp"

namespace volreg {
namespace {

using testing::random_volume;

// Smooth random texture with enough structure for keypoints and descriptors.
Volume textured(const Dims3& d, std::uint64_t seed) {
  return gaussian_smooth(random_volume(d, seed, 0.0, 1000.0), 1.5);
}

// moving(x) = fixed(x - t), so the pull-back field that aligns it is +t.
Volume shifted(const Volume& fixed, const Eigen::Vector3i& t) {
  Volume m(fixed.dims(), fixed.spacing(), 0.0f);
  const Dims3& d = fixed.dims();
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Vector3i s = (Eigen::Vector3i(x, y, z) - t).cwiseMax(0).cwiseMin(d - Dims3::Ones());
        m(x, y, z) = fixed(s.x(), s.y(), s.z());
      }
  return m;
}

KeypointSet grid_keypoints(const Dims3& d, int margin, int step) {
  KeypointSet k;
  for (int z = margin; z < d.z() - margin; z += step)
    for (int y = margin; y < d.y() - margin; y += step)
      for (int x = margin; x < d.x() - margin; x += step) {
        k.points.emplace_back(x, y, z);
        k.scores.push_back(1.0);
      }
  return k;
}

Eigen::Index argmin_col(const CostTensor& ct, Eigen::Index col) {
  Eigen::Index arg;
  ct.costs.col(col).minCoeff(&arg);
  return arg;
}

TEST(DiscreteMatch, CandidateGridAndSkips) {
  const DescriptorVolume d = mind_descriptor(textured(Dims3(24, 24, 24), 1));
  KeypointSet k = grid_keypoints(d.dims(), 8, 4);
  k.points.emplace_back(2, 12, 12);  // too close to a face for R = 4
  k.scores.push_back(0.5);
  const CostTensor ct = discrete_match(d, d, k, 4, 2, 1);
  EXPECT_EQ(ct.side(), 5);
  EXPECT_EQ(ct.candidates.size(), 125u);
  EXPECT_EQ(ct.costs.rows(), 125);
  EXPECT_EQ(ct.skipped, 1);
  EXPECT_EQ(ct.num_points(), Eigen::Index(k.size()) - 1);
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& c : ct.candidates) {
    EXPECT_EQ(c.cwiseAbs().maxCoeff() <= 4, true);
    for (int a = 0; a < 3; ++a) EXPECT_EQ(c[a] % 2, 0);
    seen.insert({c.x(), c.y(), c.z()});
  }
  EXPECT_EQ(seen.size(), 125u);
  EXPECT_THROW(discrete_match(d, d, k, 5, 2, 1), ArgumentError);
}

TEST(DiscreteMatch, SelfMatchIsZeroDisplacement) {
  const DescriptorVolume d = mind_descriptor(textured(Dims3(24, 24, 24), 2));
  const CostTensor ct = discrete_match(d, d, grid_keypoints(d.dims(), 8, 3), 3, 1, 1);
  ASSERT_GT(ct.num_points(), 0);
  for (Eigen::Index i = 0; i < ct.num_points(); ++i) {
    EXPECT_EQ(ct.candidates[std::size_t(argmin_col(ct, i))], Eigen::Vector3i::Zero());
    EXPECT_EQ(ct.costs.col(i).minCoeff(), 0.0f);
  }
}

TEST(DiscreteMatch, RecoversTranslation) {
  const Volume f = textured(Dims3(28, 24, 24), 3);
  const Volume m = shifted(f, Eigen::Vector3i(-4, 0, 0));
  const DescriptorVolume fd = mind_descriptor(f), md = mind_descriptor(m);
  const CostTensor ct = discrete_match(fd, md, grid_keypoints(f.dims(), 9, 3), 5, 1, 1);
  ASSERT_GT(ct.num_points(), 0);
  for (Eigen::Index i = 0; i < ct.num_points(); ++i) {
    EXPECT_EQ(ct.candidates[std::size_t(argmin_col(ct, i))], Eigen::Vector3i(-4, 0, 0));
  }
}

TEST(DiscreteMatch, CostMatchesPatchMeanOfDescriptorSsd) {
  const DescriptorVolume fd = mind_descriptor(textured(Dims3(20, 20, 20), 4));
  const DescriptorVolume md = mind_descriptor(textured(Dims3(20, 20, 20), 5));
  const CostTensor ct = discrete_match(fd, md, grid_keypoints(fd.dims(), 7, 3), 3, 1, 1);
  std::mt19937 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index col = Eigen::Index(rng() % std::uint32_t(ct.num_points()));
    const std::size_t c = rng() % ct.candidates.size();
    double acc = 0.0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Eigen::Vector3d q = ct.points[std::size_t(col)] + Eigen::Vector3d(dx, dy, dz);
          acc += descriptor_ssd(fd, q, md, q + ct.candidates[c].cast<double>());
        }
    EXPECT_NEAR(ct.costs(Eigen::Index(c), col), acc / 27.0, 1e-5);
  }
}

// Synthetic cost tensor: quadratic bowls around `target` per point.
CostTensor bowls(const std::vector<Eigen::Vector3d>& pts, const std::vector<Eigen::Vector3d>& target,
                 const std::vector<double>& depth, int radius) {
  CostTensor ct;
  ct.search_radius = radius;
  for (int z = -radius; z <= radius; ++z)
    for (int y = -radius; y <= radius; ++y)
      for (int x = -radius; x <= radius; ++x) ct.candidates.emplace_back(x, y, z);
  ct.points = pts;
  for (std::size_t i = 0; i < pts.size(); ++i) ct.keypoint_index.push_back(int(i));
  ct.costs.resize(Eigen::Index(ct.candidates.size()), Eigen::Index(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t c = 0; c < ct.candidates.size(); ++c)
      ct.costs(Eigen::Index(c), Eigen::Index(i)) = float(depth[i] * (ct.candidates[c].cast<double>() - target[i]).squaredNorm());
  return ct;
}

std::vector<Eigen::Vector3d> grid_points(int n_side) {
  std::vector<Eigen::Vector3d> p;
  for (int z = 0; z < n_side; ++z)
    for (int y = 0; y < n_side; ++y)
      for (int x = 0; x < n_side; ++x) p.emplace_back(4.0 * x, 4.0 * y, 4.0 * z);
  return p;
}

TEST(CoupledSelect, ZeroAlphaIsPerPointArgmin) {
  const auto pts = grid_points(3);
  std::mt19937 rng(7);
  std::vector<Eigen::Vector3d> target;
  for (std::size_t i = 0; i < pts.size(); ++i)
    target.emplace_back(int(rng() % 7) - 3, int(rng() % 7) - 3, int(rng() % 7) - 3);
  const CostTensor ct = bowls(pts, target, std::vector<double>(pts.size(), 1.0), 3);
  const SparseDisplacements s = coupled_select(ct, 0.0, 3);
  ASSERT_EQ(s.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(s.vectors[i], target[i]);
    EXPECT_EQ(s.points[i], pts[i]);
  }
}

TEST(CoupledSelect, ConsensusIsStable) {
  const auto pts = grid_points(3);
  const std::vector<Eigen::Vector3d> target(pts.size(), Eigen::Vector3d(2, -1, 1));
  const SparseDisplacements s = coupled_select(bowls(pts, target, std::vector<double>(pts.size(), 1.0), 3), 0.5, 4);
  for (const auto& v : s.vectors) EXPECT_EQ(v, Eigen::Vector3d(2, -1, 1));
}

TEST(CoupledSelect, ShallowOutlierPulledToNeighbours) {
  std::vector<Eigen::Vector3d> pts = grid_points(4);
  pts.resize(50, Eigen::Vector3d(6, 6, 6));
  pts.back() = Eigen::Vector3d(6, 6, 6);
  std::vector<Eigen::Vector3d> target(pts.size(), Eigen::Vector3d(1, 0, 0));
  std::vector<double> depth(pts.size(), 1.0);
  target.back() = Eigen::Vector3d(-3, 2, 0);
  depth.back() = 0.01;
  const CostTensor ct = bowls(pts, target, depth, 4);
  EXPECT_EQ(coupled_select(ct, 0.0, 1).vectors.back(), Eigen::Vector3d(-3, 2, 0));
  const SparseDisplacements s = coupled_select(ct, 0.02, 4);
  for (const auto& v : s.vectors) EXPECT_EQ(v, Eigen::Vector3d(1, 0, 0));
}

TEST(CoupledSelect, InvalidArguments) {
  const auto pts = grid_points(2);
  const CostTensor ct = bowls(pts, std::vector<Eigen::Vector3d>(pts.size(), Eigen::Vector3d::Zero()),
                             std::vector<double>(pts.size(), 1.0), 1);
  EXPECT_THROW(coupled_select(ct, 0.1, 0), ArgumentError);
  EXPECT_THROW(coupled_select(ct, -0.1, 2), ArgumentError);
}

TEST(InstanceObjective, GradientMatchesFiniteDifferences) {
  const Dims3 d(8, 8, 8);
  const DescriptorVolume fd = mind_descriptor(textured(d, 8));
  const DescriptorVolume md = mind_descriptor(textured(d, 9));
  const InstanceObjective obj(fd, md, 0.3);
  // Non-integer displacements keep every sample away from trilinear kinks.
  DisplacementFieldd u(d);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> uni(0.2, 0.8);
  for (Eigen::Index i = 0; i < u.size(); ++i)
    for (int c = 0; c < 3; ++c) u.vectors()(c, i) = uni(rng) * (c == 0 ? 1 : -1);
  Eigen::Matrix3Xd g;
  const double e0 = obj.value_and_gradient(u, g);
  EXPECT_NEAR(e0, obj.value(u), 1e-12);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index i = Eigen::Index(rng() % std::uint64_t(u.size()));
    const int c = int(rng() % 3);
    DisplacementFieldd up = u, um = u;
    up.vectors()(c, i) += h;
    um.vectors()(c, i) -= h;
    const double fd_grad = (obj.value(up) - obj.value(um)) / (2 * h);
    EXPECT_NEAR(g(c, i), fd_grad, 1e-3 * std::abs(fd_grad) + 1e-8) << i << " " << c;
  }
}

RegistrationConfig fast_config() {
  RegistrationConfig cfg;
  cfg.search_radius = 4;
  cfg.io_iters = 40;
  cfg.keypoints.max_count = 400;
  return cfg;
}

TEST(InstanceOptimize, TraceIsNonIncreasingWithHalving) {
  const Dims3 d(12, 12, 12);
  const DescriptorVolume fd = mind_descriptor(textured(d, 11));
  const DescriptorVolume md = mind_descriptor(shifted(textured(d, 11), Eigen::Vector3i(1, 0, 0)));
  RegistrationConfig cfg = fast_config();
  cfg.io_lr = 0.5;
  const InstanceResult r = instance_optimize(fd, md, DisplacementFieldd(d), cfg);
  ASSERT_EQ(r.trace.size(), std::size_t(cfg.io_iters + 1));
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
  EXPECT_LT(r.trace.back(), r.trace.front());
}

TEST(InstanceOptimize, LargerRegularizationGivesSmootherField) {
  const Dims3 d(12, 12, 12);
  const DescriptorVolume fd = mind_descriptor(textured(d, 12));
  const DescriptorVolume md = mind_descriptor(textured(d, 13));
  RegistrationConfig weak = fast_config(), strong = fast_config();
  weak.io_reg_weight = 0.01;
  strong.io_reg_weight = 50.0;
  const auto a = instance_optimize(fd, md, DisplacementFieldd(d), weak);
  const auto b = instance_optimize(fd, md, DisplacementFieldd(d), strong);
  EXPECT_LT(total_variation(b.field), total_variation(a.field));
}

TEST(InstanceOptimize, NonFiniteEntryDiverges) {
  const Dims3 d(8, 8, 8);
  const DescriptorVolume fd = mind_descriptor(textured(d, 14));
  DisplacementFieldd u(d);
  u.vectors()(0, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(instance_optimize(fd, fd, u, fast_config()), DivergenceError);
}

TEST(Upsample2, ConstantDoubles) {
  const auto half = DisplacementFieldd::Constant(Dims3(5, 6, 7), Eigen::Vector3d(1, -0.5, 2));
  const auto full = upsample2_field(half, Dims3(10, 12, 13), Eigen::Vector3d(1.5, 1.5, 1.5));
  EXPECT_EQ(full.dims(), Dims3(10, 12, 13));
  EXPECT_EQ(full.spacing(), Eigen::Vector3d(1.5, 1.5, 1.5));
  for (Eigen::Index i = 0; i < full.size(); ++i) EXPECT_LT((full[i] - Eigen::Vector3d(2, -1, 4)).norm(), 1e-12);
}

TEST(RegisterPair, SelfRegistrationIsNearIdentity) {
  Volume f = textured(Dims3(32, 32, 32), 15);
  f.set_spacing(Eigen::Vector3d(1.5, 1.5, 1.5));
  const TrunkMask trunk = interior_mask(f.dims(), 2);
  const RegistrationResult r = register_pair(f, f, trunk, fast_config());
  EXPECT_EQ(r.field.dims(), f.dims());
  EXPECT_EQ(r.field.spacing(), f.spacing());
  EXPECT_TRUE(r.field.all_finite());
  EXPECT_LT(mean_magnitude(r.field), 0.2);
}

TEST(RegisterPair, RecoversTranslationAndReports) {
  const Volume f = textured(Dims3(36, 32, 32), 16);
  const Volume m = shifted(f, Eigen::Vector3i(2, 0, -1));
  const RegistrationResult r = register_pair(f, m, interior_mask(f.dims(), 2), fast_config());
  const TrunkMask core = interior_mask(f.dims(), 8);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  int n = 0;
  for (Eigen::Index i = 0; i < r.field.size(); ++i)
    if (core[i]) {
      mean += r.field[i];
      ++n;
    }
  mean /= n;
  EXPECT_LT((mean - Eigen::Vector3d(2, 0, -1)).norm(), 0.5) << mean.transpose();

  const RunReport& rep = r.report;
  EXPECT_GT(rep.keypoints, 0);
  EXPECT_EQ(rep.matched + rep.skipped, rep.keypoints);
  EXPECT_GT(rep.runtime_s, 0.0);
  std::vector<std::string> names;
  double staged = 0.0;
  for (const auto& [name, s] : rep.stage_seconds) {
    names.push_back(name);
    staged += s;
  }
  EXPECT_EQ(names, (std::vector<std::string>{"clamp", "descriptors", "keypoints", "discrete_match", "coupled_select",
                                             "tps_densify", "instance_optimize", "finalize"}));
  EXPECT_LE(staged, rep.runtime_s + 1e-9);
  EXPECT_LE(rep.io_objective_end, rep.io_objective_start);
}

TEST(RegisterPair, FailureModes) {
  const Volume flat(Dims3(24, 24, 24), Eigen::Vector3d::Ones(), 5.0f);
  EXPECT_THROW(register_pair(flat, flat, interior_mask(flat.dims(), 2), fast_config()), RegistrationFailedError);
  const Volume f = textured(Dims3(24, 24, 24), 17);
  EXPECT_THROW(register_pair(f, f, TrunkMask(Dims3(24, 24, 25)), fast_config()), ArgumentError);
  RegistrationConfig bad = fast_config();
  bad.search_radius = 5;
  bad.quantization = 2;
  EXPECT_THROW(register_pair(f, f, interior_mask(f.dims(), 2), bad), ArgumentError);
}

TEST(RegistrationConfig, Validation) {
  RegistrationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.smooth_window = 4;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = RegistrationConfig();
  c.clamp_lo = 10, c.clamp_hi = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = RegistrationConfig();
  c.tps_lambda = -1;
  EXPECT_THROW(c.validate(), ArgumentError);
}

}  // namespace
}  // namespace volreg
