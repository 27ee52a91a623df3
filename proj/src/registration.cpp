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

#include "volreg/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "volreg/error.hpp"
#include "volreg/interpolate.hpp"
#include "volreg/preprocess.hpp"

namespace volreg {
namespace {

using Clock = std::chrono::steady_clock;
using Desc = Eigen::Matrix<float, kMindChannels, 1>;
using Descd = Eigen::Matrix<double, kMindChannels, 1>;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void RegistrationConfig::validate() const {
  if (!(clamp_lo <= clamp_hi)) throw ArgumentError("config: clamp_lo must not exceed clamp_hi");
  if (!(keypoints.sigma > 0.0) || keypoints.nms_radius < 1 || keypoints.max_count < 1) {
    throw ArgumentError("config: keypoint parameters must be positive");
  }
  if (mind.patch_radius < 1 || mind.dilation < 1) throw ArgumentError("config: descriptor parameters must be >= 1");
  if (quantization < 1 || search_radius < 1) throw ArgumentError("config: search_radius and quantization must be >= 1");
  if (search_radius < quantization) throw ArgumentError("config: search_radius must be >= quantization");
  if (search_radius % quantization != 0) throw ArgumentError("config: search_radius must be a multiple of quantization");
  if (match_patch_radius < 0) throw ArgumentError("config: match_patch_radius must be >= 0");
  if (!(coupling_alpha >= 0.0) || coupling_iters < 1 || coupling_neighbors < 1) {
    throw ArgumentError("config: coupling parameters invalid");
  }
  if (!(tps_lambda >= 0.0)) throw ArgumentError("config: tps_lambda must be >= 0");
  if (!(io_lr > 0.0) || io_iters < 0 || !(io_reg_weight >= 0.0)) {
    throw ArgumentError("config: instance optimisation parameters invalid");
  }
  if (smooth_window < 1 || smooth_window % 2 == 0 || smooth_repeats < 0) {
    throw ArgumentError("config: smooth_window must be odd >= 1 and smooth_repeats >= 0");
  }
}

CostTensor discrete_match(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                          const KeypointSet& kps, int search_radius, int quantization, int patch_radius) {
  if (search_radius < 1 || quantization < 1 || search_radius % quantization != 0) {
    throw ArgumentError("discrete_match: search_radius must be a positive multiple of quantization");
  }
  if (patch_radius < 0) throw ArgumentError("discrete_match: patch_radius must be >= 0");
  require_same_grid(fixed_desc, moving_desc, "discrete_match");

  CostTensor ct;
  ct.search_radius = search_radius;
  ct.quantization = quantization;
  const int side = ct.side();
  for (int z = 0; z < side; ++z)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        ct.candidates.emplace_back(x * quantization - search_radius, y * quantization - search_radius,
                                   z * quantization - search_radius);
      }

  const Dims3& d = fixed_desc.dims();
  const int margin = search_radius + patch_radius;
  std::vector<Eigen::Vector3i> offsets;
  for (int z = -patch_radius; z <= patch_radius; ++z)
    for (int y = -patch_radius; y <= patch_radius; ++y)
      for (int x = -patch_radius; x <= patch_radius; ++x) offsets.emplace_back(x, y, z);

  std::vector<int> usable;
  for (int k = 0; k < int(kps.size()); ++k) {
    const Eigen::Vector3i& p = kps.points[std::size_t(k)];
    bool ok = true;
    for (int a = 0; a < 3; ++a) ok = ok && p[a] - margin >= 0 && p[a] + margin <= d[a] - 1;
    if (ok) {
      usable.push_back(k);
    } else {
      ++ct.skipped;
    }
  }

  ct.costs.resize(Eigen::Index(ct.candidates.size()), Eigen::Index(usable.size()));
  const auto& F = fixed_desc.values();
  const auto& M = moving_desc.values();
  const double inv_patch = 1.0 / double(offsets.size());
  std::vector<Desc> fpatch(offsets.size());
  std::vector<Eigen::Index> base(offsets.size());
  for (std::size_t col = 0; col < usable.size(); ++col) {
    const Eigen::Vector3i p = kps.points[std::size_t(usable[col])];
    ct.points.push_back(p.cast<double>());
    ct.keypoint_index.push_back(usable[col]);
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const Eigen::Vector3i q = p + offsets[o];
      base[o] = fixed_desc.index(q.x(), q.y(), q.z());
      fpatch[o] = F.col(base[o]);
    }
    for (std::size_t c = 0; c < ct.candidates.size(); ++c) {
      const Eigen::Vector3i& dv = ct.candidates[c];
      const Eigen::Index shift = moving_desc.index(dv.x() + 0, dv.y() + 0, dv.z() + 0) - moving_desc.index(0, 0, 0);
      double acc = 0.0;
      for (std::size_t o = 0; o < offsets.size(); ++o) {
        acc += (fpatch[o] - M.col(base[o] + shift)).squaredNorm();
      }
      ct.costs(Eigen::Index(c), Eigen::Index(col)) = float(acc * inv_patch);
    }
  }
  return ct;
}

SparseDisplacements coupled_select(const CostTensor& costs, double alpha, int iters, int neighbors) {
  if (iters < 1) throw ArgumentError("coupled_select: iters must be >= 1");
  if (!(alpha >= 0.0)) throw ArgumentError("coupled_select: alpha must be >= 0");
  const Eigen::Index n = costs.num_points();
  const Eigen::Index nc = Eigen::Index(costs.candidates.size());
  std::vector<Eigen::Vector3d> cand(costs.candidates.size());
  for (std::size_t c = 0; c < cand.size(); ++c) cand[c] = costs.candidates[c].cast<double>();

  // Nearest other keypoints and their inverse-distance weights.
  const int k = int(std::min<Eigen::Index>(neighbors, std::max<Eigen::Index>(n - 1, 0)));
  std::vector<std::vector<std::pair<int, double>>> knn(static_cast<std::size_t>(n));
  {
    std::vector<std::pair<double, int>> dist;
    for (Eigen::Index i = 0; i < n; ++i) {
      dist.clear();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) dist.emplace_back((costs.points[std::size_t(i)] - costs.points[std::size_t(j)]).norm(), int(j));
      }
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      for (int t = 0; t < k; ++t) {
        knn[std::size_t(i)].emplace_back(dist[std::size_t(t)].second, 1.0 / std::max(dist[std::size_t(t)].first, 1e-6));
      }
    }
  }

  std::vector<Eigen::Vector3d> disp(static_cast<std::size_t>(n)), mean(static_cast<std::size_t>(n));
  auto select = [&](double a) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index c = 0; c < nc; ++c) {
        double v = costs.costs(c, i);
        if (a > 0.0) v += a * (cand[std::size_t(c)] - mean[std::size_t(i)]).squaredNorm();
        if (v < best) best = v, arg = c;
      }
      disp[std::size_t(i)] = cand[std::size_t(arg)];
    }
  };
  auto regularize = [&]() {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (knn[std::size_t(i)].empty()) {
        mean[std::size_t(i)] = disp[std::size_t(i)];
        continue;
      }
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      double wsum = 0.0;
      for (const auto& [j, w] : knn[std::size_t(i)]) {
        acc += w * disp[std::size_t(j)];
        wsum += w;
      }
      mean[std::size_t(i)] = acc / wsum;
    }
  };

  select(0.0);
  regularize();
  double a = alpha;
  for (int it = 0; it < iters; ++it) {
    select(a);
    regularize();
    a *= 2.0;
  }

  SparseDisplacements out;
  out.points = costs.points;
  out.vectors = disp;
  return out;
}

InstanceObjective::InstanceObjective(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                                     double reg_weight)
    : fixed_(fixed_desc), moving_(moving_desc), reg_weight_(reg_weight) {
  require_same_grid(fixed_desc, moving_desc, "instance objective");
}

double InstanceObjective::similarity(const DisplacementFieldd& u, Eigen::Matrix3Xd* grad) const {
  const Dims3& d = u.dims();
  const double inv_n = 1.0 / double(u.size());
  const auto& F = fixed_.values();
  const auto& M = moving_.values();
  double sum = 0.0;
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Index i = u.index(x, y, z);
        const Eigen::Vector3d p = Eigen::Vector3d(x, y, z) + u[i];
        const TrilinearStencil s = trilinear_stencil(moving_.dims(), p);
        Descd val = Descd::Zero();
        if (grad) {
          Descd g0 = Descd::Zero(), g1 = Descd::Zero(), g2 = Descd::Zero();
          for (int k = 0; k < 8; ++k) {
            const Descd m = M.col(s.corner[k]).cast<double>();
            val += s.weight[k] * m;
            g0 += s.dweight[0][k] * m;
            g1 += s.dweight[1][k] * m;
            g2 += s.dweight[2][k] * m;
          }
          const Descd r = val - F.col(i).cast<double>();
          sum += r.squaredNorm();
          grad->col(i) = 2.0 * inv_n * Eigen::Vector3d(r.dot(g0), r.dot(g1), r.dot(g2));
        } else {
          for (int k = 0; k < 8; ++k) val += s.weight[k] * M.col(s.corner[k]).cast<double>();
          sum += (val - F.col(i).cast<double>()).squaredNorm();
        }
      }
  return sum * inv_n;
}

double InstanceObjective::regularizer(const DisplacementFieldd& u, Eigen::Matrix3Xd* grad) const {
  if (reg_weight_ == 0.0) return 0.0;
  const Dims3& d = u.dims();
  const double scale = reg_weight_ / double(u.size());
  double sum = 0.0;
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Index i = u.index(x, y, z);
        const Eigen::Index nb[3] = {x + 1 < d.x() ? u.index(x + 1, y, z) : -1,
                                    y + 1 < d.y() ? u.index(x, y + 1, z) : -1,
                                    z + 1 < d.z() ? u.index(x, y, z + 1) : -1};
        for (Eigen::Index j : nb) {
          if (j < 0) continue;
          const Eigen::Vector3d diff = u[j] - u[i];
          sum += diff.squaredNorm();
          if (grad) {
            grad->col(j) += 2.0 * scale * diff;
            grad->col(i) -= 2.0 * scale * diff;
          }
        }
      }
  return sum * scale;
}

double InstanceObjective::value(const DisplacementFieldd& u) const {
  return similarity(u, nullptr) + regularizer(u, nullptr);
}

double InstanceObjective::value_and_gradient(const DisplacementFieldd& u, Eigen::Matrix3Xd& grad) const {
  grad.setZero(3, u.size());
  const double s = similarity(u, &grad);
  return s + regularizer(u, &grad);
}

InstanceResult instance_optimize(const DescriptorVolume& fixed_desc, const DescriptorVolume& moving_desc,
                                 const DisplacementFieldd& init, const RegistrationConfig& cfg) {
  cfg.validate();
  require_same_grid(init, fixed_desc, "instance_optimize");
  const InstanceObjective objective(fixed_desc, moving_desc, cfg.io_reg_weight);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  InstanceResult res;
  DisplacementFieldd u = init;
  Eigen::Matrix3Xd g, cand_g;
  double obj = objective.value_and_gradient(u, g);
  if (!std::isfinite(obj)) throw DivergenceError("instance_optimize: non-finite objective at entry", 0);
  res.trace.push_back(obj);

  Eigen::Matrix3Xd m = Eigen::Matrix3Xd::Zero(3, u.size());
  Eigen::Matrix3Xd v = Eigen::Matrix3Xd::Zero(3, u.size());
  double lr = cfg.io_lr;
  double b1t = 1.0, b2t = 1.0;
  DisplacementFieldd cand = u;
  for (int it = 1; it <= cfg.io_iters; ++it) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
    b1t *= beta1;
    b2t *= beta2;
    const Eigen::Matrix3Xd step =
        ((m / (1.0 - b1t)).array() / ((v / (1.0 - b2t)).array().sqrt() + eps)).matrix();

    for (int attempt = 0;; ++attempt) {
      cand.vectors() = u.vectors() - lr * step;
      const double cand_obj = objective.value_and_gradient(cand, cand_g);
      if (!std::isfinite(cand_obj)) {
        throw DivergenceError("instance_optimize: non-finite objective at iteration " + std::to_string(it), it);
      }
      if (!cfg.io_step_halving || cand_obj <= obj) {
        std::swap(u, cand);
        std::swap(g, cand_g);
        obj = cand_obj;
        // Recover toward the configured rate after a successful step.
        if (cfg.io_step_halving) lr = std::min(cfg.io_lr, lr * 1.05);
        break;
      }
      lr *= 0.5;
      ++res.halvings;
      if (attempt >= 8) break;  // keep u; Adam moments still advance
    }
    res.trace.push_back(obj);
  }
  res.field = std::move(u);
  return res;
}

RegistrationResult register_pair(const Volume& fixed, const Volume& moving, const TrunkMask& trunk,
                                 const RegistrationConfig& cfg) {
  cfg.validate();
  require_same_grid(fixed, moving, "register_pair");
  require_same_grid(fixed, trunk, "register_pair trunk");
  const auto t_start = Clock::now();
  RegistrationResult out;
  RunReport& rep = out.report;
  auto stage = [&](const char* name, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    rep.stage_seconds.emplace_back(name, seconds_since(t0));
  };

  Volume fc, mc;
  stage("clamp", [&] {
    fc = clamp_intensity(fixed, cfg.clamp_lo, cfg.clamp_hi);
    mc = clamp_intensity(moving, cfg.clamp_lo, cfg.clamp_hi);
  });
  DescriptorVolume fd, md;
  stage("descriptors", [&] {
    fd = mind_descriptor(fc, cfg.mind);
    md = mind_descriptor(mc, cfg.mind);
  });
  KeypointSet kps;
  stage("keypoints", [&] { kps = foerstner_keypoints(fc, trunk, cfg.keypoints); });
  rep.keypoints = int(kps.size());
  if (kps.empty()) throw RegistrationFailedError("register_pair: no keypoints found inside the trunk mask");

  CostTensor costs;
  stage("discrete_match", [&] {
    costs = discrete_match(fd, md, kps, cfg.search_radius, cfg.quantization, cfg.match_patch_radius);
  });
  rep.skipped = costs.skipped;
  rep.matched = int(costs.num_points());
  if (costs.num_points() < 4) {
    throw RegistrationFailedError("register_pair: fewer than 4 keypoints could be matched");
  }

  SparseDisplacements sparse;
  stage("coupled_select", [&] {
    sparse = coupled_select(costs, cfg.coupling_alpha, cfg.coupling_iters, cfg.coupling_neighbors);
  });

  const bool half = cfg.io_half_resolution;
  DescriptorVolume fd_io, md_io;
  if (half) {
    fd_io = downsample2(fd);
    md_io = downsample2(md);
    for (std::size_t i = 0; i < sparse.size(); ++i) {
      sparse.points[i] = (sparse.points[i].array() - 0.5) / 2.0;
      sparse.vectors[i] /= 2.0;
    }
  }
  const DescriptorVolume& fdr = half ? fd_io : fd;
  const DescriptorVolume& mdr = half ? md_io : md;

  DisplacementFieldd field;
  stage("tps_densify", [&] {
    try {
      field = tps_densify(sparse, fdr.dims(), cfg.tps_lambda);
    } catch (const DegenerateConfigurationError& e) {
      throw RegistrationFailedError(std::string("register_pair: ") + e.what());
    }
  });

  if (cfg.instance_optimization && cfg.io_iters > 0) {
    stage("instance_optimize", [&] {
      InstanceResult io = instance_optimize(fdr, mdr, field, cfg);
      rep.io_objective_start = io.trace.front();
      rep.io_objective_end = io.trace.back();
      rep.io_halvings = io.halvings;
      field = std::move(io.field);
    });
  }

  stage("finalize", [&] {
    if (half) field = upsample2_field(field, fixed.dims(), fixed.spacing());
    field = smooth_field(field, cfg.smooth_window, cfg.smooth_repeats);
  });
  out.field = DisplacementFieldd(fixed.dims(), fixed.spacing());
  out.field.vectors() = field.vectors();
  rep.runtime_s = seconds_since(t_start);
  return out;
}

}  // namespace volreg
