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

// Brute-force reference implementations and fixtures shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "volreg/field.hpp"
#include "volreg/metrics.hpp"

namespace volreg::testing {

inline LabelMask box(const Dims3& d, const Eigen::Vector3i& lo, const Eigen::Vector3i& hi, std::uint16_t label,
                     LabelMask base = LabelMask()) {
  LabelMask m = base.size() ? base : LabelMask(d);
  for (int z = lo.z(); z < hi.z(); ++z)
    for (int y = lo.y(); y < hi.y(); ++y)
      for (int x = lo.x(); x < hi.x(); ++x) m(x, y, z) = label;
  return m;
}

// All-pairs surface distances, pooled both ways, linear-interpolated 95th
// percentile. Distances are formed from integer voxel offsets so the rounding
// matches a per-axis accumulation.
inline double hd95_oracle(const LabelMask& a, const LabelMask& b, int label, const Eigen::Vector3d& sp) {
  const TrunkMask ba = label_boundary(a, label), bb = label_boundary(b, label);
  std::vector<Eigen::Vector3i> pa, pb;
  for (Eigen::Index i = 0; i < ba.size(); ++i) {
    if (ba[i]) pa.push_back(ba.coord(i));
    if (bb[i]) pb.push_back(bb.coord(i));
  }
  std::vector<double> pooled;
  auto directed = [&](const std::vector<Eigen::Vector3i>& from, const std::vector<Eigen::Vector3i>& to) {
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = sp.x() * (p.x() - q.x()), dy = sp.y() * (p.y() - q.y()), dz = sp.z() * (p.z() - q.z());
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      pooled.push_back(std::sqrt(best));
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  std::sort(pooled.begin(), pooled.end());
  const double pos = 0.95 * double(pooled.size() - 1);
  const auto lo = std::size_t(pos);
  const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
  return pooled[lo] + (pos - double(lo)) * (pooled[hi] - pooled[lo]);
}

// Two-sided p by enumerating all 2^n sign patterns over midranks of |d|.
inline double enumeration_p(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::fabs(d[j]) < std::fabs(d[i])) ++less;
      if (std::fabs(d[j]) == std::fabs(d[i])) ++equal;
    }
    rank[i] = less + (equal + 1) / 2.0;
  }
  double w = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w += rank[i];
  double lo = 0, hi = 0;
  for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += rank[i];
    if (s <= w + 1e-9) ++lo;
    if (s >= w - 1e-9) ++hi;
  }
  return std::min(1.0, 2.0 * std::min(lo, hi) / double(1ull << n));
}

inline DisplacementFieldd affine_field(const Dims3& d, const Eigen::Matrix3d& A, const Eigen::Vector3d& t) {
  DisplacementFieldd f(d);
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) f(x, y, z) = A * Eigen::Vector3d(x, y, z) + t;
  return f;
}

inline CaseMetrics metric_row(const std::string& method, const std::string& case_id, double tre, double dsc,
                              double hd, double sdlogj, double rt = 1.0) {
  CaseMetrics m;
  m.method_id = method;
  m.case_id = case_id;
  m.tre_mm = {tre};
  m.dsc = {{1, dsc}};
  m.hd95 = {{1, hd}};
  m.sdlogj = sdlogj;
  m.runtime_s = rt;
  return m;
}

inline std::string case_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "case_%03d", c);
  return buf;
}

// Method k is worse than k-1 on every case by a distinct margin on every metric.
inline MetricTable planted_table(int cases, const std::vector<std::string>& names) {
  MetricTable t;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> base(3.0, 6.0);
  for (int c = 0; c < cases; ++c) {
    const double b = base(rng);
    for (std::size_t k = 0; k < names.size(); ++k) {
      const double step = double(k) * (1.0 + 0.01 * c);
      t.add(metric_row(names[k], case_name(c), b + step, 0.9 - 0.1 * step, 2 + step, 0.05 + 0.01 * step,
                       10.0 * double(k + 1)));
    }
  }
  return t;
}

}  // namespace volreg::testing
