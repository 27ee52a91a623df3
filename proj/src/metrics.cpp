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

#include "volreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "volreg/error.hpp"

namespace volreg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line:
// out[q] = min_p (h (q - p))^2 + f[p].
void edt_line(const std::vector<double>& f, std::vector<double>& out, double h) {
  const int n = int(f.size());
  std::vector<int> site;
  for (int p = 0; p < n; ++p)
    if (f[p] < kInf) site.push_back(p);
  out.assign(n, kInf);
  if (site.empty()) return;
  const double h2 = h * h;
  std::vector<int> v(site.size());
  std::vector<double> z(site.size() + 1);
  int k = 0;
  v[0] = site[0];
  z[0] = -kInf;
  z[1] = kInf;
  auto intersect = [&](int q, int p) {
    return ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
  };
  for (std::size_t t = 1; t < site.size(); ++t) {
    const int q = site[t];
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = h * (q - v[k]);
    out[q] = d * d + f[v[k]];
  }
}

std::vector<double> boundary_distances(const TrunkMask& from, const Image<double>& sq_dist) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < from.size(); ++i) {
    if (from[i]) out.push_back(std::sqrt(sq_dist[i]));
  }
  return out;
}

}  // namespace

std::vector<double> tre(const LandmarkSet& lms, const DisplacementFieldd& field,
                        const Eigen::Vector3d& spacing) {
  check_spacing(spacing);
  if (lms.empty()) throw ArgumentError("tre: landmark set is empty");
  std::vector<double> out;
  out.reserve(lms.size());
  for (std::size_t i = 0; i < lms.size(); ++i) {
    const Eigen::Vector3d& p = lms.pairs[i].fixed;
    for (int a = 0; a < 3; ++a) {
      if (!(p[a] >= 0.0 && p[a] <= field.dims()[a] - 1)) {
        throw ArgumentError("tre: landmark " + std::to_string(i) + " lies outside the field grid");
      }
    }
    const Eigen::Vector3d r = p + field.sample(p) - lms.pairs[i].moving;
    out.push_back((r.array() * spacing.array()).matrix().norm());
  }
  return out;
}

double robustness_percentile(std::vector<double> values, double p, Better better, Tail tail) {
  if (values.empty()) throw ArgumentError("robustness_percentile: empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw ArgumentError("robustness_percentile: p must lie in [0, 100]");
  // Descending when the first element should be the largest value.
  const bool descending = (better == Better::Lower) == (tail == Tail::Worst);
  if (descending) {
    std::sort(values.begin(), values.end(), std::greater<>());
  } else {
    std::sort(values.begin(), values.end());
  }
  const double pos = p / 100.0 * double(values.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::map<int, double> dice(const LabelMask& fixed_labels, const LabelMask& warped_labels) {
  require_same_grid(fixed_labels, warped_labels, "dice");
  std::map<int, long long> a, b, both;
  for (Eigen::Index i = 0; i < fixed_labels.size(); ++i) {
    const int la = fixed_labels[i], lb = warped_labels[i];
    if (la) ++a[la];
    if (lb) ++b[lb];
    if (la && la == lb) ++both[la];
  }
  std::set<int> ids;
  for (const auto& [l, n] : a) ids.insert(l);
  for (const auto& [l, n] : b) ids.insert(l);
  std::map<int, double> out;
  for (int l : ids) {
    const double na = double(a.count(l) ? a[l] : 0), nb = double(b.count(l) ? b[l] : 0);
    const double nab = double(both.count(l) ? both[l] : 0);
    out[l] = (na > 0.0 && nb > 0.0) ? 2.0 * nab / (na + nb) : 0.0;
  }
  return out;
}

Image<double> squared_distance_transform(const TrunkMask& sites, const Eigen::Vector3d& spacing) {
  check_spacing(spacing);
  const Dims3& d = sites.dims();
  Image<double> dist(d, spacing, kInf);
  for (Eigen::Index i = 0; i < sites.size(); ++i)
    if (sites[i]) dist[i] = 0.0;
  std::vector<double> line, out;
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Index stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(d.x()) : Eigen::Index(d.x()) * d.y();
    const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
    const int n = d[axis];
    line.resize(n);
    for (int j = 0; j < d[o2]; ++j)
      for (int i = 0; i < d[o1]; ++i) {
        int c[3] = {0, 0, 0};
        c[o1] = i, c[o2] = j;
        const Eigen::Index base = dist.index(c[0], c[1], c[2]);
        for (int k = 0; k < n; ++k) line[k] = dist[base + k * stride];
        edt_line(line, out, spacing[axis]);
        for (int k = 0; k < n; ++k) dist[base + k * stride] = out[k];
      }
  }
  return dist;
}

TrunkMask label_boundary(const LabelMask& labels, int label) {
  const Dims3& d = labels.dims();
  TrunkMask b(d, labels.spacing(), 0);
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        if (labels(x, y, z) != label) continue;
        const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z}, {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
        for (const auto& q : nb) {
          if (!labels.in_bounds(q[0], q[1], q[2]) || labels(q[0], q[1], q[2]) != label) {
            b(x, y, z) = 1;
            break;
          }
        }
      }
  return b;
}

double hd95(const LabelMask& fixed_labels, const LabelMask& warped_labels, int label,
            const Eigen::Vector3d& spacing) {
  require_same_grid(fixed_labels, warped_labels, "hd95");
  const TrunkMask ba = label_boundary(fixed_labels, label);
  const TrunkMask bb = label_boundary(warped_labels, label);
  if (mask_count(ba) == 0 || mask_count(bb) == 0) {
    throw MissingLabelError("hd95: label " + std::to_string(label) + " is missing from one of the masks");
  }
  std::vector<double> pooled = boundary_distances(ba, squared_distance_transform(bb, spacing));
  const std::vector<double> back = boundary_distances(bb, squared_distance_transform(ba, spacing));
  pooled.insert(pooled.end(), back.begin(), back.end());
  std::sort(pooled.begin(), pooled.end());
  const double pos = 0.95 * double(pooled.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
  return pooled[lo] + (pos - double(lo)) * (pooled[hi] - pooled[lo]);
}

double CaseMetrics::mean_tre() const { return mean_of(tre_mm); }

double CaseMetrics::tre_percentile(double p) const {
  if (tre_mm.empty()) return std::numeric_limits<double>::quiet_NaN();
  return robustness_percentile(tre_mm, p, Better::Lower, Tail::Worst);
}

double CaseMetrics::mean_dsc() const {
  std::vector<double> v;
  for (const auto& [l, d] : dsc) {
    if (hd95.count(l)) v.push_back(d);
  }
  if (v.empty()) {
    for (const auto& [l, d] : dsc) v.push_back(d);
  }
  return mean_of(v);
}

double CaseMetrics::mean_hd95() const {
  std::vector<double> v;
  for (const auto& [l, d] : hd95) v.push_back(d);
  return mean_of(v);
}

void MetricTable::add(CaseMetrics row) {
  if (find(row.method_id, row.case_id)) {
    throw ArgumentError("metric table: duplicate row for method '" + row.method_id + "', case '" + row.case_id + "'");
  }
  rows.push_back(std::move(row));
}

std::vector<std::string> MetricTable::methods() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.method_id);
  return {s.begin(), s.end()};
}

std::vector<std::string> MetricTable::cases() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.case_id);
  return {s.begin(), s.end()};
}

const CaseMetrics* MetricTable::find(const std::string& method, const std::string& case_id) const {
  for (const auto& r : rows) {
    if (r.method_id == method && r.case_id == case_id) return &r;
  }
  return nullptr;
}

CaseMetrics evaluate_case(const CaseInputs& in) {
  if (!in.fixed || !in.moving_labels || !in.fixed_labels || !in.landmarks || !in.field || !in.trunk) {
    throw ArgumentError("evaluate_case: missing input");
  }
  require_same_grid(*in.fixed, *in.field, "evaluate_case field");
  require_same_grid(*in.fixed, *in.fixed_labels, "evaluate_case fixed labels");
  require_same_grid(*in.fixed, *in.trunk, "evaluate_case trunk");

  CaseMetrics m;
  m.case_id = in.case_id;
  m.method_id = in.method_id;
  m.runtime_s = in.runtime_s;
  const Eigen::Vector3d& spacing = in.fixed->spacing();
  m.tre_mm = tre(*in.landmarks, *in.field, spacing);

  const LabelMask warped = warp(*in.moving_labels, *in.field, Interp::Nearest, std::uint16_t(0));
  m.dsc = dice(*in.fixed_labels, warped);
  for (const auto& [label, d] : m.dsc) {
    try {
      m.hd95[label] = hd95(*in.fixed_labels, warped, label, spacing);
    } catch (const MissingLabelError&) {
      ++m.hd95_excluded;
    }
  }
  m.sdlogj = sdlogj(*in.field, *in.trunk);
  return m;
}

}  // namespace volreg
