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

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "volreg/field.hpp"
#include "volreg/image.hpp"
#include "volreg/landmarks.hpp"

namespace volreg {

enum class Better { Lower, Higher };

// Which end of the per-case distribution the percentile reads from.
enum class Tail { Worst, Best };

// Target registration error per landmark pair, in mm:
// |(p_fixed + u(p_fixed)) - p_moving| with the difference scaled by spacing.
std::vector<double> tre(const LandmarkSet& lms, const DisplacementFieldd& field,
                        const Eigen::Vector3d& spacing);

// Linear-interpolated empirical percentile at position p/100 * (n-1) of the
// values sorted from the chosen tail. For error-like metrics (Better::Lower)
// the worst tail is the largest values.
double robustness_percentile(std::vector<double> values, double p, Better better, Tail tail = Tail::Worst);

// Per label present in either mask: 2|A n B| / (|A| + |B|).
std::map<int, double> dice(const LabelMask& fixed_labels, const LabelMask& warped_labels);

// Squared Euclidean distance (mm^2) from every voxel to the nearest nonzero
// site; +inf everywhere when there are no sites.
Image<double> squared_distance_transform(const TrunkMask& sites, const Eigen::Vector3d& spacing);

// Voxels of `label` with a 6-neighbour outside the label (or outside the grid).
TrunkMask label_boundary(const LabelMask& labels, int label);

// 95th percentile of pooled symmetric boundary-to-boundary distances, mm.
double hd95(const LabelMask& fixed_labels, const LabelMask& warped_labels, int label,
            const Eigen::Vector3d& spacing);

struct CaseMetrics {
  std::string case_id;
  std::string method_id;
  std::vector<double> tre_mm;
  std::map<int, double> dsc;
  std::map<int, double> hd95;
  int hd95_excluded = 0;  // labels missing from one of the masks
  double sdlogj = 0.0;
  double runtime_s = 0.0;
  bool failed = false;
  std::string failure;

  double mean_tre() const;
  // Worst-tail percentile of this case's landmark errors.
  double tre_percentile(double p) const;
  // Mean over labels present in both masks (labels in only one mask are excluded).
  double mean_dsc() const;
  double mean_hd95() const;
};

struct MetricTable {
  std::vector<CaseMetrics> rows;

  // Throws ArgumentError on a duplicate (method, case) pair.
  void add(CaseMetrics row);
  std::vector<std::string> methods() const;
  std::vector<std::string> cases() const;
  const CaseMetrics* find(const std::string& method, const std::string& case_id) const;
};

struct CaseInputs {
  std::string case_id;
  std::string method_id;
  const Volume* fixed = nullptr;
  const LabelMask* moving_labels = nullptr;
  const LabelMask* fixed_labels = nullptr;
  const LandmarkSet* landmarks = nullptr;
  const DisplacementFieldd* field = nullptr;
  const TrunkMask* trunk = nullptr;
  double runtime_s = 0.0;
};

// Warps moving labels nearest-neighbour, then computes TRE, DSC, HD95 and
// trunk-masked SDlogJ.
CaseMetrics evaluate_case(const CaseInputs& in);

}  // namespace volreg
