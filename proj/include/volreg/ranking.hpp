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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volreg/metrics.hpp"

namespace volreg {

enum class Metric { TRE, TRE30, DSC, HD95, SDLogJ, RT };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);
Better default_direction(Metric m);

struct MetricSpec {
  Metric metric;
  Better better;
};

struct RankConfig {
  double alpha = 0.05;
  std::vector<MetricSpec> metrics_in_rank = {{Metric::TRE, Better::Lower},
                                             {Metric::TRE30, Better::Lower},
                                             {Metric::DSC, Better::Higher},
                                             {Metric::HD95, Better::Lower},
                                             {Metric::SDLogJ, Better::Lower}};
  double score_floor = 0.1;
  double score_ceiling = 1.0;
  double robustness_p = 30.0;
  // Rows of this method are shown as the unregistered baseline and never ranked.
  std::string initial_method = "Initial";

  void validate() const;
};

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // sum of ranks of positive differences
  int n = 0;            // nonzero differences
  bool exact = true;
  bool degenerate = false;  // all differences zero
};

inline constexpr int kWilcoxonExactLimit = 25;

// Two-sided paired test on a - b. Zero differences are dropped, ties get
// midranks. Exact null distribution for n <= 25, otherwise the normal
// approximation with tie-corrected variance and continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

// Both branches on nonzero differences, exposed for cross-checking.
double wilcoxon_exact_p(std::span<const double> diffs);
double wilcoxon_normal_p(std::span<const double> diffs);

// Per-case value fed to the significance test.
double case_value(const CaseMetrics& m, Metric metric, double robustness_p = 30.0);

// Each unordered pair awards one win: to the better method when the test is
// significant at `alpha`, split 0.5/0.5 otherwise.
std::map<std::string, double> pairwise_wins(const MetricTable& table, Metric metric, Better better, double alpha,
                                            double robustness_p = 30.0);

// floor + (ceiling - floor) * wins / (num_methods - 1); a lone method scores the ceiling.
double rank_score(double wins, int num_methods, const RankConfig& cfg);

// Geometric mean.
double overall_rank(std::span<const double> scores);

struct LeaderboardRow {
  std::string method;
  std::map<Metric, double> aggregate;  // DSC in percent
  std::map<Metric, double> score;
  std::optional<double> overall;
  int position = 0;  // 1-based; 0 for the initial row
  bool initial = false;
};

struct Leaderboard {
  std::vector<LeaderboardRow> rows;  // ranked rows by position, initial row first
};

// Column aggregates for one method: means over cases, TRE30 as the worst-tail
// percentile of per-case mean TRE.
std::map<Metric, double> aggregate_method(const MetricTable& table, const std::string& method,
                                          double robustness_p = 30.0);

Leaderboard leaderboard(const MetricTable& table, const RankConfig& cfg);

// Orders pre-aggregated rows by their overall score (highest first) and
// assigns positions.
Leaderboard leaderboard_from_rows(std::vector<LeaderboardRow> rows);

// Columns: Method,TRE,TRE30,DSC,HD95,SDLogJ,RT,Rank.
std::string render_csv(const Leaderboard& lb);

}  // namespace volreg
