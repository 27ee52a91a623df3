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

#include "volreg/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "volreg/error.hpp"

namespace volreg {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Midranks of |d|, doubled so that every rank is an integer.
std::vector<int> doubled_midranks(std::span<const double> d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::fabs(d[a]) < std::fabs(d[b]); });
  std::vector<int> r2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    // Ranks i+1..j+1 share (i+1 + j+1)/2; doubled: i + j + 2.
    for (std::size_t k = i; k <= j; ++k) r2[order[k]] = int(i + j + 2);
    i = j + 1;
  }
  return r2;
}

std::vector<double> nonzero_differences(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("wilcoxon: samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a[i] - b[i];
    if (!std::isfinite(v)) throw ArgumentError("wilcoxon: non-finite sample");
    if (v != 0.0) d.push_back(v);
  }
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int decimals) {
  if (!std::isfinite(v)) return "x";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::TRE: return "TRE";
    case Metric::TRE30: return "TRE30";
    case Metric::DSC: return "DSC";
    case Metric::HD95: return "HD95";
    case Metric::SDLogJ: return "SDLogJ";
    case Metric::RT: return "RT";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  for (Metric m : {Metric::TRE, Metric::TRE30, Metric::DSC, Metric::HD95, Metric::SDLogJ, Metric::RT}) {
    if (name == metric_name(m)) return m;
  }
  throw ArgumentError("unknown metric '" + name + "'");
}

Better default_direction(Metric m) { return m == Metric::DSC ? Better::Higher : Better::Lower; }

void RankConfig::validate() const {
  // alpha = 1 is accepted as the "every difference counts" limit.
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("rank config: alpha must lie in (0, 1]");
  if (!(score_floor > 0.0 && score_floor < score_ceiling)) {
    throw ArgumentError("rank config: need 0 < score_floor < score_ceiling");
  }
  if (metrics_in_rank.empty()) throw ArgumentError("rank config: no metrics in rank");
  if (!(robustness_p > 0.0 && robustness_p < 100.0)) throw ArgumentError("rank config: robustness_p must lie in (0, 100)");
}

double wilcoxon_exact_p(std::span<const double> diffs) {
  const std::size_t n = diffs.size();
  if (n == 0) return 1.0;
  const std::vector<int> r2 = doubled_midranks(diffs);
  int w2 = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r2[i];
    if (diffs[i] > 0) w2 += r2[i];
  }
  // counts[s]: number of sign assignments with doubled positive-rank sum s.
  std::vector<double> counts(std::size_t(total) + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int s = reach; s >= 0; --s) {
      if (counts[std::size_t(s)] != 0.0) counts[std::size_t(s + r2[i])] += counts[std::size_t(s)];
    }
    reach += r2[i];
  }
  double lower = 0.0, upper = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (s <= w2) lower += counts[std::size_t(s)];
    if (s >= w2) upper += counts[std::size_t(s)];
  }
  const double all = std::ldexp(1.0, int(n));
  return std::min(1.0, 2.0 * std::min(lower, upper) / all);
}

double wilcoxon_normal_p(std::span<const double> diffs) {
  const std::size_t n = diffs.size();
  if (n == 0) return 1.0;
  const std::vector<int> r2 = doubled_midranks(diffs);
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0) w += 0.5 * r2[i];
  const double nn = double(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  // Tie correction: sum over tie groups of (t^3 - t) / 48.
  std::map<int, int> groups;
  for (int r : r2) ++groups[r];
  for (const auto& [r, t] : groups) var -= (double(t) * t * t - t) / 48.0;
  if (var <= 0.0) return 1.0;
  const double dev = std::max(0.0, std::fabs(w - mean) - 0.5);
  const double z = dev / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  const std::vector<double> d = nonzero_differences(a, b);
  WilcoxonResult r;
  r.n = int(d.size());
  if (d.empty()) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }
  const std::vector<int> r2 = doubled_midranks(d);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) r.w_plus += 0.5 * r2[i];
  r.exact = r.n <= kWilcoxonExactLimit;
  r.p_value = r.exact ? wilcoxon_exact_p(d) : wilcoxon_normal_p(d);
  return r;
}

double case_value(const CaseMetrics& m, Metric metric, double robustness_p) {
  switch (metric) {
    case Metric::TRE: return m.mean_tre();
    case Metric::TRE30: return m.tre_percentile(robustness_p);
    case Metric::DSC: return m.mean_dsc();
    case Metric::HD95: return m.mean_hd95();
    case Metric::SDLogJ: return m.sdlogj;
    case Metric::RT: return m.runtime_s;
  }
  return kNaN;
}

namespace {

// Per-method case values aligned on the shared case list.
std::map<std::string, std::vector<double>> aligned_values(const MetricTable& table,
                                                          const std::vector<std::string>& methods, Metric metric,
                                                          double robustness_p) {
  const std::vector<std::string> cases = table.cases();
  std::map<std::string, std::vector<double>> out;
  std::vector<std::string> gaps;
  for (const auto& method : methods) {
    for (const auto& c : cases) {
      const CaseMetrics* row = table.find(method, c);
      if (!row || row->failed) {
        gaps.push_back(method + "/" + c + (row ? " (failed)" : ""));
        continue;
      }
      out[method].push_back(case_value(*row, metric, robustness_p));
    }
  }
  if (!gaps.empty()) {
    std::string msg = "metric table: methods do not cover the same cases; missing:";
    for (const auto& g : gaps) msg += " " + g;
    throw ArgumentError(msg);
  }
  return out;
}

std::map<std::string, double> wins_among(const MetricTable& table, const std::vector<std::string>& methods,
                                         Metric metric, Better better, double alpha, double robustness_p) {
  const auto values = aligned_values(table, methods, metric, robustness_p);
  std::map<std::string, double> wins;
  for (const auto& m : methods) wins[m] = 0.0;
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      const auto& a = values.at(methods[i]);
      const auto& b = values.at(methods[j]);
      const WilcoxonResult w = wilcoxon_signed_rank(a, b);
      // Direction: median paired difference, falling back to the rank sums.
      std::vector<double> diff(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
      double dir = diff.empty() ? 0.0 : median(diff);
      if (dir == 0.0) dir = w.w_plus - double(w.n) * (w.n + 1) / 4.0;
      const bool a_better = better == Better::Lower ? dir < 0.0 : dir > 0.0;
      const bool b_better = better == Better::Lower ? dir > 0.0 : dir < 0.0;
      if (!w.degenerate && w.p_value < alpha && (a_better || b_better)) {
        wins[a_better ? methods[i] : methods[j]] += 1.0;
      } else {
        wins[methods[i]] += 0.5;
        wins[methods[j]] += 0.5;
      }
    }
  return wins;
}

}  // namespace

std::map<std::string, double> pairwise_wins(const MetricTable& table, Metric metric, Better better, double alpha,
                                            double robustness_p) {
  return wins_among(table, table.methods(), metric, better, alpha, robustness_p);
}

double rank_score(double wins, int num_methods, const RankConfig& cfg) {
  if (num_methods < 1) throw ArgumentError("rank_score: need at least one method");
  if (num_methods == 1) return cfg.score_ceiling;
  const double frac = std::clamp(wins / double(num_methods - 1), 0.0, 1.0);
  return cfg.score_floor + (cfg.score_ceiling - cfg.score_floor) * frac;
}

double overall_rank(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("overall_rank: no scores");
  double log_sum = 0.0;
  for (double s : scores) {
    if (!(s > 0.0)) throw ArgumentError("overall_rank: scores must be positive");
    log_sum += std::log(s);
  }
  return std::exp(log_sum / double(scores.size()));
}

std::map<Metric, double> aggregate_method(const MetricTable& table, const std::string& method, double robustness_p) {
  std::vector<const CaseMetrics*> rows;
  for (const auto& r : table.rows)
    if (r.method_id == method) rows.push_back(&r);
  std::map<Metric, double> agg;
  if (rows.empty()) return agg;
  auto mean_over = [&](auto&& get) {
    double s = 0.0;
    for (const auto* r : rows) s += get(*r);
    return s / double(rows.size());
  };
  std::vector<double> per_case_tre;
  for (const auto* r : rows) per_case_tre.push_back(r->mean_tre());
  agg[Metric::TRE] = mean_over([](const CaseMetrics& r) { return r.mean_tre(); });
  agg[Metric::TRE30] = robustness_percentile(per_case_tre, robustness_p, Better::Lower, Tail::Worst);
  agg[Metric::DSC] = 100.0 * mean_over([](const CaseMetrics& r) { return r.mean_dsc(); });
  agg[Metric::HD95] = mean_over([](const CaseMetrics& r) { return r.mean_hd95(); });
  agg[Metric::SDLogJ] = mean_over([](const CaseMetrics& r) { return r.sdlogj; });
  agg[Metric::RT] = mean_over([](const CaseMetrics& r) { return r.runtime_s; });
  return agg;
}

Leaderboard leaderboard_from_rows(std::vector<LeaderboardRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.initial != b.initial) return a.initial;
    const double sa = a.overall.value_or(-1.0), sb = b.overall.value_or(-1.0);
    if (sa != sb) return sa > sb;
    return a.method < b.method;
  });
  int pos = 0;
  for (auto& r : rows) r.position = r.initial ? 0 : ++pos;
  return Leaderboard{std::move(rows)};
}

Leaderboard leaderboard(const MetricTable& table, const RankConfig& cfg) {
  cfg.validate();
  std::vector<std::string> ranked;
  bool has_initial = false;
  for (const auto& m : table.methods()) {
    if (m == cfg.initial_method) {
      has_initial = true;
    } else {
      ranked.push_back(m);
    }
  }
  std::vector<LeaderboardRow> rows;
  if (has_initial) {
    LeaderboardRow r;
    r.method = cfg.initial_method;
    r.initial = true;
    r.aggregate = aggregate_method(table, cfg.initial_method, cfg.robustness_p);
    rows.push_back(std::move(r));
  }
  const int M = int(ranked.size());
  std::map<std::string, LeaderboardRow> by_method;
  for (const auto& m : ranked) {
    by_method[m].method = m;
    by_method[m].aggregate = aggregate_method(table, m, cfg.robustness_p);
  }
  if (M > 0) {
    // Coverage check over ranked methods (raises with the missing pairs).
    aligned_values(table, ranked, cfg.metrics_in_rank.front().metric, cfg.robustness_p);
  }
  for (const auto& spec : cfg.metrics_in_rank) {
    const auto wins = M > 1 ? wins_among(table, ranked, spec.metric, spec.better, cfg.alpha, cfg.robustness_p)
                            : std::map<std::string, double>{};
    for (const auto& m : ranked) {
      by_method[m].score[spec.metric] = rank_score(M > 1 ? wins.at(m) : 0.0, M, cfg);
    }
  }
  for (auto& [m, row] : by_method) {
    std::vector<double> s;
    for (const auto& spec : cfg.metrics_in_rank) s.push_back(row.score.at(spec.metric));
    row.overall = overall_rank(s);
    rows.push_back(std::move(row));
  }
  return leaderboard_from_rows(std::move(rows));
}

std::string render_csv(const Leaderboard& lb) {
  std::ostringstream out;
  out << "Method,TRE,TRE30,DSC,HD95,SDLogJ,RT,Rank\n";
  auto get = [](const LeaderboardRow& r, Metric m) {
    auto it = r.aggregate.find(m);
    return it == r.aggregate.end() ? kNaN : it->second;
  };
  for (const auto& r : lb.rows) {
    out << r.method << ',' << fmt(get(r, Metric::TRE), 2) << ',' << fmt(get(r, Metric::TRE30), 2) << ','
        << fmt(get(r, Metric::DSC), 2) << ',' << fmt(get(r, Metric::HD95), 2) << ',';
    if (r.initial) {
      out << ",,\n";
      continue;
    }
    out << fmt(get(r, Metric::SDLogJ), 3) << ',' << fmt(get(r, Metric::RT), 2) << ','
        << (r.overall ? fmt(*r.overall, 2) : std::string("x")) << '\n';
  }
  return out.str();
}

}  // namespace volreg
