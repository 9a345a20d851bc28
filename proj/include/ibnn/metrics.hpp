#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ibnn/regions.hpp"

namespace ibnn {

// Prediction boxes for one instance: boxes[step][dim] is a Region1D.
using StepBoxes = std::vector<std::vector<Region1D>>;
// Ground truth for one instance: truth[step][dim].
using StepTruth = std::vector<std::vector<double>>;

namespace detail {

inline bool box_contains(const std::vector<Region1D>& box,
                         const std::vector<double>& point) {
  require(box.size() == point.size(), "coverage: box/truth dimension mismatch");
  for (std::size_t d = 0; d < box.size(); ++d)
    if (!box[d].contains(point[d])) return false;
  return true;
}

}  // namespace detail

// Fraction of (instance, timestep) pairs whose truth falls in the box.
inline double one_step_coverage(const std::vector<StepBoxes>& regions,
                                const std::vector<StepTruth>& truths) {
  detail::require(regions.size() == truths.size() && !regions.empty(),
                  "one_step_coverage: instance count mismatch");
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    detail::require(regions[i].size() == truths[i].size(),
                    "one_step_coverage: step count mismatch");
    for (std::size_t t = 0; t < regions[i].size(); ++t) {
      hits += detail::box_contains(regions[i][t], truths[i][t]) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Fraction of instances with every timestep covered.
inline double multi_step_coverage(const std::vector<StepBoxes>& regions,
                                  const std::vector<StepTruth>& truths) {
  detail::require(regions.size() == truths.size() && !regions.empty(),
                  "multi_step_coverage: instance count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    bool all = true;
    detail::require(regions[i].size() == truths[i].size(),
                    "multi_step_coverage: step count mismatch");
    for (std::size_t t = 0; t < regions[i].size() && all; ++t)
      all = detail::box_contains(regions[i][t], truths[i][t]);
    hits += all ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(regions.size());
}

struct CoverageReport {
  double one_step = 0.0;
  double multi_step = 0.0;  // <= one_step + 1e-12
  double mean_region_width = 0.0;
  double alpha = 0.0;
};

inline CoverageReport coverage_report(const std::vector<StepBoxes>& regions,
                                      const std::vector<StepTruth>& truths,
                                      double alpha) {
  CoverageReport r;
  r.alpha = alpha;
  r.one_step = one_step_coverage(regions, truths);
  r.multi_step = multi_step_coverage(regions, truths);
  double width = 0.0;
  std::size_t cells = 0;
  for (const auto& inst : regions)
    for (const auto& step : inst)
      for (const auto& region : step) {
        width += region.total_width();
        ++cells;
      }
  r.mean_region_width = width / static_cast<double>(cells);
  return r;
}

// Fraction of the trace strictly outside [lo, hi]; boundary values count as
// safe (the unsafe set is the open complement).
inline double t_unsafe(const std::vector<double>& glucose_trace,
                       double lo = 70.0, double hi = 300.0) {
  detail::require(!glucose_trace.empty(), "t_unsafe: empty trace");
  std::size_t unsafe = 0;
  for (double g : glucose_trace)
    if (g < lo || g > hi) ++unsafe;
  return static_cast<double>(unsafe) / static_cast<double>(glucose_trace.size());
}

// (t_ebnn - t_ibnn) / t_ebnn; positive favors the credal controller.
// Undefined when the baseline never leaves the safe band (t_ebnn = 0);
// reported as the distinguished empty value, never a division by zero.
inline std::optional<double> perf_diff(double t_ebnn, double t_ibnn) {
  detail::require(t_ebnn >= 0.0 && t_ibnn >= 0.0, "perf_diff: negative input");
  if (t_ebnn == 0.0) return std::nullopt;
  return (t_ebnn - t_ibnn) / t_ebnn;
}

namespace detail {

// Midranks: ties share the average of the ranks they occupy.
inline std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Pearson correlation of midranks.
inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  detail::require(a.size() == b.size() && a.size() >= 2,
                  "spearman: need two sequences of equal length >= 2");
  const std::vector<double> ra = detail::midranks(a);
  const std::vector<double> rb = detail::midranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  detail::require(va > 0.0 && vb > 0.0, "spearman: constant sequence");
  return cov / std::sqrt(va * vb);
}

struct TrendReport {
  bool is_nondecreasing = false;
  double spearman = 0.0;
};

// Trend of a severity-ordered sequence: exact nondecreasing flag (1e-9
// slack) plus Spearman rank correlation against the severity index.
inline TrendReport monotone_trend(const std::vector<double>& values) {
  detail::require(values.size() >= 3, "monotone_trend: need >= 3 severities");
  bool nondecreasing = true;
  bool constant = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[i - 1] - 1e-9) nondecreasing = false;
    if (values[i] != values.front()) constant = false;
  }
  std::vector<double> idx(values.size());
  std::iota(idx.begin(), idx.end(), 1.0);
  // A flat sequence has no rank trend; report correlation 0 rather than
  // an undefined value.
  return TrendReport{nondecreasing, constant ? 0.0 : spearman(values, idx)};
}

}  // namespace ibnn
