#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ibnn/distributions.hpp"

namespace ibnn {

struct Interval {
  double lo;
  double hi;
};

// Union of disjoint closed intervals at a confidence level alpha.
// Construction sorts and merges overlapping or touching pieces.
struct Region1D {
  double level;  // alpha in (0,1)
  std::vector<Interval> intervals;

  Region1D(double alpha, std::vector<Interval> parts)
      : level(alpha), intervals(std::move(parts)) {
    detail::require(alpha > 0.0 && alpha < 1.0,
                    "Region1D: alpha must be in (0,1)");
    detail::require(!intervals.empty(), "Region1D: empty region");
    for (const auto& iv : intervals)
      detail::require(std::isfinite(iv.lo) && std::isfinite(iv.hi) &&
                          iv.lo <= iv.hi,
                      "Region1D: invalid interval");
    std::sort(intervals.begin(), intervals.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const auto& iv : intervals) {
      if (!merged.empty() && iv.lo <= merged.back().hi)
        merged.back().hi = std::max(merged.back().hi, iv.hi);
      else
        merged.push_back(iv);
    }
    intervals = std::move(merged);
  }

  bool contains(double x) const {
    for (const auto& iv : intervals)
      if (x >= iv.lo && x <= iv.hi) return true;
    return false;
  }

  bool contains(const Region1D& other) const {
    for (const auto& iv : other.intervals) {
      bool inside = false;
      for (const auto& mine : intervals)
        if (iv.lo >= mine.lo && iv.hi <= mine.hi) {
          inside = true;
          break;
        }
      if (!inside) return false;
    }
    return true;
  }

  double total_width() const {
    double w = 0.0;
    for (const auto& iv : intervals) w += iv.hi - iv.lo;
    return w;
  }
};

enum class HdrMethod { gaussian, empirical_shortest, grid_density };

// Per-dimension predictive summary feeding the HDR methods.
struct PredictiveSummary1D {
  double mean;
  double var;
  EmpiricalSample1D samples;
};

// Gaussian highest-density interval: mean +- z_{1-alpha/2} * sd.
inline Region1D hdr_gaussian(double mean, double var, double alpha) {
  detail::require(std::isfinite(mean) && std::isfinite(var) && var >= 0.0,
                  "hdr_gaussian: invalid moments");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(var);
  return Region1D(alpha, {{mean - half, mean + half}});
}

// Minimum-width window holding ceil((1-alpha)*n) consecutive sorted samples;
// ties resolved toward the smallest lower endpoint.
inline Region1D hdr_empirical_shortest(const EmpiricalSample1D& s,
                                       double alpha) {
  detail::require(s.size() >= 20, "hdr_empirical_shortest: need >= 20 samples");
  const std::size_t n = s.size();
  const auto m = static_cast<std::size_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-12));
  const std::size_t keep = std::max<std::size_t>(1, std::min(m, n));
  std::size_t best = 0;
  double best_width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + keep <= n; ++i) {
    const double w = s.values[i + keep - 1] - s.values[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return Region1D(alpha, {{s.values[best], s.values[best + keep - 1]}});
}

// Level set of a Gaussian kernel-density estimate evaluated on a uniform
// grid: cells are ranked by density and accumulated until their mass under
// the discretized KDE reaches 1-alpha, then merged into intervals. Possibly
// a union (multimodal samples).
inline Region1D hdr_grid_density(const EmpiricalSample1D& s, double alpha,
                                 std::size_t grid_n = 512) {
  detail::require(s.size() >= 20, "hdr_grid_density: need >= 20 samples");
  detail::require(grid_n >= 8, "hdr_grid_density: grid too small");
  const std::size_t n = s.size();
  double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) /
                static_cast<double>(n);
  double ss = 0.0;
  for (double v : s.values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = s.values[(3 * n) / 4] - s.values[n / 4];
  // Silverman bandwidth with an IQR guard and a floor for degenerate samples.
  double h = 1.06 * std::min(sd, iqr / 1.34) *
             std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0.0)) h = std::max(1e-9, 1e-3 * std::max(1.0, std::abs(mean)));
  const double lo = s.values.front() - 3.0 * h;
  const double hi = s.values.back() + 3.0 * h;
  const double step = (hi - lo) / static_cast<double>(grid_n - 1);

  std::vector<double> density(grid_n, 0.0);
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * 3.14159265358979323846));
  for (std::size_t g = 0; g < grid_n; ++g) {
    const double x = lo + step * static_cast<double>(g);
    double d = 0.0;
    for (double v : s.values) {
      const double u = (x - v) / h;
      d += std::exp(-0.5 * u * u);
    }
    density[g] = d * norm;
  }
  const double total = std::accumulate(density.begin(), density.end(), 0.0);
  std::vector<std::size_t> order(grid_n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return density[a] > density[b];
  });
  std::vector<bool> selected(grid_n, false);
  double mass = 0.0;
  for (std::size_t g : order) {
    selected[g] = true;
    mass += density[g] / total;
    if (mass >= 1.0 - alpha) break;
  }
  std::vector<Interval> parts;
  for (std::size_t g = 0; g < grid_n; ++g) {
    if (!selected[g]) continue;
    const double x = lo + step * static_cast<double>(g);
    parts.push_back({x - 0.5 * step, x + 0.5 * step});
  }
  return Region1D(alpha, std::move(parts));
}

inline Region1D hdr_1d(const PredictiveSummary1D& summary, double alpha,
                       HdrMethod method) {
  switch (method) {
    case HdrMethod::gaussian:
      return hdr_gaussian(summary.mean, summary.var, alpha);
    case HdrMethod::empirical_shortest:
      return hdr_empirical_shortest(summary.samples, alpha);
    case HdrMethod::grid_density:
    default:
      return hdr_grid_density(summary.samples, alpha);
  }
}

// Union of member regions with overlaps merged. Contains every input region,
// so each member still assigns it mass at least 1-alpha.
inline Region1D region_union(const std::vector<Region1D>& members) {
  detail::require(!members.empty(), "region_union: no members");
  std::vector<Interval> parts;
  for (const auto& r : members) {
    detail::require(std::abs(r.level - members.front().level) <= 1e-12,
                    "region_union: mixed levels");
    parts.insert(parts.end(), r.intervals.begin(), r.intervals.end());
  }
  return Region1D(members.front().level, std::move(parts));
}

inline Region1D ihdr(const std::vector<PredictiveSummary1D>& members,
                     double alpha, HdrMethod method) {
  detail::require(!members.empty(), "ihdr: no members");
  std::vector<Region1D> regions;
  regions.reserve(members.size());
  for (const auto& m : members) regions.push_back(hdr_1d(m, alpha, method));
  return region_union(regions);
}

struct CredibleLabelSet {
  double level;
  std::vector<int> labels;  // ascending label index
  double achieved_mass;     // >= 1 - level
};

// Smallest label prefix, in descending-probability order (ties broken by
// ascending label index), whose cumulative mass reaches 1-alpha.
inline CredibleLabelSet credible_set(const CategoricalDist& p, double alpha) {
  detail::require(alpha > 0.0 && alpha < 1.0,
                  "credible_set: alpha must be in (0,1)");
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return p.probs[static_cast<std::size_t>(a)] >
           p.probs[static_cast<std::size_t>(b)];
  });
  std::vector<int> labels;
  double mass = 0.0;
  for (int j : order) {
    labels.push_back(j);
    mass += p.probs[static_cast<std::size_t>(j)];
    if (mass >= 1.0 - alpha - 1e-12) break;
  }
  std::sort(labels.begin(), labels.end());
  return CredibleLabelSet{alpha, std::move(labels), mass};
}

// Union of per-member credible sets; the achieved mass is the minimum over
// members of their mass on the union, hence at least 1-alpha exactly.
inline CredibleLabelSet imprecise_credible_set(
    const std::vector<CategoricalDist>& members, double alpha) {
  detail::require(!members.empty(), "imprecise_credible_set: no members");
  std::vector<bool> in_union(members.front().size(), false);
  for (const auto& m : members) {
    detail::require(m.size() == members.front().size(),
                    "imprecise_credible_set: dimension mismatch");
    for (int j : credible_set(m, alpha).labels)
      in_union[static_cast<std::size_t>(j)] = true;
  }
  std::vector<int> labels;
  for (std::size_t j = 0; j < in_union.size(); ++j)
    if (in_union[j]) labels.push_back(static_cast<int>(j));
  double min_mass = std::numeric_limits<double>::infinity();
  for (const auto& m : members) {
    double mass = 0.0;
    for (int j : labels) mass += m.probs[static_cast<std::size_t>(j)];
    min_mass = std::min(min_mass, mass);
  }
  return CredibleLabelSet{alpha, std::move(labels), min_mass};
}

}  // namespace ibnn
