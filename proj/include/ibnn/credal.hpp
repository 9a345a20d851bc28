#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ibnn/distributions.hpp"

namespace ibnn {

// Finitely generated credal set: the convex hull of a list of extreme
// distributions on a common finite outcome space. Extreme-point minimality is
// not enforced (that needs an LP); redundant_extremes() is the diagnostic.
struct FiniteCredalSet {
  std::vector<CategoricalDist> extremes;

  explicit FiniteCredalSet(std::vector<CategoricalDist> ex)
      : extremes(std::move(ex)) {
    detail::require(!extremes.empty(), "FiniteCredalSet: no extremes");
    for (const auto& e : extremes)
      detail::require(e.size() == extremes.front().size(),
                      "FiniteCredalSet: extreme dimension mismatch");
  }

  std::size_t n_outcomes() const { return extremes.front().size(); }
  std::size_t n_extremes() const { return extremes.size(); }
};

using EventMask = std::vector<bool>;

inline double event_mass(const CategoricalDist& p, const EventMask& a) {
  detail::require(a.size() == p.size(), "event_mass: mask dimension mismatch");
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (a[j]) m += p.probs[j];
  return m;
}

// Upper probability: max over extremes. Equals the supremum over the whole
// hull because event mass is linear in the mixture coefficients.
inline double upper_prob(const FiniteCredalSet& cs, const EventMask& a) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& e : cs.extremes) best = std::max(best, event_mass(e, a));
  return best;
}

inline double lower_prob(const FiniteCredalSet& cs, const EventMask& a) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : cs.extremes) best = std::min(best, event_mass(e, a));
  return best;
}

// Mixture sum_k coeffs[k] * extreme_k; coeffs must be a probability vector.
inline CategoricalDist convex_mixture(const FiniteCredalSet& cs,
                                      const std::vector<double>& coeffs) {
  detail::require(coeffs.size() == cs.n_extremes(),
                  "convex_mixture: coefficient count mismatch");
  double sum = 0.0;
  for (double c : coeffs) {
    detail::require(std::isfinite(c) && c >= -1e-12,
                    "convex_mixture: negative coefficient");
    sum += c;
  }
  detail::require(std::abs(sum - 1.0) <= 1e-9,
                  "convex_mixture: coefficients must sum to 1");
  std::vector<double> mix(cs.n_outcomes(), 0.0);
  for (std::size_t k = 0; k < coeffs.size(); ++k)
    for (std::size_t j = 0; j < mix.size(); ++j)
      mix[j] += coeffs[k] * cs.extremes[k].probs[j];
  return CategoricalDist(std::move(mix));
}

// Extreme-point entropy envelope. Over the full hull the upper value is only
// a lower bound (mixtures can exceed every extreme's entropy); the lower
// value is exact since entropy is concave.
inline double upper_entropy(const FiniteCredalSet& cs) {
  double h = -std::numeric_limits<double>::infinity();
  for (const auto& e : cs.extremes) h = std::max(h, entropy_categorical(e));
  return h;
}

inline double lower_entropy(const FiniteCredalSet& cs) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& e : cs.extremes) h = std::min(h, entropy_categorical(e));
  return h;
}

struct AuEu {
  double au;  // aleatoric: lower entropy
  double eu;  // epistemic: upper minus lower entropy
};

inline AuEu au_eu_decompose(const FiniteCredalSet& cs) {
  const double lo = lower_entropy(cs);
  const double hi = upper_entropy(cs);
  return AuEu{lo, hi - lo};
}

// Abstention rule: fire when the lower entropy exceeds phi, or phi + log N
// when the bound is lifted to the whole hull of N extremes.
inline bool au_check(const FiniteCredalSet& cs, double phi,
                     std::size_t n_extremes_for_hull_bound = 0,
                     bool use_hull_bound = false) {
  detail::require(phi >= 0.0, "au_check: phi must be >= 0");
  double threshold = phi;
  if (use_hull_bound) {
    detail::require(n_extremes_for_hull_bound >= 1,
                    "au_check: hull bound needs the extreme count");
    threshold += std::log(static_cast<double>(n_extremes_for_hull_bound));
  }
  return lower_entropy(cs) > threshold;
}

enum class Capacity { upper, lower };

// Discrete Choquet integral by the descending-sort telescoping formula:
//   sum_{i<J} (f(i) - f(i+1)) * cap(top-i set) + f(J) * cap(Omega).
// Reduces to the ordinary expectation when the capacity is additive.
inline double choquet_integral(const FiniteCredalSet& cs,
                               const std::vector<double>& f,
                               Capacity capacity) {
  detail::require(f.size() == cs.n_outcomes(),
                  "choquet_integral: f dimension mismatch");
  detail::require(detail::all_finite(f), "choquet_integral: non-finite f");
  std::vector<std::size_t> order(f.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
  EventMask top(f.size(), false);
  const auto cap = [&](const EventMask& a) {
    return capacity == Capacity::upper ? upper_prob(cs, a) : lower_prob(cs, a);
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    top[order[i]] = true;
    total += (f[order[i]] - f[order[i + 1]]) * cap(top);
  }
  top[order.back()] = true;
  total += f[order.back()] * cap(top);
  return total;
}

struct EntropyBounds {
  double h_of_upper;  // >= upper entropy of the hull
  double h_of_lower;  // <= lower entropy of the hull
};

// Cross entropies of the probability envelopes:
//   H(upper) = -sum_w up(w) * log lo(w),  H(lower) = -sum_w lo(w) * log up(w),
// with 0*log 0 := 0 and log 0 under positive mass -> +inf (never NaN).
inline EntropyBounds entropy_bounds(const FiniteCredalSet& cs) {
  const std::size_t n = cs.n_outcomes();
  double h_up = 0.0, h_lo = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    EventMask a(n, false);
    a[j] = true;
    const double up = upper_prob(cs, a);
    const double lo = lower_prob(cs, a);
    if (up > 0.0) {
      if (lo > 0.0)
        h_up -= up * std::log(lo);
      else
        h_up = std::numeric_limits<double>::infinity();
    }
    if (lo > 0.0) h_lo -= lo * std::log(up);  // up >= lo > 0 here
  }
  return EntropyBounds{h_up, h_lo};
}

enum class SetMetric { total_variation, kl };

// Distance from a credal set to a single distribution: min over members.
// Never exceeds the distance from any single member.
inline double set_distance(const std::vector<CategoricalDist>& members,
                           const CategoricalDist& p_prime, SetMetric metric) {
  detail::require(!members.empty(), "set_distance: no members");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : members) {
    detail::require(m.size() == p_prime.size(),
                    "set_distance: dimension mismatch");
    double d = 0.0;
    if (metric == SetMetric::total_variation) {
      for (std::size_t j = 0; j < m.size(); ++j)
        d += std::abs(m.probs[j] - p_prime.probs[j]);
      d *= 0.5;
    } else {
      for (std::size_t j = 0; j < m.size(); ++j) {
        const double p = m.probs[j];
        if (p <= 0.0) continue;
        if (p_prime.probs[j] <= 0.0) {
          d = std::numeric_limits<double>::infinity();
          break;
        }
        d += p * std::log(p / p_prime.probs[j]);
      }
    }
    best = std::min(best, d);
  }
  return best;
}

inline double set_distance(const FiniteCredalSet& cs,
                           const CategoricalDist& p_prime, SetMetric metric) {
  return set_distance(cs.extremes, p_prime, metric);
}

// Diagnostic for redundant extremes, exact without an LP only up to three
// extremes: duplicates are flagged for any count; for exactly three, each
// extreme is tested against the segment spanned by the other two. Larger
// sets get the pairwise-duplicate check only (documented limitation).
inline std::vector<std::size_t> redundant_extremes(const FiniteCredalSet& cs,
                                                   double tol = 1e-9) {
  std::vector<std::size_t> flagged;
  const auto& ex = cs.extremes;
  const auto equal = [&](std::size_t a, std::size_t b) {
    for (std::size_t j = 0; j < cs.n_outcomes(); ++j)
      if (std::abs(ex[a].probs[j] - ex[b].probs[j]) > tol) return false;
    return true;
  };
  for (std::size_t i = 0; i < ex.size(); ++i) {
    bool redundant = false;
    for (std::size_t k = 0; k < i && !redundant; ++k) redundant = equal(i, k);
    if (!redundant && ex.size() == 3) {
      const std::size_t a = (i + 1) % 3, b = (i + 2) % 3;
      // Solve ex[i] = t*ex[a] + (1-t)*ex[b] on the first separating
      // coordinate, then verify every coordinate.
      double t = -1.0;
      for (std::size_t j = 0; j < cs.n_outcomes(); ++j) {
        const double denom = ex[a].probs[j] - ex[b].probs[j];
        if (std::abs(denom) > tol) {
          t = (ex[i].probs[j] - ex[b].probs[j]) / denom;
          break;
        }
      }
      if (t >= -tol && t <= 1.0 + tol) {
        redundant = true;
        for (std::size_t j = 0; j < cs.n_outcomes(); ++j) {
          const double mix = t * ex[a].probs[j] + (1.0 - t) * ex[b].probs[j];
          if (std::abs(mix - ex[i].probs[j]) > tol) {
            redundant = false;
            break;
          }
        }
      }
    }
    if (redundant) flagged.push_back(i);
  }
  return flagged;
}

}  // namespace ibnn
