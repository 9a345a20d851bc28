#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibnn/rng.hpp"

namespace ibnn {

inline constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace detail

// Independent Gaussian coordinates; var strictly positive and finite.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> var;

  DiagonalGaussian(std::vector<double> m, std::vector<double> v)
      : mean(std::move(m)), var(std::move(v)) {
    detail::require(!mean.empty(), "DiagonalGaussian: empty mean");
    detail::require(mean.size() == var.size(),
                    "DiagonalGaussian: mean/var dimension mismatch");
    detail::require(detail::all_finite(mean), "DiagonalGaussian: non-finite mean");
    for (double x : var)
      detail::require(std::isfinite(x) && x > 0.0,
                      "DiagonalGaussian: var must be positive and finite");
  }

  std::size_t dim() const { return mean.size(); }
};

// Probability vector on a finite outcome space. Construction normalizes
// inputs whose sum deviates from 1 by at most 1e-6 and rejects larger
// deviations; entries must lie in [0, 1] up to float dust.
struct CategoricalDist {
  std::vector<double> probs;

  explicit CategoricalDist(std::vector<double> p) : probs(std::move(p)) {
    detail::require(!probs.empty(), "CategoricalDist: empty");
    double sum = 0.0;
    for (double& x : probs) {
      detail::require(std::isfinite(x), "CategoricalDist: non-finite entry");
      detail::require(x >= -1e-12 && x <= 1.0 + 1e-9,
                      "CategoricalDist: entry outside [0,1]");
      if (x < 0.0) x = 0.0;
      sum += x;
    }
    detail::require(std::abs(sum - 1.0) <= 1e-6,
                    "CategoricalDist: probabilities sum to " +
                        std::to_string(sum) + ", not 1");
    for (double& x : probs) x /= sum;
  }

  std::size_t size() const { return probs.size(); }
};

// Sorted univariate sample set with implied uniform weights.
struct EmpiricalSample1D {
  std::vector<double> values;  // ascending

  explicit EmpiricalSample1D(std::vector<double> v) : values(std::move(v)) {
    detail::require(!values.empty(), "EmpiricalSample1D: empty");
    detail::require(detail::all_finite(values),
                    "EmpiricalSample1D: non-finite value");
    std::sort(values.begin(), values.end());
  }

  std::size_t size() const { return values.size(); }
};

// Shannon entropy in nats, 0*log 0 := 0. Lies in [0, log J].
inline double entropy_categorical(const CategoricalDist& p) {
  double h = 0.0;
  for (double x : p.probs)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

// Differential entropy in nats: sum_i 0.5*log(2*pi*e*var_i).
inline double entropy_gaussian(const DiagonalGaussian& g) {
  double h = 0.0;
  for (double v : g.var) h += 0.5 * (kLogTwoPi + 1.0 + std::log(v));
  return h;
}

inline double entropy_gaussian_1d(double var) {
  detail::require(std::isfinite(var) && var > 0.0,
                  "entropy_gaussian_1d: var must be positive");
  return 0.5 * (kLogTwoPi + 1.0 + std::log(var));
}

// KL(q || p) between diagonal Gaussians:
//   sum_i 0.5*[var_q/var_p + (mu_p-mu_q)^2/var_p - 1 + log(var_p/var_q)].
inline double kl_diag_gaussians(const DiagonalGaussian& q,
                                const DiagonalGaussian& p) {
  detail::require(q.dim() == p.dim(), "kl_diag_gaussians: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double r = q.var[i] / p.var[i];
    const double dm = p.mean[i] - q.mean[i];
    kl += 0.5 * (r + dm * dm / p.var[i] - 1.0 - std::log(r));
  }
  return kl;
}

inline double log_density(const DiagonalGaussian& g,
                          const std::vector<double>& x) {
  detail::require(x.size() == g.dim(), "log_density: dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - g.mean[i];
    lp -= 0.5 * (d * d / g.var[i] + kLogTwoPi + std::log(g.var[i]));
  }
  return lp;
}

// One draw: mean + sqrt(var) * z, z standard normal per coordinate.
inline std::vector<double> sample(const DiagonalGaussian& g, RngStream& rng) {
  std::vector<double> out(g.dim());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + std::sqrt(g.var[i]) * rng.normal();
  return out;
}

inline std::vector<std::vector<double>> sample(const DiagonalGaussian& g,
                                               RngStream& rng, std::size_t n) {
  detail::require(n >= 1, "sample: n must be >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(g, rng));
  return out;
}

// Inverse-CDF draw on the cumulative vector.
inline int sample(const CategoricalDist& p, RngStream& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t j = 0; j + 1 < p.size(); ++j) {
    cum += p.probs[j];
    if (u < cum) return static_cast<int>(j);
  }
  return static_cast<int>(p.size()) - 1;
}

inline std::vector<int> sample(const CategoricalDist& p, RngStream& rng,
                               std::size_t n) {
  detail::require(n >= 1, "sample: n must be >= 1");
  std::vector<int> out(n);
  for (auto& x : out) x = sample(p, rng);
  return out;
}

// Standard normal quantile, Wichura's AS 241 (PPND16). |error| < 1e-15
// over (0, 1); used for Gaussian highest-density intervals.
inline double normal_quantile(double p) {
  detail::require(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

}  // namespace ibnn
