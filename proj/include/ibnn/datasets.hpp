#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ibnn/rng.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

// Heteroscedastic 1-D regression task:
//   y = sin(3x) + 0.5x + eps,  eps ~ N(0, sigma(x)^2),  x in [-2, 2],
// with sigma(x) = 0.1 + 0.1 x^2 (scaled by noise_scale; 0 gives the bare
// curve).
inline double regression_curve(double x) {
  return std::sin(3.0 * x) + 0.5 * x;
}

inline double regression_noise_sd(double x) { return 0.1 + 0.1 * x * x; }

inline Dataset gen_regression(std::size_t n, std::uint64_t seed,
                              double noise_scale = 1.0) {
  detail::require(n >= 10, "gen_regression: n must be >= 10");
  RngStream rng(seed, 10);
  Dataset d;
  d.inputs.reserve(n);
  d.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-2.0, 2.0);
    const double y = regression_curve(x) +
                     noise_scale * regression_noise_sd(x) * rng.normal();
    d.inputs.push_back({x});
    d.targets.push_back({y});
  }
  return d;
}

// Two interleaved half moons; severity s >= 1 blurs the inputs with noise of
// standard deviation 0.05*s, severity 0 is clean (and linearly interleaved
// but separable).
inline Dataset gen_classification(std::size_t n, std::uint64_t seed,
                                  int severity) {
  detail::require(n >= 10, "gen_classification: n must be >= 10");
  detail::require(severity >= 0 && severity <= 5,
                  "gen_classification: severity must be in 0..5");
  RngStream rng(seed, 11);
  const double noise_sd = 0.05 * severity;
  Dataset d;
  d.inputs.reserve(n);
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = rng.uniform(0.0, 3.14159265358979323846);
    double a, b;
    if (label == 0) {
      a = std::cos(t);
      b = std::sin(t);
    } else {
      a = 1.0 - std::cos(t);
      b = 0.5 - std::sin(t);
    }
    if (noise_sd > 0.0) {
      a += noise_sd * rng.normal();
      b += noise_sd * rng.normal();
    }
    d.inputs.push_back({a, b});
    d.labels.push_back(label);
  }
  return d;
}

// One observed window plus its future, on a kinematic unicycle.
// position = (a, b, heading, speed).
struct TrajectoryInstance {
  std::vector<std::array<double, 4>> observed;  // length history + 1
  std::vector<std::array<double, 4>> future;    // length horizon
  double curvature = 0.0;                       // generator parameter
};

enum class TrajectorySplit { in_dist, ood };

inline constexpr std::size_t kTrajectoryHistory = 10;  // l
inline constexpr std::size_t kTrajectoryHorizon = 5;   // h
inline constexpr double kTrajectoryDt = 0.1;

// Unicycle rollouts: heading integrates curvature * speed plus a per-step
// wobble, position integrates the heading. The split picks the curvature
// regime: in_dist draws |kappa| <= 0.15, ood draws |kappa| in [0.9, 1.5].
inline std::vector<TrajectoryInstance> gen_trajectories(std::size_t n,
                                                        std::uint64_t seed,
                                                        TrajectorySplit split) {
  detail::require(n >= 1, "gen_trajectories: n must be >= 1");
  RngStream rng(seed, split == TrajectorySplit::in_dist ? 12 : 13);
  std::vector<TrajectoryInstance> out;
  out.reserve(n);
  const std::size_t total = kTrajectoryHistory + 1 + kTrajectoryHorizon;
  for (std::size_t i = 0; i < n; ++i) {
    TrajectoryInstance inst;
    double kappa;
    if (split == TrajectorySplit::in_dist) {
      kappa = rng.uniform(-0.15, 0.15);
    } else {
      kappa = rng.uniform(0.9, 1.5);
      if (rng.uniform() < 0.5) kappa = -kappa;
    }
    inst.curvature = kappa;
    double a = rng.uniform(-5.0, 5.0);
    double b = rng.uniform(-5.0, 5.0);
    double heading = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
    const double speed = rng.uniform(0.8, 1.2);
    for (std::size_t t = 0; t < total; ++t) {
      const std::array<double, 4> pos{a, b, heading, speed};
      if (t <= kTrajectoryHistory)
        inst.observed.push_back(pos);
      else
        inst.future.push_back(pos);
      heading += kappa * speed * kTrajectoryDt + 0.1 * rng.normal() * kTrajectoryDt;
      a += speed * std::cos(heading) * kTrajectoryDt;
      b += speed * std::sin(heading) * kTrajectoryDt;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// Frame for the step predictor: origin at the window's last position,
// x-axis along the last observed displacement. Features are the rotated
// per-step displacements of the window; the target is the next displacement
// in the same frame. Positions alone determine the frame, so model rollouts
// never need heading or speed state.
namespace detail {

struct Frame {
  double ax, ay;      // origin
  double c, s;        // cos/sin of the frame angle
};

inline Frame window_frame(const std::vector<std::array<double, 2>>& window) {
  const std::size_t n = window.size();
  const double dx = window[n - 1][0] - window[n - 2][0];
  const double dy = window[n - 1][1] - window[n - 2][1];
  const double angle = std::atan2(dy, dx);
  return Frame{window[n - 1][0], window[n - 1][1], std::cos(angle),
               std::sin(angle)};
}

inline std::vector<double> window_features(
    const std::vector<std::array<double, 2>>& window) {
  const Frame f = window_frame(window);
  std::vector<double> feat;
  feat.reserve(2 * (window.size() - 1));
  for (std::size_t i = 1; i < window.size(); ++i) {
    const double dx = window[i][0] - window[i - 1][0];
    const double dy = window[i][1] - window[i - 1][1];
    feat.push_back(f.c * dx + f.s * dy);
    feat.push_back(-f.s * dx + f.c * dy);
  }
  return feat;
}

inline std::array<double, 2> to_frame_delta(const Frame& f, double nx,
                                            double ny) {
  const double dx = nx - f.ax;
  const double dy = ny - f.ay;
  return {f.c * dx + f.s * dy, -f.s * dx + f.c * dy};
}

inline std::array<double, 2> from_frame_delta(const Frame& f, double fx,
                                              double fy) {
  return {f.ax + f.c * fx - f.s * fy, f.ay + f.s * fx + f.c * fy};
}

}  // namespace detail

inline constexpr std::size_t kTrajectoryFeatureDim = 2 * kTrajectoryHistory;

// Teacher-forced one-step training rows: each instance yields one row per
// future step, sliding the observation window along the true positions.
inline Dataset trajectory_dataset(const std::vector<TrajectoryInstance>& set) {
  detail::require(!set.empty(), "trajectory_dataset: empty instance set");
  Dataset d;
  for (const auto& inst : set) {
    detail::require(inst.observed.size() == kTrajectoryHistory + 1 &&
                        inst.future.size() == kTrajectoryHorizon,
                    "trajectory_dataset: malformed instance");
    std::vector<std::array<double, 2>> window;
    for (const auto& p : inst.observed) window.push_back({p[0], p[1]});
    for (const auto& next : inst.future) {
      const detail::Frame f = detail::window_frame(window);
      d.inputs.push_back(detail::window_features(window));
      const auto delta = detail::to_frame_delta(f, next[0], next[1]);
      d.targets.push_back({delta[0], delta[1]});
      window.erase(window.begin());
      window.push_back({next[0], next[1]});
    }
  }
  return d;
}

}  // namespace ibnn
