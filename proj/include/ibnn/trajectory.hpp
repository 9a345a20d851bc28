#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ibnn/datasets.hpp"
#include "ibnn/distributions.hpp"
#include "ibnn/ensemble.hpp"
#include "ibnn/ibnn.hpp"
#include "ibnn/metrics.hpp"
#include "ibnn/net.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/rng.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

// Moment summaries of a member's Monte Carlo rollouts, world frame.
struct MemberRollout {
  // Indexed [step][dim], dim 0 = a, dim 1 = b.
  std::vector<std::array<double, 2>> mean;
  std::vector<std::array<double, 2>> var;
};

// Rolls one posterior member forward kTrajectoryHorizon steps from the
// observed window. Each Monte Carlo draw fixes one weight vector for the
// whole rollout and adds per-step displacement noise at the likelihood
// variance, so a draw is a coherent sampled dynamics function.
inline MemberRollout rollout_member(const MeanFieldPosterior& q,
                                    const TrajectoryInstance& inst,
                                    std::size_t n_mc, RngStream& rng) {
  detail::require(n_mc >= 2, "rollout_member: n_mc must be >= 2");
  const std::size_t p = q.arch.param_count();
  const double noise_sd = std::sqrt(q.noise_var);
  std::vector<std::vector<std::array<double, 2>>> samples(
      kTrajectoryHorizon, std::vector<std::array<double, 2>>(n_mc));
  std::vector<double> theta(p);
  MlpWorkspace ws;
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < p; ++i)
      theta[i] = q.mean[i] + std::exp(0.5 * q.log_var[i]) * rng.normal();
    std::vector<std::array<double, 2>> window;
    window.reserve(inst.observed.size());
    for (const auto& pos : inst.observed) window.push_back({pos[0], pos[1]});
    for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
      const detail::Frame f = detail::window_frame(window);
      const std::vector<double> feat = detail::window_features(window);
      mlp_forward(q.arch, theta, feat, ws);
      const double fx = ws.act.back()[0] + noise_sd * rng.normal();
      const double fy = ws.act.back()[1] + noise_sd * rng.normal();
      const auto next = detail::from_frame_delta(f, fx, fy);
      samples[t][s] = next;
      window.erase(window.begin());
      window.push_back(next);
    }
  }
  MemberRollout r;
  r.mean.resize(kTrajectoryHorizon);
  r.var.resize(kTrajectoryHorizon);
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
    for (int d = 0; d < 2; ++d) {
      double m = 0.0;
      for (std::size_t s = 0; s < n_mc; ++s) m += samples[t][s][d];
      m /= static_cast<double>(n_mc);
      double v = 0.0;
      for (std::size_t s = 0; s < n_mc; ++s) {
        const double dd = samples[t][s][d] - m;
        v += dd * dd;
      }
      v /= static_cast<double>(n_mc - 1);
      r.mean[t][d] = m;
      r.var[t][d] = v;
    }
  }
  return r;
}

// One rollout per credal-set member; member k consumes rng.substream(k).
inline std::vector<MemberRollout> rollout_credal(
    const PosteriorCredalSet& pcs, const TrajectoryInstance& inst,
    std::size_t n_mc, const RngStream& rng) {
  std::vector<MemberRollout> rollouts;
  rollouts.reserve(pcs.posteriors.size());
  for (std::size_t k = 0; k < pcs.posteriors.size(); ++k) {
    RngStream member_rng = rng.substream(k);
    rollouts.push_back(
        rollout_member(pcs.posteriors[k], inst, n_mc, member_rng));
  }
  return rollouts;
}

// Per-step axis-aligned boxes with the joint level split evenly over the
// 2 * horizon scalars. IBNN boxes take the union of member intervals per
// scalar; the ensemble box moment-matches the members first.
inline StepBoxes trajectory_boxes_ibnn(const std::vector<MemberRollout>& rs,
                                       double alpha) {
  detail::require(!rs.empty(), "trajectory_boxes_ibnn: no members");
  const double per_scalar = alpha / (2.0 * kTrajectoryHorizon);
  const double z = normal_quantile(1.0 - per_scalar / 2.0);
  StepBoxes boxes(kTrajectoryHorizon);
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
    for (int d = 0; d < 2; ++d) {
      std::vector<Interval> ivs;
      ivs.reserve(rs.size());
      for (const auto& r : rs) {
        const double sd = std::sqrt(r.var[t][d]);
        ivs.push_back({r.mean[t][d] - z * sd, r.mean[t][d] + z * sd});
      }
      boxes[t].push_back(Region1D(per_scalar, ivs));
    }
  }
  return boxes;
}

inline StepBoxes trajectory_boxes_ebnn(const std::vector<MemberRollout>& rs,
                                       double alpha) {
  detail::require(!rs.empty(), "trajectory_boxes_ebnn: no members");
  const double per_scalar = alpha / (2.0 * kTrajectoryHorizon);
  const double z = normal_quantile(1.0 - per_scalar / 2.0);
  StepBoxes boxes(kTrajectoryHorizon);
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
    for (int d = 0; d < 2; ++d) {
      std::vector<std::pair<std::vector<double>, std::vector<double>>> members;
      members.reserve(rs.size());
      for (const auto& r : rs)
        members.push_back({{r.mean[t][d]}, {r.var[t][d]}});
      const EnsembleSummary es = ebnn_combine(members);
      const double sd = std::sqrt(es.var_ens[0]);
      boxes[t].push_back(Region1D(
          per_scalar, {{es.mu_ens[0] - z * sd, es.mu_ens[0] + z * sd}}));
    }
  }
  return boxes;
}

// Ground-truth future positions shaped like the box grid: [step][dim].
inline StepTruth trajectory_truth(const TrajectoryInstance& inst) {
  StepTruth truth(kTrajectoryHorizon);
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t)
    truth[t] = {inst.future[t][0], inst.future[t][1]};
  return truth;
}

// Uncertainty summary of one prediction: per member and step, the Gaussian
// entropy of its (a, b) moments; aleatoric part is the member minimum.
struct TrajectoryAuEu {
  double au = 0.0;
  double eu = 0.0;
};

// Ensemble counterpart: entropy at the aleatoric variance (member average)
// and the entropy lift from adding the member spread, averaged over steps.
inline TrajectoryAuEu trajectory_ebnn_au_eu(
    const std::vector<MemberRollout>& rs) {
  detail::require(!rs.empty(), "trajectory_ebnn_au_eu: no members");
  const double k = static_cast<double>(rs.size());
  double au_sum = 0.0;
  double eu_sum = 0.0;
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
    for (int d = 0; d < 2; ++d) {
      double mu = 0.0, alea = 0.0;
      for (const auto& r : rs) {
        mu += r.mean[t][d] / k;
        alea += r.var[t][d] / k;
      }
      double spread = 0.0;
      if (rs.size() >= 2) {
        for (const auto& r : rs) {
          const double dm = r.mean[t][d] - mu;
          spread += dm * dm / (k - 1.0);
        }
      }
      const double h_a = entropy_gaussian_1d(std::max(alea, 1e-300));
      const double h_t = entropy_gaussian_1d(std::max(alea + spread, 1e-300));
      au_sum += h_a;
      eu_sum += h_t - h_a;
    }
  }
  const double n = static_cast<double>(kTrajectoryHorizon);
  return {au_sum / n, eu_sum / n};
}

inline TrajectoryAuEu trajectory_au_eu(const std::vector<MemberRollout>& rs) {
  detail::require(!rs.empty(), "trajectory_au_eu: no members");
  double lo_sum = 0.0;
  double hi_sum = 0.0;
  for (std::size_t t = 0; t < kTrajectoryHorizon; ++t) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : rs) {
      const double h = entropy_gaussian_1d(r.var[t][0]) +
                       entropy_gaussian_1d(r.var[t][1]);
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
    lo_sum += lo;
    hi_sum += hi;
  }
  const double n = static_cast<double>(kTrajectoryHorizon);
  return {lo_sum / n, (hi_sum - lo_sum) / n};
}

}  // namespace ibnn
