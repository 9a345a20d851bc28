#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "ibnn/distributions.hpp"
#include "ibnn/ibnn.hpp"
#include "ibnn/metrics.hpp"
#include "ibnn/net.hpp"
#include "ibnn/rng.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

// Discrete-time glucose model. Insulin acts through a three-step kernel,
// meals release their carbs evenly over meal_duration steps, and glucose is
// clamped to [g_min, g_max]. steady_insulin() is the dose that exactly
// cancels endogenous production once the kernel is saturated.
struct GlucoseParams {
  double k_endo = 1.5;
  double k_ins = 5.0;
  double kernel0 = 0.2;  // weight on the current dose
  double kernel1 = 0.5;  // weight on the previous dose
  double kernel2 = 0.3;  // weight on the dose before that
  double k_meal = 1.0;
  double noise_sd = 2.0;
  double g_min = 10.0;
  double g_max = 600.0;
  int meal_duration = 6;

  double steady_insulin() const { return k_endo / k_ins; }
};

struct GlucoseSimState {
  double glucose = 120.0;
  double prev_dose = 0.0;       // I_{t-1}
  double prev_prev_dose = 0.0;  // I_{t-2}
  int t = 0;
};

struct MealEvent {
  int step = 0;
  double carbs = 0.0;
};

using MealSchedule = std::vector<MealEvent>;

inline MealSchedule default_meals() { return {{30, 40.0}, {80, 60.0}}; }

// Carbs entering the bloodstream at step t.
inline double meal_rate_at(const MealSchedule& meals, int t,
                           const GlucoseParams& params) {
  double rate = 0.0;
  for (const auto& m : meals) {
    if (t >= m.step && t < m.step + params.meal_duration)
      rate += params.k_meal * m.carbs / params.meal_duration;
  }
  return rate;
}

// One simulator step. noise is the realized disturbance (0 for the
// deterministic dynamics); callers draw it from their own stream.
inline GlucoseSimState glucose_step(const GlucoseSimState& state,
                                    double insulin,
                                    const GlucoseParams& params = {},
                                    double meal_rate = 0.0,
                                    double noise = 0.0) {
  detail::require(insulin >= 0.0 && std::isfinite(insulin),
                  "glucose_step: insulin must be finite and >= 0");
  const double effect = params.kernel0 * insulin +
                        params.kernel1 * state.prev_dose +
                        params.kernel2 * state.prev_prev_dose;
  double g = state.glucose + params.k_endo - params.k_ins * effect +
             meal_rate + noise;
  g = std::clamp(g, params.g_min, params.g_max);
  GlucoseSimState next;
  next.glucose = g;
  next.prev_dose = insulin;
  next.prev_prev_dose = state.prev_dose;
  next.t = state.t + 1;
  return next;
}

// Dynamics-model features: normalized glucose plus the dose kernel window
// (current dose first). The learned target is the one-step glucose change.
inline constexpr std::size_t kGlucoseFeatureDim = 4;

inline std::vector<double> glucose_features(double glucose, double dose,
                                            double prev_dose,
                                            double prev_prev_dose) {
  return {(glucose - 120.0) / 100.0, dose, prev_dose, prev_prev_dose};
}

// Meal-free exploration episodes with uniform random dosing; rows pair the
// feature window with the realized glucose change.
inline Dataset build_glucose_training(std::size_t n_episodes,
                                      std::size_t steps_per_episode,
                                      std::uint64_t seed,
                                      const GlucoseParams& params = {},
                                      double max_dose = 1.5) {
  detail::require(n_episodes >= 1 && steps_per_episode >= 4,
                  "build_glucose_training: need >= 1 episode of >= 4 steps");
  RngStream rng(seed, 20);
  Dataset d;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    GlucoseSimState s;
    s.glucose = rng.uniform(60.0, 350.0);
    for (std::size_t t = 0; t < steps_per_episode; ++t) {
      const double dose = rng.uniform(0.0, max_dose);
      d.inputs.push_back(glucose_features(s.glucose, dose, s.prev_dose,
                                          s.prev_prev_dose));
      const GlucoseSimState next = glucose_step(
          s, dose, params, 0.0, rng.normal(0.0, params.noise_sd));
      d.targets.push_back({next.glucose - s.glucose});
      s = next;
    }
  }
  return d;
}

// Interval prediction fed to the planner: lower envelope, central estimate,
// upper envelope of next-step glucose. au/eu carry the member entropy
// decomposition when the backing model tracks members (0 otherwise).
struct GlucoseTriplet {
  double lo = 0.0;
  double mean = 0.0;
  double hi = 0.0;
  double au = 0.0;
  double eu = 0.0;
};

// Planning model over imagined dose sequences. prepare() freezes all of the
// call's randomness (weight draws, per-step noise) so every candidate
// sequence is scored under common random numbers.
class GlucoseRolloutModel {
 public:
  virtual ~GlucoseRolloutModel() = default;
  virtual void prepare(const GlucoseSimState& state, RngStream& rng) = 0;
  virtual void begin_candidate() = 0;
  virtual GlucoseTriplet step(double insulin) = 0;
};

enum class UqMode { ibnn, ebnn };

// Rollout model backed by the trained posterior members. Each member keeps
// n_mc sampled weight vectors; every (member, draw) pair propagates its own
// glucose trajectory. IBNN intervals take the envelope of per-member
// Gaussian intervals; the ensemble mode moment-matches members first.
class PosteriorRolloutModel : public GlucoseRolloutModel {
 public:
  PosteriorRolloutModel(const PosteriorCredalSet& pcs, std::size_t n_mc,
                        double alpha, UqMode mode,
                        const GlucoseParams& params = {})
      : pcs_(pcs), n_mc_(n_mc), mode_(mode), params_(params) {
    detail::require(n_mc >= 2, "PosteriorRolloutModel: n_mc must be >= 2");
    detail::require(alpha > 0.0 && alpha < 1.0,
                    "PosteriorRolloutModel: alpha must be in (0, 1)");
    z_ = normal_quantile(1.0 - alpha / 2.0);
    for (const auto& q : pcs.posteriors)
      detail::require(q.arch.input_dim() == kGlucoseFeatureDim &&
                          q.arch.output_dim() == 1,
                      "PosteriorRolloutModel: posterior shape mismatch");
  }

  void prepare(const GlucoseSimState& state, RngStream& rng) override {
    state0_ = state;
    const std::size_t k = pcs_.posteriors.size();
    theta_.assign(k, {});
    for (std::size_t m = 0; m < k; ++m) {
      const MeanFieldPosterior& q = pcs_.posteriors[m];
      const std::size_t p = q.arch.param_count();
      theta_[m].assign(n_mc_, std::vector<double>(p));
      for (std::size_t s = 0; s < n_mc_; ++s)
        for (std::size_t i = 0; i < p; ++i)
          theta_[m][s][i] =
              q.mean[i] + std::exp(0.5 * q.log_var[i]) * rng.normal();
    }
    // Per (member, draw, horizon step) likelihood noise, reused verbatim by
    // every candidate. Horizon is unknown here; draw lazily per step index.
    noise_.clear();
    noise_rng_seed_ = rng.next_u64();
  }

  void begin_candidate() override {
    glucose_.assign(pcs_.posteriors.size(),
                    std::vector<double>(n_mc_, state0_.glucose));
    h1_ = state0_.prev_dose;
    h2_ = state0_.prev_prev_dose;
    step_idx_ = 0;
  }

  GlucoseTriplet step(double insulin) override {
    ensure_noise(step_idx_);
    const std::size_t k = pcs_.posteriors.size();
    std::vector<double> member_mean(k), member_var(k);
    for (std::size_t m = 0; m < k; ++m) {
      const MeanFieldPosterior& q = pcs_.posteriors[m];
      const double noise_sd = std::sqrt(q.noise_var);
      double mean = 0.0;
      for (std::size_t s = 0; s < n_mc_; ++s) {
        const std::vector<double> feat =
            glucose_features(glucose_[m][s], insulin, h1_, h2_);
        mlp_forward(q.arch, theta_[m][s], feat, ws_);
        const double dg = ws_.act.back()[0] + noise_sd * noise_[step_idx_][m][s];
        const double g = std::clamp(glucose_[m][s] + dg, params_.g_min,
                                    params_.g_max);
        glucose_[m][s] = g;
        mean += g;
      }
      mean /= static_cast<double>(n_mc_);
      double var = 0.0;
      for (std::size_t s = 0; s < n_mc_; ++s) {
        const double d = glucose_[m][s] - mean;
        var += d * d;
      }
      var /= static_cast<double>(n_mc_ - 1);
      member_mean[m] = mean;
      member_var[m] = var;
    }
    h2_ = h1_;
    h1_ = insulin;
    ++step_idx_;

    GlucoseTriplet t;
    double center = 0.0;
    for (double m : member_mean) center += m;
    t.mean = center / static_cast<double>(k);
    double h_lo = std::numeric_limits<double>::infinity();
    double h_hi = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      // Clamped trajectories can collapse a member's spread to zero; floor
      // the variance so the entropy stays finite.
      const double h = entropy_gaussian_1d(std::max(member_var[m], 1e-12));
      h_lo = std::min(h_lo, h);
      h_hi = std::max(h_hi, h);
    }
    t.au = h_lo;
    t.eu = h_hi - h_lo;
    if (mode_ == UqMode::ibnn) {
      t.lo = std::numeric_limits<double>::infinity();
      t.hi = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < k; ++m) {
        const double sd = std::sqrt(member_var[m]);
        t.lo = std::min(t.lo, member_mean[m] - z_ * sd);
        t.hi = std::max(t.hi, member_mean[m] + z_ * sd);
      }
    } else {
      double mu = t.mean;
      double aleatoric = 0.0, spread = 0.0;
      for (std::size_t m = 0; m < k; ++m) {
        aleatoric += member_var[m];
        const double d = member_mean[m] - mu;
        spread += d * d;
      }
      aleatoric /= static_cast<double>(k);
      double var = aleatoric;
      if (k > 1) var += spread / static_cast<double>(k - 1);
      const double sd = std::sqrt(var);
      t.mean = mu;
      t.lo = mu - z_ * sd;
      t.hi = mu + z_ * sd;
    }
    return t;
  }

  // Per-member next-step moments of the most recent step, for diagnostics.
  std::size_t n_members() const { return pcs_.posteriors.size(); }

 private:
  void ensure_noise(std::size_t step) {
    while (noise_.size() <= step) {
      RngStream r(noise_rng_seed_, 0x6e6f6973ULL + noise_.size());
      std::vector<std::vector<double>> layer(pcs_.posteriors.size(),
                                             std::vector<double>(n_mc_));
      for (auto& row : layer)
        for (auto& v : row) v = r.normal();
      noise_.push_back(std::move(layer));
    }
  }

  const PosteriorCredalSet& pcs_;
  std::size_t n_mc_;
  UqMode mode_;
  GlucoseParams params_;
  double z_ = 0.0;
  GlucoseSimState state0_;
  std::vector<std::vector<std::vector<double>>> theta_;   // [member][draw][p]
  std::vector<std::vector<std::vector<double>>> noise_;   // [step][member][draw]
  std::uint64_t noise_rng_seed_ = 0;
  std::vector<std::vector<double>> glucose_;               // [member][draw]
  double h1_ = 0.0, h2_ = 0.0;
  std::size_t step_idx_ = 0;
  MlpWorkspace ws_;
};

struct MpcParams {
  std::size_t n_candidates = 256;
  std::size_t horizon = 5;
  double max_dose = 1.5;
  double w_track = 1.0;
  double w_safety = 100.0;
  double w_dose = 0.1;
  double target = 120.0;
  double safe_lo = 70.0;
  double safe_hi = 300.0;
};

struct MpcDecision {
  double dose = 0.0;
  double cost = 0.0;
  GlucoseTriplet first_step;  // planned interval for the applied dose
};

// Random-shooting planner. Candidate 0 is the all-zeros sequence so "do
// nothing" is always on the menu; remaining candidates draw uniform doses.
// Safety uses the interval envelope: the squared hinge charges the lower
// edge against safe_lo and the upper edge against safe_hi.
inline MpcDecision mpc_control(GlucoseRolloutModel& model,
                               const GlucoseSimState& state, RngStream& rng,
                               const MpcParams& mpc = {}) {
  detail::require(mpc.n_candidates >= 1 && mpc.horizon >= 1,
                  "mpc_control: need >= 1 candidate and >= 1 step");
  model.prepare(state, rng);
  std::vector<double> doses(mpc.horizon);
  MpcDecision best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < mpc.n_candidates; ++c) {
    for (std::size_t t = 0; t < mpc.horizon; ++t)
      doses[t] = (c == 0) ? 0.0 : rng.uniform(0.0, mpc.max_dose);
    model.begin_candidate();
    double cost = 0.0;
    GlucoseTriplet first{};
    for (std::size_t t = 0; t < mpc.horizon; ++t) {
      const GlucoseTriplet g = model.step(doses[t]);
      if (t == 0) first = g;
      const double track = g.mean - mpc.target;
      const double breach = std::max(0.0, mpc.safe_lo - g.lo) +
                            std::max(0.0, g.hi - mpc.safe_hi);
      cost += mpc.w_track * track * track +
              mpc.w_safety * breach * breach + mpc.w_dose * doses[t];
    }
    if (cost < best.cost) {
      best.cost = cost;
      best.dose = doses[0];
      best.first_step = first;
    }
  }
  return best;
}

struct ControlEpisode {
  std::vector<double> trace;             // glucose, length steps + 1
  std::vector<double> doses;             // length steps
  std::vector<GlucoseTriplet> planned;   // first-step plan per step
  double t_unsafe = 0.0;
};

// Closed-loop episode under receding-horizon control. The environment and
// planning streams derive only from (seed, episode), so rival models replay
// identical disturbances and identical candidate menus.
inline ControlEpisode run_control_episode(GlucoseRolloutModel& model,
                                          const MealSchedule& meals,
                                          std::size_t steps,
                                          std::uint64_t seed,
                                          std::uint64_t episode,
                                          double g0,
                                          const GlucoseParams& params = {},
                                          const MpcParams& mpc = {}) {
  RngStream env_rng(hash_combine(seed, 0xe9150de0ULL), episode);
  RngStream plan_rng(hash_combine(seed, 0x91a70000ULL), episode);
  GlucoseSimState s;
  s.glucose = g0;
  ControlEpisode ep;
  ep.trace.push_back(s.glucose);
  for (std::size_t t = 0; t < steps; ++t) {
    RngStream step_rng = plan_rng.substream(t);
    const MpcDecision d = mpc_control(model, s, step_rng, mpc);
    const double meal = meal_rate_at(meals, s.t, params);
    const double noise = env_rng.normal(0.0, params.noise_sd);
    s = glucose_step(s, d.dose, params, meal, noise);
    ep.trace.push_back(s.glucose);
    ep.doses.push_back(d.dose);
    ep.planned.push_back(d.first_step);
  }
  ep.t_unsafe = t_unsafe(ep.trace, mpc.safe_lo, mpc.safe_hi);
  return ep;
}

}  // namespace ibnn
