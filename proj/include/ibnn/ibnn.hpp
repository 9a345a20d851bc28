#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ibnn/credal.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

struct PriorSet {
  std::vector<GaussianPriorSpec> members;

  void validate() const {
    detail::require(!members.empty() && members.size() <= 8,
                    "PriorSet: need 1..8 members");
    for (const auto& p : members) p.validate();
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j)
        detail::require(!(members[i] == members[j]),
                        "PriorSet: duplicate members");
  }
};

// A likelihood member: an architecture plus its observation-noise model.
struct LikelihoodSpec {
  MlpArchitecture arch;
  double noise_var = 1.0;  // gaussian_regression head only

  bool operator==(const LikelihoodSpec& o) const {
    return arch == o.arch && noise_var == o.noise_var;
  }
};

struct LikelihoodSet {
  std::vector<LikelihoodSpec> members;

  void validate() const {
    detail::require(!members.empty() && members.size() <= 8,
                    "LikelihoodSet: need 1..8 members");
    for (const auto& l : members) {
      l.arch.validate();
      detail::require(l.noise_var > 0.0, "LikelihoodSet: noise_var <= 0");
    }
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j)
        detail::require(!(members[i] == members[j]),
                        "LikelihoodSet: duplicate members");
  }
};

// One trained posterior per prior x likelihood pair, prior-major order.
struct PosteriorCredalSet {
  std::vector<MeanFieldPosterior> posteriors;
  std::vector<std::pair<std::size_t, std::size_t>> provenance;
  bool degenerate = false;  // all comparable pairwise posterior KLs < 1e-3
  std::string warning;
};

// Member training seed: deterministic in (seed, prior index, likelihood
// index) so reruns and member-order refactors cannot silently reseed.
inline std::uint64_t derive_member_seed(std::uint64_t seed, std::size_t prior_idx,
                                        std::size_t lik_idx) {
  return hash_combine(hash_combine(seed, prior_idx + 1), lik_idx + 1);
}

inline PosteriorCredalSet train_ibnn(const PriorSet& priors,
                                     const LikelihoodSet& likelihoods,
                                     const Dataset& data,
                                     const TrainConfig& cfg) {
  priors.validate();
  likelihoods.validate();
  const std::size_t n = priors.members.size() * likelihoods.members.size();
  detail::require(n <= 64, "train_ibnn: more than 64 prior x likelihood pairs");

  PosteriorCredalSet out;
  out.posteriors.reserve(n);
  for (std::size_t i = 0; i < priors.members.size(); ++i) {
    for (std::size_t j = 0; j < likelihoods.members.size(); ++j) {
      TrainConfig member_cfg = cfg;
      member_cfg.seed = derive_member_seed(cfg.seed, i, j);
      member_cfg.likelihood_noise_var = likelihoods.members[j].noise_var;
      try {
        out.posteriors.push_back(train_vi(likelihoods.members[j].arch,
                                          priors.members[i], data, member_cfg));
      } catch (const TrainingDiverged& e) {
        throw std::runtime_error(
            "train_ibnn: member (prior " + std::to_string(i) + ", likelihood " +
            std::to_string(j) + ") diverged: " + e.what());
      }
      out.provenance.emplace_back(i, j);
    }
  }

  // Degenerate-projection detection: if every pair of same-architecture
  // posteriors is essentially one distribution, the credal machinery will
  // understate uncertainty. Surfaced as a warning, never an error.
  bool any_pair = false;
  bool all_close = true;
  for (std::size_t a = 0; a < out.posteriors.size() && all_close; ++a) {
    for (std::size_t b = a + 1; b < out.posteriors.size(); ++b) {
      if (!(out.posteriors[a].arch == out.posteriors[b].arch)) continue;
      any_pair = true;
      const double kl = kl_diag_gaussians(out.posteriors[a].as_gaussian(),
                                          out.posteriors[b].as_gaussian());
      if (kl >= 1e-3) {
        all_close = false;
        break;
      }
    }
  }
  if (any_pair && all_close && n > 1) {
    out.degenerate = true;
    out.warning =
        "degenerate projection: all pairwise posterior KLs < 1e-3; the "
        "posterior credal set has collapsed to a single distribution";
  }
  return out;
}

// Predictive credal set at one query input: one summary per posterior, each
// sampled under its own likelihood member.
struct PredictiveCredalSet {
  std::vector<RegressionPredictive> regression;     // gaussian head
  std::vector<ClassificationPredictive> classification;  // softmax head

  std::size_t size() const {
    return regression.empty() ? classification.size() : regression.size();
  }
};

inline PredictiveCredalSet predictive_credal_set(const PosteriorCredalSet& pcs,
                                                 const std::vector<double>& x,
                                                 std::size_t n_mc,
                                                 RngStream& rng) {
  detail::require(!pcs.posteriors.empty(), "predictive_credal_set: untrained");
  PredictiveCredalSet pred;
  for (std::size_t k = 0; k < pcs.posteriors.size(); ++k) {
    RngStream member_rng = rng.substream(k);
    if (pcs.posteriors[k].arch.head == Head::gaussian_regression)
      pred.regression.push_back(
          predictive_regression(pcs.posteriors[k], x, n_mc, member_rng));
    else
      pred.classification.push_back(
          predictive_classification(pcs.posteriors[k], x, n_mc, member_rng));
  }
  return pred;
}

// AU = min member entropy, EU = max - min. Regression members are
// moment-matched Gaussians (variance includes observation noise);
// classification members are the averaged softmax vectors.
inline AuEu predictive_au_eu(const PredictiveCredalSet& pred) {
  detail::require(pred.size() >= 1, "predictive_au_eu: empty predictive set");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  if (!pred.regression.empty()) {
    for (const auto& m : pred.regression) {
      double h = 0.0;
      for (double v : m.var) h += entropy_gaussian_1d(v);
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
  } else {
    for (const auto& m : pred.classification) {
      const double h = entropy_categorical(m.probs);
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
  }
  return AuEu{lo, hi - lo};
}

inline FiniteCredalSet predictive_finite_credal_set(
    const PredictiveCredalSet& pred) {
  detail::require(!pred.classification.empty(),
                  "predictive_finite_credal_set: classification members only");
  std::vector<CategoricalDist> extremes;
  extremes.reserve(pred.classification.size());
  for (const auto& m : pred.classification) extremes.push_back(m.probs);
  return FiniteCredalSet(std::move(extremes));
}

// Union of member highest-density regions for output dimension d.
inline Region1D ihdr(const PredictiveCredalSet& pred, double alpha,
                     HdrMethod method, std::size_t dim = 0) {
  detail::require(!pred.regression.empty(), "ihdr: regression members only");
  std::vector<PredictiveSummary1D> summaries;
  summaries.reserve(pred.regression.size());
  for (const auto& m : pred.regression) summaries.push_back(m.dim_summary(dim));
  return ihdr(summaries, alpha, method);
}

// Per-dimension boxes for multi-dimensional outputs. The joint level alpha
// is Bonferroni-split across total_dims scalar components (callers spreading
// one budget across several timesteps pass the full scalar count), so each
// Region1D is built at level alpha / total_dims.
struct BoxMetadata {
  double joint_alpha = 0.0;
  std::size_t total_dims = 1;
  bool bonferroni = false;
};

inline std::vector<Region1D> ihdr_box(const PredictiveCredalSet& pred,
                                      double alpha, HdrMethod method,
                                      std::size_t total_dims,
                                      BoxMetadata* meta = nullptr) {
  detail::require(!pred.regression.empty(), "ihdr_box: regression members only");
  detail::require(total_dims >= 1, "ihdr_box: total_dims must be >= 1");
  const std::size_t d_out = pred.regression.front().mean.size();
  const double split = alpha / static_cast<double>(total_dims);
  std::vector<Region1D> box;
  box.reserve(d_out);
  for (std::size_t d = 0; d < d_out; ++d)
    box.push_back(ihdr(pred, split, method, d));
  if (meta) *meta = BoxMetadata{alpha, total_dims, total_dims > 1};
  return box;
}

inline CredibleLabelSet imprecise_credible_set(const PredictiveCredalSet& pred,
                                               double alpha) {
  detail::require(!pred.classification.empty(),
                  "imprecise_credible_set: classification members only");
  std::vector<CategoricalDist> members;
  members.reserve(pred.classification.size());
  for (const auto& m : pred.classification) members.push_back(m.probs);
  return imprecise_credible_set(members, alpha);
}

}  // namespace ibnn
