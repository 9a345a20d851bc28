#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ibnn/ibnn.hpp"
#include "ibnn/regions.hpp"

namespace ibnn {

// Moment-combined ensemble summary:
//   mu_ens  = (1/k) sum mu_j
//   var_ens = (1/k) sum var_j  +  (1/(k-1)) sum (mu_j - mu_ens)^2
// The first term is the aleatoric part, the second the epistemic part
// (defined as 0 at k = 1, where the spread divisor is undefined).
struct EnsembleSummary {
  std::vector<double> mu_ens;
  std::vector<double> var_ens;
  std::size_t k = 0;
  std::vector<double> aleatoric_part;
  std::vector<double> epistemic_part;
};

inline EnsembleSummary ebnn_combine(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        members) {
  detail::require(!members.empty(), "ebnn_combine: k must be >= 1");
  const std::size_t d = members.front().first.size();
  for (const auto& [mu, var] : members)
    detail::require(mu.size() == d && var.size() == d,
                    "ebnn_combine: dimension mismatch");
  const auto k = members.size();
  EnsembleSummary s;
  s.k = k;
  s.mu_ens.assign(d, 0.0);
  s.aleatoric_part.assign(d, 0.0);
  s.epistemic_part.assign(d, 0.0);
  s.var_ens.assign(d, 0.0);
  for (const auto& [mu, var] : members)
    for (std::size_t i = 0; i < d; ++i) {
      s.mu_ens[i] += mu[i] / static_cast<double>(k);
      s.aleatoric_part[i] += var[i] / static_cast<double>(k);
    }
  if (k >= 2)
    for (const auto& [mu, var] : members)
      for (std::size_t i = 0; i < d; ++i) {
        const double dm = mu[i] - s.mu_ens[i];
        s.epistemic_part[i] += dm * dm / static_cast<double>(k - 1);
      }
  for (std::size_t i = 0; i < d; ++i)
    s.var_ens[i] = s.aleatoric_part[i] + s.epistemic_part[i];
  return s;
}

inline EnsembleSummary ebnn_combine(const PredictiveCredalSet& pred) {
  detail::require(!pred.regression.empty(),
                  "ebnn_combine: regression members only");
  std::vector<std::pair<std::vector<double>, std::vector<double>>> members;
  members.reserve(pred.regression.size());
  for (const auto& m : pred.regression) members.emplace_back(m.mean, m.var);
  return ebnn_combine(members);
}

// Gaussian HDR of the combined summary for one output dimension.
inline Region1D ebnn_hdr(const EnsembleSummary& s, double alpha,
                         std::size_t dim = 0) {
  detail::require(dim < s.mu_ens.size(), "ebnn_hdr: dimension out of range");
  return hdr_gaussian(s.mu_ens[dim], s.var_ens[dim], alpha);
}

inline std::vector<Region1D> ebnn_box(const EnsembleSummary& s, double alpha,
                                      std::size_t total_dims) {
  detail::require(total_dims >= 1, "ebnn_box: total_dims must be >= 1");
  const double split = alpha / static_cast<double>(total_dims);
  std::vector<Region1D> box;
  box.reserve(s.mu_ens.size());
  for (std::size_t d = 0; d < s.mu_ens.size(); ++d)
    box.push_back(ebnn_hdr(s, split, d));
  return box;
}

// Classification ensemble: plain average of the member probability vectors,
// with the variance attribution carried on per-class probabilities
// (aleatoric = mean within-member MC variance, epistemic = member spread).
struct EnsembleClassification {
  CategoricalDist probs;
  std::vector<double> aleatoric_part;
  std::vector<double> epistemic_part;
};

inline EnsembleClassification ebnn_combine_classification(
    const std::vector<ClassificationPredictive>& members) {
  detail::require(!members.empty(), "ebnn_combine_classification: k >= 1");
  const std::size_t d = members.front().probs.size();
  const auto k = members.size();
  std::vector<double> mean(d, 0.0), alea(d, 0.0), epi(d, 0.0);
  for (const auto& m : members) {
    detail::require(m.probs.size() == d,
                    "ebnn_combine_classification: dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) {
      mean[i] += m.probs.probs[i] / static_cast<double>(k);
      alea[i] += m.mc_var[i] / static_cast<double>(k);
    }
  }
  if (k >= 2)
    for (const auto& m : members)
      for (std::size_t i = 0; i < d; ++i) {
        const double dm = m.probs.probs[i] - mean[i];
        epi[i] += dm * dm / static_cast<double>(k - 1);
      }
  return EnsembleClassification{CategoricalDist(std::move(mean)),
                                std::move(alea), std::move(epi)};
}

}  // namespace ibnn
