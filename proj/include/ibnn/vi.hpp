#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibnn/net.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/rng.hpp"

namespace ibnn {

enum class MeanPattern { negative, zero, positive };

// Weight-space Gaussian prior: every parameter gets mean -c, 0, or +c and a
// shared variance.
struct GaussianPriorSpec {
  MeanPattern mean_pattern = MeanPattern::zero;
  double magnitude = 0.1;  // c >= 0
  double var = 1.0;

  void validate() const {
    detail::require(magnitude >= 0.0, "GaussianPriorSpec: magnitude < 0");
    detail::require(std::isfinite(var) && var > 0.0,
                    "GaussianPriorSpec: var must be positive");
  }

  double mean_value() const {
    switch (mean_pattern) {
      case MeanPattern::negative: return -magnitude;
      case MeanPattern::positive: return magnitude;
      case MeanPattern::zero: default: return 0.0;
    }
  }

  bool operator==(const GaussianPriorSpec& o) const {
    return mean_pattern == o.mean_pattern && magnitude == o.magnitude &&
           var == o.var;
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t mc_samples_per_step = 1;
  std::uint64_t seed = 0;
  double likelihood_noise_var = 1.0;  // gaussian_regression head only

  void validate() const {
    detail::require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(learning_rate > 0.0, "TrainConfig: learning_rate <= 0");
    detail::require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require(mc_samples_per_step >= 1,
                    "TrainConfig: mc_samples_per_step must be >= 1");
    detail::require(likelihood_noise_var > 0.0,
                    "TrainConfig: likelihood_noise_var <= 0");
  }
};

// Supervised pairs; targets holds regression outputs, labels classification
// classes. Exactly one of the two is consulted, chosen by the net head.
struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }

  void validate_for(const MlpArchitecture& arch) const {
    detail::require(!inputs.empty(), "Dataset: empty");
    for (const auto& x : inputs)
      detail::require(x.size() == static_cast<std::size_t>(arch.input_dim()),
                      "Dataset: input dimension mismatch");
    if (arch.head == Head::gaussian_regression) {
      detail::require(targets.size() == inputs.size(),
                      "Dataset: targets row count mismatch");
      for (const auto& y : targets)
        detail::require(
            y.size() == static_cast<std::size_t>(arch.output_dim()),
            "Dataset: target dimension mismatch");
    } else {
      detail::require(labels.size() == inputs.size(),
                      "Dataset: labels row count mismatch");
      for (int l : labels)
        detail::require(l >= 0 && l < arch.output_dim(),
                        "Dataset: label out of range");
    }
  }
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  double final_elbo = 0.0;
  std::size_t epochs = 0;
};

// Fully factorized Gaussian over all weights and biases, plus the likelihood
// it was trained under.
struct MeanFieldPosterior {
  MlpArchitecture arch;
  std::vector<double> mean;
  std::vector<double> log_var;
  double noise_var = 1.0;  // observation noise of the gaussian head
  TrainingMetadata metadata;

  void validate() const {
    arch.validate();
    detail::require(mean.size() == arch.param_count() &&
                        log_var.size() == arch.param_count(),
                    "MeanFieldPosterior: parameter count mismatch");
    detail::require(detail::all_finite(mean) && detail::all_finite(log_var),
                    "MeanFieldPosterior: non-finite parameters");
  }

  DiagonalGaussian as_gaussian() const {
    std::vector<double> v(log_var.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(log_var[i]);
    return DiagonalGaussian(mean, std::move(v));
  }
};

struct TrainingDiverged : std::runtime_error {
  std::size_t epoch;
  explicit TrainingDiverged(std::size_t ep)
      : std::runtime_error("training diverged: non-finite ELBO at epoch " +
                           std::to_string(ep)),
        epoch(ep) {}
};

// Analytic KL(q || prior) for the factorized Gaussian posterior.
inline double kl_to_prior(const MeanFieldPosterior& q,
                          const GaussianPriorSpec& prior) {
  const double pm = prior.mean_value();
  const double pv = prior.var;
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double vq = std::exp(q.log_var[i]);
    const double dm = pm - q.mean[i];
    kl += 0.5 * (vq / pv + dm * dm / pv - 1.0 + std::log(pv) - q.log_var[i]);
  }
  return kl;
}

namespace detail {

// Shared ELBO evaluation/gradient core. Consumes exactly
// mc_samples * param_count normal draws from rng, so a cloned stream makes
// finite-difference probes see the same noise (common random numbers).
// grad_mean/grad_log_var, when non-null, receive the full ELBO gradient.
inline double elbo_core(const MeanFieldPosterior& q,
                        const GaussianPriorSpec& prior, const Dataset& data,
                        const std::vector<std::size_t>& rows,
                        std::size_t dataset_size, std::size_t mc_samples,
                        RngStream& rng, MlpWorkspace& ws,
                        std::vector<double>* grad_mean,
                        std::vector<double>* grad_log_var) {
  const std::size_t n_params = q.mean.size();
  const double scale = static_cast<double>(dataset_size) /
                       static_cast<double>(rows.size());

  std::vector<double> eps(n_params), theta(n_params), sd(n_params);
  for (std::size_t i = 0; i < n_params; ++i)
    sd[i] = std::exp(0.5 * q.log_var[i]);

  std::vector<double> g_theta, g_out, y_scratch;
  if (grad_mean) {
    grad_mean->assign(n_params, 0.0);
    grad_log_var->assign(n_params, 0.0);
    g_theta.resize(n_params);
  }

  double loglik_acc = 0.0;
  const double mc_w = 1.0 / static_cast<double>(mc_samples);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    for (std::size_t i = 0; i < n_params; ++i) {
      eps[i] = rng.normal();
      theta[i] = q.mean[i] + sd[i] * eps[i];
    }
    if (grad_mean) std::fill(g_theta.begin(), g_theta.end(), 0.0);
    double batch_loglik = 0.0;
    for (std::size_t r : rows) {
      mlp_forward(q.arch, theta, data.inputs[r], ws);
      const std::vector<double>& out = ws.act.back();
      if (q.arch.head == Head::gaussian_regression) {
        batch_loglik += log_lik_regression(out, data.targets[r], q.noise_var);
        if (grad_mean) {
          head_grad_regression(out, data.targets[r], q.noise_var, g_out);
          mlp_backward(q.arch, theta, ws, g_out, 1.0, g_theta);
        }
      } else {
        batch_loglik += log_lik_classification(out, data.labels[r]);
        if (grad_mean) {
          head_grad_classification(out, data.labels[r], g_out);
          mlp_backward(q.arch, theta, ws, g_out, 1.0, g_theta);
        }
      }
    }
    loglik_acc += batch_loglik;
    if (grad_mean) {
      const double w = scale * mc_w;
      for (std::size_t i = 0; i < n_params; ++i) {
        (*grad_mean)[i] += w * g_theta[i];
        (*grad_log_var)[i] += w * g_theta[i] * eps[i] * sd[i] * 0.5;
      }
    }
  }

  const double kl = kl_to_prior(q, prior);
  if (grad_mean) {
    const double pm = prior.mean_value();
    const double pv = prior.var;
    for (std::size_t i = 0; i < n_params; ++i) {
      (*grad_mean)[i] -= (q.mean[i] - pm) / pv;
      (*grad_log_var)[i] -= 0.5 * (sd[i] * sd[i] / pv - 1.0);
    }
  }
  return scale * mc_w * loglik_acc - kl;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

// Reparameterized ELBO estimate:
//   (dataset_size / batch_size) * E_q[log p(batch | theta)] - KL(q || prior).
// Deterministic given rng.
inline double elbo(const MeanFieldPosterior& q, const GaussianPriorSpec& prior,
                   const Dataset& batch, RngStream& rng,
                   std::size_t mc_samples, std::size_t dataset_size) {
  q.validate();
  prior.validate();
  batch.validate_for(q.arch);
  detail::require(mc_samples >= 1, "elbo: mc_samples must be >= 1");
  detail::require(dataset_size >= batch.size(),
                  "elbo: dataset_size smaller than batch");
  MlpWorkspace ws;
  return detail::elbo_core(q, prior, batch, detail::all_rows(batch.size()),
                           dataset_size, mc_samples, rng, ws, nullptr,
                           nullptr);
}

// Analytic ELBO gradient with the same draw sequence as elbo().
inline double elbo_gradient(const MeanFieldPosterior& q,
                            const GaussianPriorSpec& prior,
                            const Dataset& batch, RngStream& rng,
                            std::size_t mc_samples, std::size_t dataset_size,
                            std::vector<double>& grad_mean,
                            std::vector<double>& grad_log_var) {
  q.validate();
  prior.validate();
  batch.validate_for(q.arch);
  MlpWorkspace ws;
  return detail::elbo_core(q, prior, batch, detail::all_rows(batch.size()),
                           dataset_size, mc_samples, rng, ws, &grad_mean,
                           &grad_log_var);
}

// Stochastic ELBO ascent with Adam. Posterior means start at N(0, 2/fan_in)
// draws, log-variances at log(1e-2). Deterministic given cfg.seed; the
// optional trace receives one mean batch-ELBO value per epoch.
inline MeanFieldPosterior train_vi(const MlpArchitecture& arch,
                                   const GaussianPriorSpec& prior,
                                   const Dataset& data, const TrainConfig& cfg,
                                   std::vector<double>* elbo_trace = nullptr) {
  arch.validate();
  prior.validate();
  cfg.validate();
  data.validate_for(arch);

  const std::size_t n_params = arch.param_count();
  MeanFieldPosterior q;
  q.arch = arch;
  q.noise_var = cfg.likelihood_noise_var;
  q.mean.resize(n_params);
  q.log_var.assign(n_params, std::log(1e-2));
  q.metadata.seed = cfg.seed;
  q.metadata.epochs = cfg.epochs;

  RngStream init_rng(cfg.seed, 1);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < arch.layer_widths.size(); ++l) {
      const auto in = static_cast<std::size_t>(arch.layer_widths[l]);
      const auto out = static_cast<std::size_t>(arch.layer_widths[l + 1]);
      const double sd = std::sqrt(2.0 / static_cast<double>(in));
      for (std::size_t i = 0; i < (in + 1) * out; ++i)
        q.mean[off + i] = sd * init_rng.normal();
      off += (in + 1) * out;
    }
  }

  RngStream shuffle_rng(cfg.seed, 2);
  RngStream step_rng(cfg.seed, 3);

  // Adam state over the stacked (mean, log_var) vector.
  std::vector<double> m(2 * n_params, 0.0), v(2 * n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step = 0;

  std::vector<std::size_t> perm = detail::all_rows(data.size());
  std::vector<std::size_t> batch_rows;
  std::vector<double> grad_mean, grad_log_var;
  MlpWorkspace ws;
  const std::size_t batch = std::min(cfg.batch_size, data.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream.
    for (std::size_t i = perm.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(perm[i - 1], perm[j]);
    }
    double epoch_elbo = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, perm.size());
      batch_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                        perm.begin() + static_cast<std::ptrdiff_t>(stop));
      const double value = detail::elbo_core(
          q, prior, data, batch_rows, data.size(), cfg.mc_samples_per_step,
          step_rng, ws, &grad_mean, &grad_log_var);
      if (!std::isfinite(value)) throw TrainingDiverged(epoch);
      epoch_elbo += value;
      ++n_batches;
      ++step;
      const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < 2 * n_params; ++i) {
        // Ascent on ELBO == descent on -ELBO.
        const double g = i < n_params ? -grad_mean[i]
                                      : -grad_log_var[i - n_params];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double stepv =
            cfg.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + adam_eps);
        if (i < n_params)
          q.mean[i] -= stepv;
        else
          q.log_var[i - n_params] -= stepv;
      }
    }
    epoch_elbo /= static_cast<double>(n_batches);
    if (elbo_trace) elbo_trace->push_back(epoch_elbo);
    q.metadata.final_elbo = epoch_elbo;
  }
  return q;
}

// Monte-Carlo predictive for the gaussian head. Draws n_mc weight vectors,
// runs the net, and adds observation noise to the recorded samples. The
// returned variance is the weight-induced spread plus noise_var, so it never
// falls below the aleatoric floor.
struct RegressionPredictive {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<EmpiricalSample1D> samples;  // one per output dim

  PredictiveSummary1D dim_summary(std::size_t d) const {
    return PredictiveSummary1D{mean[d], var[d], samples[d]};
  }
};

inline RegressionPredictive predictive_regression(const MeanFieldPosterior& q,
                                                  const std::vector<double>& x,
                                                  std::size_t n_mc,
                                                  RngStream& rng) {
  q.validate();
  detail::require(q.arch.head == Head::gaussian_regression,
                  "predictive_regression: wrong head");
  detail::require(n_mc >= 2, "predictive_regression: n_mc must be >= 2");
  detail::require(x.size() == static_cast<std::size_t>(q.arch.input_dim()),
                  "predictive_regression: input dimension mismatch");
  const auto d_out = static_cast<std::size_t>(q.arch.output_dim());
  const std::size_t n_params = q.mean.size();
  std::vector<double> theta(n_params);
  MlpWorkspace ws;
  std::vector<std::vector<double>> outs(d_out, std::vector<double>(n_mc));
  std::vector<std::vector<double>> noisy(d_out, std::vector<double>(n_mc));
  const double noise_sd = std::sqrt(q.noise_var);
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < n_params; ++i)
      theta[i] = q.mean[i] + std::exp(0.5 * q.log_var[i]) * rng.normal();
    mlp_forward(q.arch, theta, x, ws);
    for (std::size_t d = 0; d < d_out; ++d) {
      outs[d][s] = ws.act.back()[d];
      noisy[d][s] = outs[d][s] + noise_sd * rng.normal();
    }
  }
  RegressionPredictive pred;
  pred.mean.resize(d_out);
  pred.var.resize(d_out);
  for (std::size_t d = 0; d < d_out; ++d) {
    const double mu = std::accumulate(outs[d].begin(), outs[d].end(), 0.0) /
                      static_cast<double>(n_mc);
    double ss = 0.0;
    for (double o : outs[d]) ss += (o - mu) * (o - mu);
    pred.mean[d] = mu;
    pred.var[d] = ss / static_cast<double>(n_mc - 1) + q.noise_var;
    pred.samples.emplace_back(noisy[d]);
  }
  return pred;
}

// Monte-Carlo softmax average plus per-class variance across the draws.
struct ClassificationPredictive {
  CategoricalDist probs;
  std::vector<double> mc_var;
};

inline ClassificationPredictive predictive_classification(
    const MeanFieldPosterior& q, const std::vector<double>& x,
    std::size_t n_mc, RngStream& rng) {
  q.validate();
  detail::require(q.arch.head == Head::categorical_softmax,
                  "predictive_classification: wrong head");
  detail::require(n_mc >= 1, "predictive_classification: n_mc must be >= 1");
  detail::require(x.size() == static_cast<std::size_t>(q.arch.input_dim()),
                  "predictive_classification: input dimension mismatch");
  const auto d_out = static_cast<std::size_t>(q.arch.output_dim());
  const std::size_t n_params = q.mean.size();
  std::vector<double> theta(n_params);
  MlpWorkspace ws;
  std::vector<double> acc(d_out, 0.0), acc2(d_out, 0.0);
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < n_params; ++i)
      theta[i] = q.mean[i] + std::exp(0.5 * q.log_var[i]) * rng.normal();
    mlp_forward(q.arch, theta, x, ws);
    const std::vector<double> p = softmax(ws.act.back());
    for (std::size_t d = 0; d < d_out; ++d) {
      acc[d] += p[d];
      acc2[d] += p[d] * p[d];
    }
  }
  std::vector<double> mean(d_out), mc_var(d_out, 0.0);
  for (std::size_t d = 0; d < d_out; ++d) {
    mean[d] = acc[d] / static_cast<double>(n_mc);
    if (n_mc >= 2)
      mc_var[d] = std::max(0.0, (acc2[d] - static_cast<double>(n_mc) *
                                               mean[d] * mean[d]) /
                                    static_cast<double>(n_mc - 1));
  }
  return ClassificationPredictive{CategoricalDist(std::move(mean)),
                                  std::move(mc_var)};
}

}  // namespace ibnn
