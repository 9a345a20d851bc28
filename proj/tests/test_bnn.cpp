#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ibnn/net.hpp"
#include "ibnn/rng.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {
namespace {

MlpArchitecture make_arch(std::vector<int> widths, Activation act,
                          Head head) {
  MlpArchitecture a;
  a.layer_widths = std::move(widths);
  a.activation = act;
  a.head = head;
  return a;
}

TEST(Mlp, ParamCount) {
  auto a = make_arch({2, 3, 2}, Activation::relu, Head::gaussian_regression);
  EXPECT_EQ(a.param_count(), 17u);  // (2+1)*3 + (3+1)*2
  auto b = make_arch({2, 1}, Activation::relu, Head::gaussian_regression);
  EXPECT_EQ(b.param_count(), 3u);
  EXPECT_THROW(
      make_arch({2}, Activation::relu, Head::gaussian_regression).validate(),
      std::invalid_argument);
  EXPECT_THROW(
      make_arch({2, 0}, Activation::relu, Head::gaussian_regression).validate(),
      std::invalid_argument);
}

// Hand-rolled two-layer tanh forward as the oracle.
TEST(Mlp, ForwardMatchesHandComputation) {
  auto arch = make_arch({2, 2, 1}, Activation::tanh, Head::gaussian_regression);
  // Layer 0: W = [[0.1, 0.2], [-0.3, 0.4]], b = (0.05, -0.05).
  // Layer 1: V = (0.7, -0.6), c = 0.2.
  const std::vector<double> params{0.1, 0.2, -0.3, 0.4, 0.05, -0.05,
                                   0.7, -0.6, 0.2};
  const std::vector<double> x{0.5, -1.0};
  MlpWorkspace ws;
  mlp_forward(arch, params, x, ws);
  const double h0 = std::tanh(0.1 * 0.5 + 0.2 * -1.0 + 0.05);
  const double h1 = std::tanh(-0.3 * 0.5 + 0.4 * -1.0 - 0.05);
  const double expected = 0.7 * h0 - 0.6 * h1 + 0.2;
  ASSERT_EQ(ws.act.back().size(), 1u);
  EXPECT_NEAR(ws.act.back()[0], expected, 1e-15);
}

TEST(Mlp, ReluZeroesNegativePreactivations) {
  auto arch = make_arch({1, 1, 1}, Activation::relu, Head::gaussian_regression);
  // Hidden preactivation -2 is clipped, leaving only the output bias.
  const std::vector<double> params{1.0, -2.0, 3.0, 0.25};
  MlpWorkspace ws;
  mlp_forward(arch, params, {0.0}, ws);
  EXPECT_DOUBLE_EQ(ws.act.back()[0], 0.25);
  // A positive preactivation passes through.
  mlp_forward(arch, params, {3.0}, ws);
  EXPECT_DOUBLE_EQ(ws.act.back()[0], 3.0 * 1.0 + 0.25);
}

TEST(Mlp, LastLayerIsAffine) {
  auto arch = make_arch({1, 1}, Activation::tanh, Head::gaussian_regression);
  const std::vector<double> params{-4.0, 1.5};
  MlpWorkspace ws;
  mlp_forward(arch, params, {2.0}, ws);
  EXPECT_DOUBLE_EQ(ws.act.back()[0], -6.5);  // no squashing on the output
}

double loss_regression(const MlpArchitecture& arch,
                       const std::vector<double>& params,
                       const std::vector<double>& x,
                       const std::vector<double>& y, double noise_var,
                       MlpWorkspace& ws) {
  mlp_forward(arch, params, x, ws);
  return log_lik_regression(ws.act.back(), y, noise_var);
}

// Oracle: central finite differences of the log-likelihood, h = 1e-6.
TEST(Mlp, BackwardMatchesFiniteDifferencesRegression) {
  auto arch = make_arch({2, 3, 1}, Activation::tanh, Head::gaussian_regression);
  RngStream rng(21, 0);
  std::vector<double> params(arch.param_count());
  for (auto& p : params) p = rng.uniform(-0.8, 0.8);
  const std::vector<double> x{0.4, -0.7};
  const std::vector<double> y{0.9};
  const double noise_var = 0.5;

  MlpWorkspace ws;
  mlp_forward(arch, params, x, ws);
  std::vector<double> g_out;
  head_grad_regression(ws.act.back(), y, noise_var, g_out);
  std::vector<double> grad(params.size(), 0.0);
  mlp_backward(arch, params, ws, g_out, 1.0, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> pp = params, pm = params;
    pp[i] += h;
    pm[i] -= h;
    const double fd = (loss_regression(arch, pp, x, y, noise_var, ws) -
                       loss_regression(arch, pm, x, y, noise_var, ws)) /
                      (2.0 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

double loss_classification(const MlpArchitecture& arch,
                           const std::vector<double>& params,
                           const std::vector<double>& x, int label,
                           MlpWorkspace& ws) {
  mlp_forward(arch, params, x, ws);
  return log_lik_classification(ws.act.back(), label);
}

TEST(Mlp, BackwardMatchesFiniteDifferencesClassification) {
  auto arch = make_arch({2, 3, 2}, Activation::tanh, Head::categorical_softmax);
  RngStream rng(22, 0);
  std::vector<double> params(arch.param_count());
  for (auto& p : params) p = rng.uniform(-0.8, 0.8);
  const std::vector<double> x{-0.2, 0.6};
  const int label = 1;

  MlpWorkspace ws;
  mlp_forward(arch, params, x, ws);
  std::vector<double> g_out;
  head_grad_classification(ws.act.back(), label, g_out);
  std::vector<double> grad(params.size(), 0.0);
  mlp_backward(arch, params, ws, g_out, 1.0, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> pp = params, pm = params;
    pp[i] += h;
    pm[i] -= h;
    const double fd = (loss_classification(arch, pp, x, label, ws) -
                       loss_classification(arch, pm, x, label, ws)) /
                      (2.0 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Mlp, BackwardScaleMultipliesGradient) {
  auto arch = make_arch({2, 3, 1}, Activation::tanh, Head::gaussian_regression);
  RngStream rng(23, 0);
  std::vector<double> params(arch.param_count());
  for (auto& p : params) p = rng.uniform(-0.5, 0.5);
  MlpWorkspace ws;
  mlp_forward(arch, params, {0.1, 0.2}, ws);
  std::vector<double> g_out;
  head_grad_regression(ws.act.back(), {1.0}, 1.0, g_out);
  std::vector<double> g1(params.size(), 0.0), g2(params.size(), 0.0);
  mlp_backward(arch, params, ws, g_out, 1.0, g1);
  mlp_forward(arch, params, {0.1, 0.2}, ws);
  mlp_backward(arch, params, ws, g_out, 2.0, g2);
  for (std::size_t i = 0; i < g1.size(); ++i)
    EXPECT_NEAR(g2[i], 2.0 * g1[i], 1e-14);
}

TEST(Heads, SoftmaxAndLogLik) {
  const std::vector<double> out{2.0, -1.0, 0.5};
  const auto p = softmax(out);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_GT(p[0], p[2]);
  EXPECT_NEAR(log_lik_classification(out, 0), std::log(p[0]), 1e-12);
  // Shifting all logits leaves the softmax unchanged.
  const auto q = softmax({102.0, 99.0, 100.5});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-12);
}

// KL of a two-parameter posterior to the standard prior: the log terms
// cancel, leaving exactly 0.315.
TEST(Vi, KlToPriorClosedForm) {
  MeanFieldPosterior q;
  q.arch = make_arch({1, 1}, Activation::relu, Head::gaussian_regression);
  q.mean = {0.3, -0.2};
  q.log_var = {std::log(0.5), std::log(2.0)};
  GaussianPriorSpec prior;  // zero mean, var 1
  EXPECT_NEAR(kl_to_prior(q, prior), 0.315, 1e-15);
  // Shifted prior adds (pm - mu)^2 / (2 pv) per coordinate.
  GaussianPriorSpec shifted;
  shifted.mean_pattern = MeanPattern::positive;
  shifted.magnitude = 0.1;
  const double extra = 0.5 * ((0.1 - 0.3) * (0.1 - 0.3) - 0.3 * 0.3 +
                              (0.1 + 0.2) * (0.1 + 0.2) - 0.2 * 0.2);
  EXPECT_NEAR(kl_to_prior(q, shifted), 0.315 + extra, 1e-14);
}

TEST(Vi, PriorSpecValidation) {
  GaussianPriorSpec p;
  p.var = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  GaussianPriorSpec m;
  m.magnitude = -0.1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  GaussianPriorSpec neg;
  neg.mean_pattern = MeanPattern::negative;
  neg.magnitude = 0.25;
  EXPECT_DOUBLE_EQ(neg.mean_value(), -0.25);
}

Dataset tiny_regression(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    d.inputs.push_back({x});
    d.targets.push_back({0.8 * x + 0.1 + 0.05 * rng.normal()});
  }
  return d;
}

// The ELBO estimate consumes exactly mc_samples * param_count normal draws,
// so a cloned stream sees identical noise before and after the call.
TEST(Vi, ElboDrawCountContract) {
  auto arch = make_arch({1, 3, 1}, Activation::tanh, Head::gaussian_regression);
  MeanFieldPosterior q;
  q.arch = arch;
  q.noise_var = 0.1;
  RngStream init(31, 0);
  q.mean.resize(arch.param_count());
  for (auto& m : q.mean) m = init.uniform(-0.5, 0.5);
  q.log_var.assign(arch.param_count(), std::log(0.05));
  GaussianPriorSpec prior;
  Dataset data = tiny_regression(6, 32);

  const std::size_t mc = 3;
  RngStream used(77, 5), fresh(77, 5);
  elbo(q, prior, data, used, mc, data.size());
  for (std::size_t i = 0; i < mc * arch.param_count(); ++i) fresh.normal();
  EXPECT_EQ(used.normal(), fresh.normal());
}

TEST(Vi, ElboGradientSharesDrawsWithElbo) {
  auto arch = make_arch({1, 3, 1}, Activation::tanh, Head::gaussian_regression);
  MeanFieldPosterior q;
  q.arch = arch;
  q.noise_var = 0.1;
  RngStream init(33, 0);
  q.mean.resize(arch.param_count());
  for (auto& m : q.mean) m = init.uniform(-0.5, 0.5);
  q.log_var.assign(arch.param_count(), std::log(0.05));
  GaussianPriorSpec prior;
  Dataset data = tiny_regression(6, 34);

  RngStream r1(55, 0), r2(55, 0);
  std::vector<double> gm, gv;
  const double v1 = elbo(q, prior, data, r1, 4, data.size());
  const double v2 = elbo_gradient(q, prior, data, r2, 4, data.size(), gm, gv);
  EXPECT_NEAR(v1, v2, 1e-12);
}

// Criterion oracle: central finite differences of elbo() under common
// random numbers, h = 1e-5, agreement to 1e-4 absolute.
TEST(Vi, ElboGradientMatchesFiniteDifferences) {
  auto arch = make_arch({1, 3, 1}, Activation::tanh, Head::gaussian_regression);
  const std::size_t n_params = arch.param_count();  // 10
  MeanFieldPosterior q;
  q.arch = arch;
  q.noise_var = 0.2;
  RngStream init(35, 0);
  q.mean.resize(n_params);
  for (auto& m : q.mean) m = init.uniform(-0.6, 0.6);
  q.log_var.resize(n_params);
  for (auto& v : q.log_var) v = std::log(init.uniform(0.02, 0.1));
  GaussianPriorSpec prior;
  prior.var = 2.0;
  Dataset data = tiny_regression(8, 36);
  const std::size_t mc = 3;
  const std::uint64_t kSeed = 91, kStream = 4;

  std::vector<double> gm, gv;
  {
    RngStream rng(kSeed, kStream);
    elbo_gradient(q, prior, data, rng, mc, data.size(), gm, gv);
  }
  const double h = 1e-5;
  auto elbo_at = [&](const MeanFieldPosterior& probe) {
    RngStream rng(kSeed, kStream);  // identical draws for every probe
    return elbo(probe, prior, data, rng, mc, data.size());
  };
  for (std::size_t i = 0; i < n_params; ++i) {
    MeanFieldPosterior qp = q, qm = q;
    qp.mean[i] += h;
    qm.mean[i] -= h;
    EXPECT_NEAR(gm[i], (elbo_at(qp) - elbo_at(qm)) / (2.0 * h), 1e-4);
    MeanFieldPosterior vp = q, vm = q;
    vp.log_var[i] += h;
    vm.log_var[i] -= h;
    EXPECT_NEAR(gv[i], (elbo_at(vp) - elbo_at(vm)) / (2.0 * h), 1e-4);
  }
}

TEST(Vi, TrainDeterministicGivenSeed) {
  auto arch = make_arch({1, 4, 1}, Activation::tanh, Head::gaussian_regression);
  Dataset data = tiny_regression(24, 40);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.01;
  cfg.seed = 9;
  cfg.likelihood_noise_var = 0.01;
  MeanFieldPosterior a = train_vi(arch, GaussianPriorSpec{}, data, cfg);
  MeanFieldPosterior b = train_vi(arch, GaussianPriorSpec{}, data, cfg);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.log_var, b.log_var);
  EXPECT_EQ(a.metadata.seed, 9u);
  EXPECT_EQ(a.metadata.epochs, 30u);
  EXPECT_TRUE(std::isfinite(a.metadata.final_elbo));

  cfg.seed = 10;
  MeanFieldPosterior c = train_vi(arch, GaussianPriorSpec{}, data, cfg);
  EXPECT_NE(a.mean, c.mean);
}

TEST(Vi, ElboTraceImproves) {
  auto arch = make_arch({1, 4, 1}, Activation::tanh, Head::gaussian_regression);
  Dataset data = tiny_regression(32, 41);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 0.02;
  cfg.seed = 3;
  cfg.likelihood_noise_var = 0.01;
  std::vector<double> trace;
  train_vi(arch, GaussianPriorSpec{}, data, cfg, &trace);
  ASSERT_EQ(trace.size(), 60u);
  EXPECT_GT(trace.back(), trace.front());
}

TEST(Vi, DivergenceThrowsWithEpoch) {
  auto arch = make_arch({1, 4, 1}, Activation::relu, Head::gaussian_regression);
  Dataset data = tiny_regression(16, 42);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e8;  // log-variances blow past exp overflow
  cfg.seed = 1;
  cfg.likelihood_noise_var = 1e-6;
  EXPECT_THROW(train_vi(arch, GaussianPriorSpec{}, data, cfg),
               TrainingDiverged);
}

TEST(Vi, ConfigValidation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  TrainConfig cfg2;
  cfg2.learning_rate = 0.0;
  EXPECT_THROW(cfg2.validate(), std::invalid_argument);
  TrainConfig cfg3;
  cfg3.likelihood_noise_var = 0.0;
  EXPECT_THROW(cfg3.validate(), std::invalid_argument);
}

// Bayesian linear regression reference: with design columns (x0, x1, 1),
// posterior precision X'X/s2 + I and mean solved by elimination. VI on the
// equivalent {2,1} net should land near it.
TEST(Vi, LinearModelApproachesConjugatePosterior) {
  const std::size_t n = 20;
  RngStream rng(50, 0);
  Dataset data;
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  const double noise_sd = 0.1;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = rng.normal(), x1 = rng.normal();
    const double target = 0.7 * x0 - 0.4 * x1 + 0.3 + noise_sd * rng.normal();
    data.inputs.push_back({x0, x1});
    data.targets.push_back({target});
    X.push_back({x0, x1, 1.0});
    y.push_back(target);
  }
  const double s2 = noise_sd * noise_sd;

  // Normal equations: A = X'X/s2 + I, b = X'y/s2.
  double A[3][3] = {};
  double b[3] = {};
  for (std::size_t i = 0; i < n; ++i)
    for (int r = 0; r < 3; ++r) {
      b[r] += X[i][static_cast<std::size_t>(r)] * y[i] / s2;
      for (int c = 0; c < 3; ++c)
        A[r][c] += X[i][static_cast<std::size_t>(r)] *
                   X[i][static_cast<std::size_t>(c)] / s2;
    }
  for (int r = 0; r < 3; ++r) A[r][r] += 1.0;
  // Invert by Gauss-Jordan to get both the mean and the marginal variances.
  double inv[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  double M[3][3];
  std::copy(&A[0][0], &A[0][0] + 9, &M[0][0]);
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
    std::swap(M[col], M[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = M[col][col];
    for (int c = 0; c < 3; ++c) {
      M[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = M[r][col];
      for (int c = 0; c < 3; ++c) {
        M[r][c] -= f * M[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  double post_mean[3];
  for (int r = 0; r < 3; ++r)
    post_mean[r] = inv[r][0] * b[0] + inv[r][1] * b[1] + inv[r][2] * b[2];

  auto arch = make_arch({2, 1}, Activation::relu, Head::gaussian_regression);
  TrainConfig cfg;
  cfg.epochs = 1500;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 20;
  cfg.mc_samples_per_step = 8;
  cfg.seed = 5;
  cfg.likelihood_noise_var = s2;
  MeanFieldPosterior q = train_vi(arch, GaussianPriorSpec{}, data, cfg);

  // Net parameter order is (w0, w1, bias), matching the design columns.
  double err = 0.0, ref = 0.0;
  for (int r = 0; r < 3; ++r) {
    err += (q.mean[static_cast<std::size_t>(r)] - post_mean[r]) *
           (q.mean[static_cast<std::size_t>(r)] - post_mean[r]);
    ref += post_mean[r] * post_mean[r];
  }
  EXPECT_LE(std::sqrt(err), 0.10 * std::sqrt(ref));
  // Marginal variances within a loose band; the strict bound lives in the
  // acceptance harness.
  for (int r = 0; r < 3; ++r) {
    const double v = std::exp(q.log_var[static_cast<std::size_t>(r)]);
    EXPECT_GT(v, 0.4 * inv[r][r]);
    EXPECT_LT(v, 2.5 * inv[r][r]);
  }
}

TEST(Predictive, RegressionMomentsAndNoiseFloor) {
  MeanFieldPosterior q;
  q.arch = make_arch({1, 1}, Activation::relu, Head::gaussian_regression);
  q.mean = {2.0, 0.5};
  q.log_var = {-40.0, -40.0};  // essentially deterministic weights
  q.noise_var = 0.04;
  RngStream rng(60, 0);
  RegressionPredictive pred = predictive_regression(q, {1.5}, 2000, rng);
  ASSERT_EQ(pred.mean.size(), 1u);
  EXPECT_NEAR(pred.mean[0], 3.5, 0.02);
  EXPECT_GE(pred.var[0], q.noise_var);  // aleatoric floor enters exactly
  EXPECT_NEAR(pred.var[0], q.noise_var, 0.01);
  ASSERT_EQ(pred.samples.size(), 1u);
  EXPECT_EQ(pred.samples[0].size(), 2000u);
  // The recorded samples carry the observation noise.
  double mu = 0.0, ss = 0.0;
  for (double v : pred.samples[0].values) mu += v;
  mu /= 2000.0;
  for (double v : pred.samples[0].values) ss += (v - mu) * (v - mu);
  EXPECT_NEAR(ss / 1999.0, 0.04, 0.01);
  EXPECT_THROW(predictive_regression(q, {1.5}, 1, rng), std::invalid_argument);
  EXPECT_THROW(predictive_regression(q, {1.5, 2.0}, 10, rng),
               std::invalid_argument);
}

TEST(Predictive, ClassificationProbsNearDeterministicNet) {
  MeanFieldPosterior q;
  q.arch = make_arch({2, 2}, Activation::relu, Head::categorical_softmax);
  // W = identity, b = 0: logits equal the input.
  q.mean = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  q.log_var.assign(6, -40.0);
  RngStream rng(61, 0);
  ClassificationPredictive pred =
      predictive_classification(q, {0.2, -0.3}, 50, rng);
  const double p0 = 1.0 / (1.0 + std::exp(-0.5));
  EXPECT_NEAR(pred.probs.probs[0], p0, 1e-4);
  EXPECT_NEAR(pred.probs.probs[0] + pred.probs.probs[1], 1.0, 1e-12);
  for (double v : pred.mc_var) EXPECT_NEAR(v, 0.0, 1e-8);
  // A single draw defines the variance as zero.
  RngStream rng1(61, 1);
  ClassificationPredictive one =
      predictive_classification(q, {0.2, -0.3}, 1, rng1);
  EXPECT_EQ(one.mc_var[0], 0.0);
}

TEST(Predictive, DeterministicGivenStream) {
  MeanFieldPosterior q;
  q.arch = make_arch({1, 3, 1}, Activation::tanh, Head::gaussian_regression);
  RngStream init(62, 0);
  q.mean.resize(q.arch.param_count());
  for (auto& m : q.mean) m = init.uniform(-1.0, 1.0);
  q.log_var.assign(q.arch.param_count(), std::log(0.1));
  q.noise_var = 0.05;
  RngStream r1(63, 2), r2(63, 2);
  RegressionPredictive a = predictive_regression(q, {0.3}, 64, r1);
  RegressionPredictive b = predictive_regression(q, {0.3}, 64, r2);
  EXPECT_EQ(a.mean[0], b.mean[0]);
  EXPECT_EQ(a.var[0], b.var[0]);
  EXPECT_EQ(a.samples[0].values, b.samples[0].values);
}

}  // namespace
}  // namespace ibnn
