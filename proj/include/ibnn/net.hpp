#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibnn/distributions.hpp"

namespace ibnn {

enum class Activation { relu, tanh };
enum class Head { gaussian_regression, categorical_softmax };

// Fully connected feed-forward net: layer_widths = {d_in, hidden..., d_out}.
// Parameters are flattened layer by layer, weights (row-major, out x in)
// before biases.
struct MlpArchitecture {
  std::vector<int> layer_widths;
  Activation activation = Activation::relu;
  Head head = Head::gaussian_regression;

  void validate() const {
    detail::require(layer_widths.size() >= 2,
                    "MlpArchitecture: need at least input and output layers");
    for (int w : layer_widths)
      detail::require(w >= 1, "MlpArchitecture: widths must be >= 1");
  }

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::size_t n_weight_layers() const { return layer_widths.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
      n += static_cast<std::size_t>(layer_widths[l] + 1) *
           static_cast<std::size_t>(layer_widths[l + 1]);
    return n;
  }

  bool operator==(const MlpArchitecture& o) const {
    return layer_widths == o.layer_widths && activation == o.activation &&
           head == o.head;
  }
};

// Per-layer activation storage reused across forward/backward passes.
struct MlpWorkspace {
  std::vector<std::vector<double>> act;   // act[0] = input, act[L] = outputs
  std::vector<std::vector<double>> grad;  // backward scratch, same shapes
};

inline void mlp_forward(const MlpArchitecture& arch,
                        const std::vector<double>& params,
                        const std::vector<double>& x, MlpWorkspace& ws) {
  const std::size_t layers = arch.n_weight_layers();
  if (ws.act.size() != layers + 1) {
    ws.act.assign(layers + 1, {});
    ws.grad.assign(layers + 1, {});
  }
  for (std::size_t l = 0; l <= layers; ++l) {
    ws.act[l].resize(static_cast<std::size_t>(arch.layer_widths[l]));
    ws.grad[l].resize(static_cast<std::size_t>(arch.layer_widths[l]));
  }
  ws.act[0] = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = arch.layer_widths[l];
    const int out = arch.layer_widths[l + 1];
    const double* w = params.data() + off;
    const double* b = w + static_cast<std::size_t>(in) * out;
    const std::vector<double>& a = ws.act[l];
    std::vector<double>& z = ws.act[l + 1];
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += row[i] * a[static_cast<std::size_t>(i)];
      if (l + 1 < layers)
        acc = arch.activation == Activation::relu ? std::max(0.0, acc)
                                                  : std::tanh(acc);
      z[static_cast<std::size_t>(o)] = acc;
    }
    off += static_cast<std::size_t>(in + 1) * out;
  }
}

inline double log_lik_regression(const std::vector<double>& outputs,
                                 const std::vector<double>& y,
                                 double noise_var) {
  double lp = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double r = y[k] - outputs[k];
    lp -= 0.5 * (r * r / noise_var + kLogTwoPi + std::log(noise_var));
  }
  return lp;
}

inline double log_lik_classification(const std::vector<double>& outputs,
                                     int label) {
  const double mx = *std::max_element(outputs.begin(), outputs.end());
  double lse = 0.0;
  for (double o : outputs) lse += std::exp(o - mx);
  return outputs[static_cast<std::size_t>(label)] - mx - std::log(lse);
}

inline std::vector<double> softmax(const std::vector<double>& outputs) {
  const double mx = *std::max_element(outputs.begin(), outputs.end());
  std::vector<double> p(outputs.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(outputs[k] - mx);
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return p;
}

// d log-likelihood / d outputs for each head.
inline void head_grad_regression(const std::vector<double>& outputs,
                                 const std::vector<double>& y, double noise_var,
                                 std::vector<double>& g_out) {
  g_out.resize(outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k)
    g_out[k] = (y[k] - outputs[k]) / noise_var;
}

inline void head_grad_classification(const std::vector<double>& outputs,
                                     int label, std::vector<double>& g_out) {
  g_out = softmax(outputs);
  for (double& x : g_out) x = -x;
  g_out[static_cast<std::size_t>(label)] += 1.0;
}

// Reverse-mode accumulation through the fixed MLP graph. ws must hold the
// activations of the matching forward pass; g_out is the gradient at the raw
// outputs. Adds scale * d(quantity)/d(params) into grad (size param_count).
inline void mlp_backward(const MlpArchitecture& arch,
                         const std::vector<double>& params, MlpWorkspace& ws,
                         const std::vector<double>& g_out, double scale,
                         std::vector<double>& grad) {
  const std::size_t layers = arch.n_weight_layers();
  ws.grad[layers] = g_out;
  // Offsets of each layer's block, computed from the back.
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(arch.layer_widths[l] + 1) *
           static_cast<std::size_t>(arch.layer_widths[l + 1]);
  }
  for (std::size_t l = layers; l-- > 0;) {
    const int in = arch.layer_widths[l];
    const int out = arch.layer_widths[l + 1];
    const double* w = params.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + static_cast<std::size_t>(in) * out;
    const std::vector<double>& a = ws.act[l];
    std::vector<double>& gz = ws.grad[l + 1];
    std::vector<double>& ga = ws.grad[l];
    std::fill(ga.begin(), ga.end(), 0.0);
    for (int o = 0; o < out; ++o) {
      const double g = gz[static_cast<std::size_t>(o)] * scale;
      const double* row = w + static_cast<std::size_t>(o) * in;
      double* grow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        grow[i] += g * a[static_cast<std::size_t>(i)];
        ga[static_cast<std::size_t>(i)] +=
            gz[static_cast<std::size_t>(o)] * row[i];
      }
      gb[o] += g;
    }
    if (l > 0) {
      // Activation derivative expressed through the stored activation value.
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double v = ws.act[l][i];
        ga[i] *= arch.activation == Activation::relu
                     ? (v > 0.0 ? 1.0 : 0.0)
                     : (1.0 - v * v);
      }
    }
  }
}

}  // namespace ibnn
