#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melc/rng.hpp"

namespace melc {

// Fully-connected layer, weights row-major (out x in). When batch_norm is
// set the pre-activations are standardized over the batch and rescaled by
// gamma/beta; used in the projection heads, where it keeps the bootstrap
// objective from collapsing.
struct Dense {
  size_t in = 0;
  size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;
  bool batch_norm = false;
  std::vector<double> gamma;
  std::vector<double> beta;
};

// Multilayer perceptron with rectifier activations on every layer but the
// last. widths.back() is the output dimension.
struct Mlp {
  std::vector<Dense> layers;

  size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  size_t parameter_count() const;
};

Mlp make_mlp(size_t input_dim, const std::vector<size_t>& widths);

// Turns on batch standardization for every hidden layer.
void enable_hidden_batch_norm(Mlp& mlp);

// Seeded He-style initialization: w ~ N(0, sqrt(2/in)), b = 0, gamma = 1.
void init_he(Mlp& mlp, Rng& rng);

// Per-layer activations (and normalized pre-activations for batch-norm
// layers) for a forward batch; needed by backward.
struct MlpCache {
  size_t batch = 0;
  std::vector<std::vector<double>> acts;     // acts[0] = input, acts[l+1] = layer l output
  std::vector<std::vector<double>> bn_z;     // normalized pre-activations per layer
  std::vector<std::vector<double>> bn_inv_std;
};

// input is batch x input_dim row-major; returns batch x output_dim.
// batch-norm layers need batch >= 2.
std::vector<double> mlp_forward(const Mlp& mlp, const std::vector<double>& input,
                                size_t batch, MlpCache* cache = nullptr);

struct MlpGrads {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;
  std::vector<std::vector<double>> gamma;
  std::vector<std::vector<double>> beta;
};

MlpGrads make_grads(const Mlp& mlp);
void zero_grads(MlpGrads& grads);

// Accumulates parameter gradients and returns the gradient w.r.t. the input.
std::vector<double> mlp_backward(const Mlp& mlp, const MlpCache& cache,
                                 const std::vector<double>& grad_out, MlpGrads& grads);

}  // namespace melc
