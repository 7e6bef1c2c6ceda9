#include "melc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace melc {

namespace {
constexpr double kBnEpsilon = 1e-5;
}

size_t Mlp::parameter_count() const {
  size_t n = 0;
  for (const auto& layer : layers)
    n += layer.w.size() + layer.b.size() + layer.gamma.size() + layer.beta.size();
  return n;
}

Mlp make_mlp(size_t input_dim, const std::vector<size_t>& widths) {
  if (input_dim == 0 || widths.empty())
    throw std::invalid_argument("make_mlp: need a positive input dim and at least one width");
  Mlp mlp;
  size_t in = input_dim;
  for (size_t width : widths) {
    if (width == 0) throw std::invalid_argument("make_mlp: zero layer width");
    Dense layer;
    layer.in = in;
    layer.out = width;
    layer.w.assign(in * width, 0.0);
    layer.b.assign(width, 0.0);
    mlp.layers.push_back(std::move(layer));
    in = width;
  }
  return mlp;
}

void enable_hidden_batch_norm(Mlp& mlp) {
  for (size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
    Dense& layer = mlp.layers[l];
    layer.batch_norm = true;
    layer.gamma.assign(layer.out, 1.0);
    layer.beta.assign(layer.out, 0.0);
  }
}

void init_he(Mlp& mlp, Rng& rng) {
  for (auto& layer : mlp.layers) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (auto& w : layer.w) w = rng.normal(0.0, stddev);
    for (auto& b : layer.b) b = 0.0;
    if (layer.batch_norm) {
      layer.gamma.assign(layer.out, 1.0);
      layer.beta.assign(layer.out, 0.0);
    }
  }
}

std::vector<double> mlp_forward(const Mlp& mlp, const std::vector<double>& input,
                                size_t batch, MlpCache* cache) {
  if (input.size() != batch * mlp.input_dim())
    throw std::invalid_argument("mlp_forward: input size mismatch");
  if (cache) {
    cache->batch = batch;
    cache->acts.clear();
    cache->acts.push_back(input);
    cache->bn_z.assign(mlp.layers.size(), {});
    cache->bn_inv_std.assign(mlp.layers.size(), {});
  }
  std::vector<double> current = input;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    const Dense& layer = mlp.layers[l];
    const bool is_last = l + 1 == mlp.layers.size();
    std::vector<double> next(batch * layer.out);
    for (size_t n = 0; n < batch; ++n) {
      const double* x = current.data() + n * layer.in;
      double* y = next.data() + n * layer.out;
      for (size_t o = 0; o < layer.out; ++o) {
        const double* wrow = layer.w.data() + o * layer.in;
        double acc = layer.b[o];
        for (size_t i = 0; i < layer.in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
      }
    }
    if (layer.batch_norm) {
      if (batch < 2)
        throw std::invalid_argument("mlp_forward: batch-norm layer needs batch >= 2");
      std::vector<double> z(batch * layer.out);
      std::vector<double> inv_std(layer.out);
      for (size_t o = 0; o < layer.out; ++o) {
        double mean = 0.0;
        for (size_t n = 0; n < batch; ++n) mean += next[n * layer.out + o];
        mean /= static_cast<double>(batch);
        double var = 0.0;
        for (size_t n = 0; n < batch; ++n) {
          const double d = next[n * layer.out + o] - mean;
          var += d * d;
        }
        var /= static_cast<double>(batch);
        inv_std[o] = 1.0 / std::sqrt(var + kBnEpsilon);
        for (size_t n = 0; n < batch; ++n) {
          const double zn = (next[n * layer.out + o] - mean) * inv_std[o];
          z[n * layer.out + o] = zn;
          next[n * layer.out + o] = layer.gamma[o] * zn + layer.beta[o];
        }
      }
      if (cache) {
        cache->bn_z[l] = std::move(z);
        cache->bn_inv_std[l] = std::move(inv_std);
      }
    }
    if (!is_last)
      for (auto& v : next)
        if (v < 0.0) v = 0.0;
    current = std::move(next);
    if (cache) cache->acts.push_back(current);
  }
  return current;
}

MlpGrads make_grads(const Mlp& mlp) {
  MlpGrads grads;
  for (const auto& layer : mlp.layers) {
    grads.w.emplace_back(layer.w.size(), 0.0);
    grads.b.emplace_back(layer.b.size(), 0.0);
    grads.gamma.emplace_back(layer.gamma.size(), 0.0);
    grads.beta.emplace_back(layer.beta.size(), 0.0);
  }
  return grads;
}

void zero_grads(MlpGrads& grads) {
  for (auto& g : grads.w) std::fill(g.begin(), g.end(), 0.0);
  for (auto& g : grads.b) std::fill(g.begin(), g.end(), 0.0);
  for (auto& g : grads.gamma) std::fill(g.begin(), g.end(), 0.0);
  for (auto& g : grads.beta) std::fill(g.begin(), g.end(), 0.0);
}

std::vector<double> mlp_backward(const Mlp& mlp, const MlpCache& cache,
                                 const std::vector<double>& grad_out, MlpGrads& grads) {
  const size_t batch = cache.batch;
  if (cache.acts.size() != mlp.layers.size() + 1)
    throw std::invalid_argument("mlp_backward: cache does not match network");
  if (grad_out.size() != batch * mlp.output_dim())
    throw std::invalid_argument("mlp_backward: grad size mismatch");

  std::vector<double> delta = grad_out;
  for (size_t l = mlp.layers.size(); l-- > 0;) {
    const Dense& layer = mlp.layers[l];
    const bool is_last = l + 1 == mlp.layers.size();
    const std::vector<double>& x = cache.acts[l];
    if (!is_last) {
      // rectifier: zero gradient where the cached output was clipped
      const std::vector<double>& y = cache.acts[l + 1];
      for (size_t idx = 0; idx < delta.size(); ++idx)
        if (y[idx] <= 0.0) delta[idx] = 0.0;
    }
    if (layer.batch_norm) {
      // delta currently holds dL/d(gamma * z + beta)
      const std::vector<double>& z = cache.bn_z[l];
      const std::vector<double>& inv_std = cache.bn_inv_std[l];
      std::vector<double>& gg = grads.gamma[l];
      std::vector<double>& gb = grads.beta[l];
      const double inv_batch = 1.0 / static_cast<double>(batch);
      for (size_t o = 0; o < layer.out; ++o) {
        double sum_dz = 0.0, sum_dzz = 0.0;
        for (size_t n = 0; n < batch; ++n) {
          const double dy = delta[n * layer.out + o];
          const double zn = z[n * layer.out + o];
          gg[o] += dy * zn;
          gb[o] += dy;
          const double dz = dy * layer.gamma[o];
          sum_dz += dz;
          sum_dzz += dz * zn;
        }
        for (size_t n = 0; n < batch; ++n) {
          const double dz = delta[n * layer.out + o] * layer.gamma[o];
          const double zn = z[n * layer.out + o];
          delta[n * layer.out + o] =
              inv_std[o] * (dz - inv_batch * sum_dz - zn * inv_batch * sum_dzz);
        }
      }
    }
    std::vector<double>& gw = grads.w[l];
    std::vector<double>& gb = grads.b[l];
    std::vector<double> prev(batch * layer.in, 0.0);
    for (size_t n = 0; n < batch; ++n) {
      const double* xs = x.data() + n * layer.in;
      const double* ds = delta.data() + n * layer.out;
      double* ps = prev.data() + n * layer.in;
      for (size_t o = 0; o < layer.out; ++o) {
        const double d = ds[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwrow = gw.data() + o * layer.in;
        const double* wrow = layer.w.data() + o * layer.in;
        for (size_t i = 0; i < layer.in; ++i) {
          gwrow[i] += d * xs[i];
          ps[i] += d * wrow[i];
        }
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

}  // namespace melc
