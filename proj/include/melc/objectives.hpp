#pragma once

#include <cstdint>
#include <vector>

#include "melc/mask.hpp"

namespace melc {

// Row-major block of B projection vectors of dimension dim.
struct EmbeddingBlock {
  size_t rows = 0;
  size_t dim = 0;
  std::vector<double> data;

  EmbeddingBlock() = default;
  EmbeddingBlock(size_t r, size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

  double* row(size_t i) { return data.data() + i * dim; }
  const double* row(size_t i) const { return data.data() + i * dim; }
  double& at(size_t i, size_t j) { return data[i * dim + j]; }
  double at(size_t i, size_t j) const { return data[i * dim + j]; }
};

// Unit-normalizes every row in place. Throws on a zero-norm row.
void normalize_rows(EmbeddingBlock& block, double epsilon = 0.0);

struct LossOutput {
  double value = 0.0;
  EmbeddingBlock gradient;           // w.r.t. the raw input embeddings
  std::vector<double> per_anchor;    // per-row loss terms
};

// Normalized temperature-scaled cross entropy over cosine similarities.
// For anchor i the positives are the mask's Positive entries; the denominator
// runs over Positive and Negative entries; Excluded and Self entries appear
// nowhere. Multiple positives are averaged (mean of per-positive log terms).
LossOutput nt_xent(const EmbeddingBlock& embeddings, const RelationMask& mask,
                   double temperature);

// NT-Xent with the debiased negative-mass estimator. The plain negative sum
// is replaced by
//   g = max( sum_neg exp(s/t) / (1 - tau_plus)
//              - tau_plus * N_neg / ((1 - tau_plus) * Q) * sum_{Q positives} exp(s/t),
//            N_neg * exp(-1/t) )
// and each positive term becomes -log( exp(s_pos/t) / (exp(s_pos/t) + g) ).
// The Q positives are the anchor's positives reused cyclically when fewer
// than Q exist.
LossOutput debiased_nt_xent(const EmbeddingBlock& embeddings, const RelationMask& mask,
                            double temperature, double tau_plus, int q_positives);

// Mean squared distance between unit-normalized online predictions and
// target projections, paired row by row: mean_i (2 - 2 cos(p_i, z_i)).
// Gradients flow to the online side only.
LossOutput byol_loss(const EmbeddingBlock& online_predictions,
                     const EmbeddingBlock& target_projections);

// teacher <- tau * teacher + (1 - tau) * student, elementwise.
void ema_update(std::vector<double>& teacher, const std::vector<double>& student,
                double tau);

}  // namespace melc
