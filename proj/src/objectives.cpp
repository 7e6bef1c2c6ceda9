#include "melc/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace melc {

namespace {

struct NormalizedBlock {
  EmbeddingBlock unit;         // rows scaled to unit norm
  std::vector<double> norms;
};

NormalizedBlock normalize_copy(const EmbeddingBlock& block, const char* who) {
  NormalizedBlock out;
  out.unit = block;
  out.norms.resize(block.rows);
  for (size_t i = 0; i < block.rows; ++i) {
    double sq = 0.0;
    const double* r = block.row(i);
    for (size_t j = 0; j < block.dim; ++j) sq += r[j] * r[j];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw std::invalid_argument(std::string(who) + ": zero or non-finite embedding row " +
                                  std::to_string(i));
    out.norms[i] = norm;
    double* u = out.unit.row(i);
    for (size_t j = 0; j < block.dim; ++j) u[j] /= norm;
  }
  return out;
}

double dot(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Accumulates coeff * d s_ik / d z into the gradient rows for i and k, where
// s_ik is the cosine of raw rows z_i, z_k.
void add_cosine_grad(const NormalizedBlock& nb, EmbeddingBlock& grad, size_t i, size_t k,
                     double sim, double coeff) {
  const size_t d = nb.unit.dim;
  const double* ui = nb.unit.row(i);
  const double* uk = nb.unit.row(k);
  double* gi = grad.row(i);
  double* gk = grad.row(k);
  const double inv_ni = 1.0 / nb.norms[i];
  const double inv_nk = 1.0 / nb.norms[k];
  for (size_t j = 0; j < d; ++j) {
    gi[j] += coeff * (uk[j] - sim * ui[j]) * inv_ni;
    gk[j] += coeff * (ui[j] - sim * uk[j]) * inv_nk;
  }
}

}  // namespace

void normalize_rows(EmbeddingBlock& block, double) {
  NormalizedBlock nb = normalize_copy(block, "normalize_rows");
  block = std::move(nb.unit);
}

LossOutput nt_xent(const EmbeddingBlock& embeddings, const RelationMask& mask,
                   double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("nt_xent: temperature must be > 0");
  if (mask.size() != embeddings.rows)
    throw std::invalid_argument("nt_xent: mask size does not match embeddings");
  mask.validate_for_loss();

  const size_t B = embeddings.rows;
  NormalizedBlock nb = normalize_copy(embeddings, "nt_xent");

  std::vector<double> sims(B * B, 0.0);
  for (size_t i = 0; i < B; ++i)
    for (size_t k = i + 1; k < B; ++k) {
      const double s = dot(nb.unit.row(i), nb.unit.row(k), embeddings.dim);
      sims[i * B + k] = s;
      sims[k * B + i] = s;
    }

  LossOutput out;
  out.gradient = EmbeddingBlock(B, embeddings.dim);
  out.per_anchor.assign(B, 0.0);
  const double inv_t = 1.0 / temperature;

  for (size_t i = 0; i < B; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    size_t positives = 0;
    for (size_t k = 0; k < B; ++k) {
      const MaskEntry e = mask.at(i, k);
      if (k == i || (e != MaskEntry::Positive && e != MaskEntry::Negative)) continue;
      max_logit = std::max(max_logit, sims[i * B + k] * inv_t);
      if (e == MaskEntry::Positive) ++positives;
    }
    double denom = 0.0;
    double pos_logit_sum = 0.0;
    for (size_t k = 0; k < B; ++k) {
      const MaskEntry e = mask.at(i, k);
      if (k == i || (e != MaskEntry::Positive && e != MaskEntry::Negative)) continue;
      denom += std::exp(sims[i * B + k] * inv_t - max_logit);
      if (e == MaskEntry::Positive) pos_logit_sum += sims[i * B + k] * inv_t;
    }
    const double log_denom = max_logit + std::log(denom);
    const double loss_i = log_denom - pos_logit_sum / static_cast<double>(positives);
    out.per_anchor[i] = loss_i;
    out.value += loss_i;

    const double inv_B = 1.0 / static_cast<double>(B);
    for (size_t k = 0; k < B; ++k) {
      const MaskEntry e = mask.at(i, k);
      if (k == i || (e != MaskEntry::Positive && e != MaskEntry::Negative)) continue;
      const double sim = sims[i * B + k];
      const double softmax = std::exp(sim * inv_t - log_denom);
      double coeff = softmax * inv_t;
      if (e == MaskEntry::Positive) coeff -= inv_t / static_cast<double>(positives);
      add_cosine_grad(nb, out.gradient, i, k, sim, coeff * inv_B);
    }
  }
  out.value /= static_cast<double>(B);
  return out;
}

LossOutput debiased_nt_xent(const EmbeddingBlock& embeddings, const RelationMask& mask,
                            double temperature, double tau_plus, int q_positives) {
  if (temperature <= 0.0)
    throw std::invalid_argument("debiased_nt_xent: temperature must be > 0");
  if (!(tau_plus > 0.0) || !(tau_plus < 1.0))
    throw std::invalid_argument("debiased_nt_xent: class prior must be in (0,1)");
  if (q_positives < 1) throw std::invalid_argument("debiased_nt_xent: Q must be >= 1");
  if (mask.size() != embeddings.rows)
    throw std::invalid_argument("debiased_nt_xent: mask size does not match embeddings");
  mask.validate_for_loss();

  const size_t B = embeddings.rows;
  const size_t d = embeddings.dim;
  NormalizedBlock nb = normalize_copy(embeddings, "debiased_nt_xent");

  std::vector<double> sims(B * B, 0.0);
  for (size_t i = 0; i < B; ++i)
    for (size_t k = i + 1; k < B; ++k) {
      const double s = dot(nb.unit.row(i), nb.unit.row(k), d);
      sims[i * B + k] = s;
      sims[k * B + i] = s;
    }

  LossOutput out;
  out.gradient = EmbeddingBlock(B, d);
  out.per_anchor.assign(B, 0.0);
  const double inv_t = 1.0 / temperature;
  const double inv_B = 1.0 / static_cast<double>(B);

  for (size_t i = 0; i < B; ++i) {
    std::vector<size_t> pos, neg;
    for (size_t k = 0; k < B; ++k) {
      if (k == i) continue;
      if (mask.at(i, k) == MaskEntry::Positive) pos.push_back(k);
      else if (mask.at(i, k) == MaskEntry::Negative) neg.push_back(k);
    }
    const size_t n_neg = neg.size();
    const size_t Q = static_cast<size_t>(q_positives);

    // Common scale factor keeps the exponentials in range; it cancels in
    // every log ratio below.
    double kappa = -inv_t;
    for (size_t k : pos) kappa = std::max(kappa, sims[i * B + k] * inv_t);
    for (size_t k : neg) kappa = std::max(kappa, sims[i * B + k] * inv_t);

    auto scaled_exp = [&](size_t k) { return std::exp(sims[i * B + k] * inv_t - kappa); };

    double neg_sum = 0.0;
    for (size_t k : neg) neg_sum += scaled_exp(k);

    // Q positives, reused cyclically when the anchor has fewer than Q.
    std::vector<size_t> q_mult(pos.size(), 0);
    for (size_t q = 0; q < Q; ++q) ++q_mult[q % pos.size()];
    double q_sum = 0.0;
    for (size_t p = 0; p < pos.size(); ++p)
      if (q_mult[p]) q_sum += static_cast<double>(q_mult[p]) * scaled_exp(pos[p]);

    const double c_q = tau_plus * static_cast<double>(n_neg) /
                       ((1.0 - tau_plus) * static_cast<double>(Q));
    const double estimate = neg_sum / (1.0 - tau_plus) - c_q * q_sum;
    const double floor_mass = static_cast<double>(n_neg) * std::exp(-inv_t - kappa);
    const bool clamped = estimate < floor_mass;
    const double g = clamped ? floor_mass : estimate;

    double loss_i = 0.0;
    double f_sum = 0.0;  // sum over positives of 1 / (a_j + g)
    const double inv_pos = 1.0 / static_cast<double>(pos.size());
    for (size_t j : pos) {
      const double a = scaled_exp(j);
      loss_i += -std::log(a / (a + g));
      f_sum += 1.0 / (a + g);
    }
    loss_i *= inv_pos;
    out.per_anchor[i] = loss_i;
    out.value += loss_i;

    // d loss_i / d s_ij, direct part through a_j.
    for (size_t j : pos) {
      const double a = scaled_exp(j);
      const double coeff = inv_pos * inv_t * (a / (a + g) - 1.0);
      add_cosine_grad(nb, out.gradient, i, j, sims[i * B + j], coeff * inv_B);
    }
    if (!clamped) {
      // Through g: negatives raise the denominator, the Q positives lower it.
      for (size_t k : neg) {
        const double coeff =
            inv_pos * f_sum * scaled_exp(k) * inv_t / (1.0 - tau_plus);
        add_cosine_grad(nb, out.gradient, i, k, sims[i * B + k], coeff * inv_B);
      }
      for (size_t p = 0; p < pos.size(); ++p) {
        if (!q_mult[p]) continue;
        const double coeff = -inv_pos * f_sum * c_q *
                             static_cast<double>(q_mult[p]) * scaled_exp(pos[p]) * inv_t;
        add_cosine_grad(nb, out.gradient, i, pos[p], sims[i * B + pos[p]], coeff * inv_B);
      }
    }
  }
  out.value *= inv_B;
  return out;
}

LossOutput byol_loss(const EmbeddingBlock& online_predictions,
                     const EmbeddingBlock& target_projections) {
  if (online_predictions.rows != target_projections.rows ||
      online_predictions.dim != target_projections.dim)
    throw std::invalid_argument("byol_loss: shape mismatch");
  if (online_predictions.rows == 0) throw std::invalid_argument("byol_loss: empty block");

  const size_t B = online_predictions.rows;
  const size_t d = online_predictions.dim;
  NormalizedBlock np = normalize_copy(online_predictions, "byol_loss (online)");
  NormalizedBlock nz = normalize_copy(target_projections, "byol_loss (target)");

  LossOutput out;
  out.gradient = EmbeddingBlock(B, d);
  out.per_anchor.assign(B, 0.0);
  const double inv_B = 1.0 / static_cast<double>(B);
  for (size_t i = 0; i < B; ++i) {
    const double* u = np.unit.row(i);
    const double* z = nz.unit.row(i);
    const double cosine = dot(u, z, d);
    out.per_anchor[i] = 2.0 - 2.0 * cosine;
    out.value += out.per_anchor[i];
    double* gi = out.gradient.row(i);
    const double scale = -2.0 * inv_B / np.norms[i];
    for (size_t j = 0; j < d; ++j) gi[j] += scale * (z[j] - cosine * u[j]);
  }
  out.value *= inv_B;
  return out;
}

void ema_update(std::vector<double>& teacher, const std::vector<double>& student,
                double tau) {
  if (teacher.size() != student.size())
    throw std::invalid_argument("ema_update: shape mismatch");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("ema_update: tau must be in [0,1]");
  for (size_t i = 0; i < teacher.size(); ++i)
    teacher[i] = tau * teacher[i] + (1.0 - tau) * student[i];
}

}  // namespace melc
