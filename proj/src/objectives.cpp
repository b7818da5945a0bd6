#include "ibmrec/objectives.hpp"

#include <cmath>
#include <numeric>

namespace ibmrec {

Var fib_loss(std::span<const Var> z_batches, std::span<const Var> m_batches, const HsicConfig& cfg) {
  if (z_batches.empty() || z_batches.size() != m_batches.size()) {
    throw ContractError("fib_loss: need one feature batch per projected batch");
  }
  Var total;
  for (std::size_t k = 0; k < z_batches.size(); ++k) {
    if (z_batches[k].rows() != m_batches[k].rows()) {
      throw ContractError("fib_loss: modality " + std::to_string(k) + " batches are misaligned");
    }
    Var term = hsic_estimate(z_batches[k], m_batches[k], cfg);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

EdgeMask edge_mask_probs(const SparseMatrix& pattern, Var z, Var q, const BoundParams& params) {
  if (z.rows() != pattern.rows() || q.rows() != pattern.rows()) {
    throw DimensionError("edge_mask_probs: item representations do not match the graph");
  }
  // [z_i | q_i | z_j | q_j] W1 = [z_i | q_i] W1_top + [z_j | q_j] W1_bottom
  Var item = concat_cols(z, q);
  const Index width = item.cols();
  if (params.mask_hidden_weight.rows() != 2 * width) {
    throw DimensionError("edge_mask_probs: mask MLP expects inputs of width " +
                         std::to_string(params.mask_hidden_weight.rows()));
  }
  std::vector<Index> top(static_cast<std::size_t>(width)), bottom(static_cast<std::size_t>(width));
  std::iota(top.begin(), top.end(), Index{0});
  std::iota(bottom.begin(), bottom.end(), width);
  Var w_src = row_gather(params.mask_hidden_weight, top);
  Var w_dst = row_gather(params.mask_hidden_weight, bottom);
  Var from_src = matmul(item, w_src);
  Var from_dst = matmul(item, w_dst);

  const std::vector<Index> src = edge_sources(pattern);
  const std::vector<Index> dst = edge_targets(pattern);
  Var hidden = relu(add_row(add(row_gather(from_src, src), row_gather(from_dst, dst)), params.mask_hidden_bias));
  Var logits = add_row(matmul(hidden, params.mask_out_weight), params.mask_out_bias);
  return {logits, sigmoid(logits)};
}

Matrix sample_logistic_noise(Index edges, std::mt19937_64& rng) {
  // Open interval keeps both logs finite.
  std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
  Matrix noise(edges, 1);
  for (Index e = 0; e < edges; ++e) {
    double u = unif(rng);
    if (u >= 1.0) u = std::nextafter(1.0, 0.0);
    noise(e, 0) = std::log(u) - std::log1p(-u);
  }
  return noise;
}

Var mask_multipliers(const EdgeMask& mask, double temperature, MaskMode mode, const Matrix* noise) {
  if (!(temperature > 0.0)) throw ContractError("mask temperature must be positive");
  if (mode == MaskMode::kEval) return mask.probs;
  if (noise == nullptr || noise->rows() != mask.logits.rows() || noise->cols() != 1) {
    throw ContractError("train-mode masking needs one noise sample per edge");
  }
  // log w - log(1 - w) is the MLP's pre-sigmoid output.
  Var noisy = add(mask.logits, mask.logits.tape()->constant(*noise, "mask_noise"));
  return sigmoid(scale(noisy, 1.0 / temperature));
}

Var sample_masked_graph(Var base_values, const EdgeMask& mask, double temperature, MaskMode mode,
                        const Matrix* noise) {
  return mul(base_values, mask_multipliers(mask, temperature, mode, noise));
}

Var gib_loss(Var y_prime_batch, const Matrix& y_base_batch, const HsicConfig& cfg) {
  Var base = y_prime_batch.tape()->constant(y_base_batch, "gib_base");
  return hsic_estimate(y_prime_batch, base, cfg);
}

Var bpr_term(Var scores_pos, Var scores_neg) {
  if (scores_pos.rows() == 0) throw ContractError("bpr: empty batch");
  return neg(mean(log_sigmoid(sub(scores_pos, scores_neg))));
}

Var l2_penalty(std::span<const Var> params, double lambda) {
  if (params.empty()) throw ContractError("l2_penalty: no parameters");
  Var total = sum_squares(params.front());
  for (std::size_t k = 1; k < params.size(); ++k) total = add(total, sum_squares(params[k]));
  return scale(total, lambda);
}

Var bpr_loss(Var scores_pos, Var scores_neg, std::span<const Var> params, double lambda) {
  return add(bpr_term(scores_pos, scores_neg), l2_penalty(params, lambda));
}

Var stage2_infonce(Var users, Var items, double tau) {
  if (users.rows() < 2) throw ContractError("stage2_infonce: batch needs at least 2 pairs");
  if (users.rows() != items.rows() || users.cols() != items.cols()) {
    throw DimensionError("stage2_infonce: " + shape_string(users.value()) + " vs " + shape_string(items.value()));
  }
  if (!(tau > 0.0)) throw ContractError("stage2_infonce: tau must be positive");
  Var cu = l2_row_normalize(users, 1e-12);
  Var ci = l2_row_normalize(items, 1e-12);
  Var logits = scale(matmul(cu, transpose(ci)), 1.0 / tau);
  return diag_cross_entropy(logits);
}

Var stage1_total(const Stage1Terms& terms, double alpha, double beta) {
  Var total = add(terms.rec, terms.reg);
  if (terms.fib.valid() && alpha != 0.0) total = add(total, scale(terms.fib, alpha));
  if (terms.gib.valid() && beta != 0.0) total = add(total, scale(terms.gib, beta));
  return total;
}

}  // namespace ibmrec
