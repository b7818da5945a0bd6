#pragma once

#include <random>
#include <span>
#include <vector>

#include "ibmrec/autodiff.hpp"
#include "ibmrec/hsic.hpp"
#include "ibmrec/model.hpp"

namespace ibmrec {

// Sum over modalities of HSIC(Z^k, M^k) on one item batch.
Var fib_loss(std::span<const Var> z_batches, std::span<const Var> m_batches, const HsicConfig& cfg);

// w_ij = sigmoid(MLP([z_i | q_i | z_j | q_j])) for every entry of `pattern`.
EdgeMask edge_mask_probs(const SparseMatrix& pattern, Var z, Var q, const BoundParams& params);

// One logistic sample log u - log(1 - u), u ~ U(0,1), per edge.
Matrix sample_logistic_noise(Index edges, std::mt19937_64& rng);

// Relaxed Bernoulli multipliers: sigmoid((logit w + noise) / temperature) in
// train mode, w in eval mode.
Var mask_multipliers(const EdgeMask& mask, double temperature, MaskMode mode, const Matrix* noise);

// base edge values scaled by the mask multipliers.
Var sample_masked_graph(Var base_values, const EdgeMask& mask, double temperature, MaskMode mode,
                        const Matrix* noise);

// HSIC between masked-graph item representations and the original-graph ones.
// The original branch is a constant: no gradient flows into it.
Var gib_loss(Var y_prime_batch, const Matrix& y_base_batch, const HsicConfig& cfg);

// Mean of -log sigmoid(pos - neg).
Var bpr_term(Var scores_pos, Var scores_neg);

// lambda * sum of squared entries over `params`.
Var l2_penalty(std::span<const Var> params, double lambda);

Var bpr_loss(Var scores_pos, Var scores_neg, std::span<const Var> params, double lambda);

// In-batch contrastive loss over cosine similarities: row a's positive is item a.
Var stage2_infonce(Var users, Var items, double tau);

struct LossBreakdown {
  double rec = 0.0;
  double fib = 0.0;
  double gib = 0.0;
  double reg = 0.0;
  double stage2 = 0.0;
  double total_stage1 = 0.0;
};

struct Stage1Terms {
  Var rec;
  Var reg;
  Var fib;  // may be unbound when FIB is off
  Var gib;  // may be unbound when GIB is off
};

// rec + alpha fib + beta gib + reg; unbound terms count as zero.
Var stage1_total(const Stage1Terms& terms, double alpha, double beta);

}  // namespace ibmrec
