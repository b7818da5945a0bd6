#pragma once

#include <random>
#include <string>
#include <vector>

#include "ibmrec/autodiff.hpp"
#include "ibmrec/config.hpp"
#include "ibmrec/dataset.hpp"
#include "ibmrec/graph.hpp"

namespace ibmrec {

// Affine map d_k -> d1 for one modality.
struct ModalityProjection {
  Matrix weight;  // d_k x d1
  Matrix bias;    // 1 x d1
};

// Edge-mask MLP: (4 d1) -> d1 -> 1.
struct MaskMlp {
  Matrix hidden_weight;  // 4 d1 x d1
  Matrix hidden_bias;    // 1 x d1
  Matrix out_weight;     // d1 x 1
  Matrix out_bias;       // 1 x 1
};

enum class ParamGroup {
  kTheta1,        // updated by stage 1 only
  kTheta1Theta2,  // updated by both stages
};

struct NamedTensor {
  std::string name;
  Matrix* value;
  ParamGroup group;
};

struct ModelParams {
  Matrix user_latent;  // P, M x d1
  Matrix item_latent;  // Q, N x d1
  Matrix user_media;   // C, M x d1
  std::vector<ModalityProjection> projections;
  Matrix fusion_logits;  // K x 1
  MaskMlp mask;

  // Fixed order; used by the optimizer and checkpoints.
  std::vector<NamedTensor> tensors();
  std::vector<const Matrix*> tensors() const;
  std::vector<std::string> names() const;
  bool operator==(const ModelParams& other) const;
};

ModelParams init_params(const RunConfig& config, Index num_users, Index num_items,
                        const ModalityFeatures& modalities, std::mt19937_64& rng);

enum class Trainable { kNone, kTheta1, kTheta2 };

// Parameters as leaves on one tape. Leaves outside the trainable set are constants.
struct BoundParams {
  Var user_latent;
  Var item_latent;
  Var user_media;
  std::vector<Var> proj_weight;
  std::vector<Var> proj_bias;
  Var fusion_logits;
  Var mask_hidden_weight;
  Var mask_hidden_bias;
  Var mask_out_weight;
  Var mask_out_bias;

  // Same order as ModelParams::tensors().
  std::vector<Var> vars() const;
};

BoundParams bind(Tape& tape, const ModelParams& params, Trainable trainable);

// Inverse of BoundParams::vars() for a model with `modalities` projections.
BoundParams bound_from_vars(std::span<const Var> vars, std::size_t modalities);

// Gradients in ModelParams::tensors() order.
std::vector<Matrix> collect_grads(const Tape& tape, const BoundParams& bound);

// Z^k = M^k W_k + b_k for every modality.
std::vector<Var> project_modalities(const ModalityFeatures& modalities, const BoundParams& params);

// Mean of the per-modality projections (the item multimedia embedding Z0).
Var mean_projection(const std::vector<Var>& z);

// [Z^1 ... Z^K]
Var concat_projections(const std::vector<Var>& z);

struct UserItemRepr {
  Var users;
  Var items;
};

// Parameter-free propagation on the normalized bipartite matrix, averaging layers 0..L.
UserItemRepr propagate_user_item(const SparseMatrix& norm_adj, Var x0, Var y0, int layers);

// L rounds of item-item propagation over weighted edges; returns the last layer.
Var propagate_item_item(const SparseMatrix& pattern, Var edge_values, Var y0, int layers);

// Y + row-normalized(Y').
Var fuse_item_representations(Var y, Var y_prime);

Var predict_scores(Var users_repr, Var items_repr, std::span<const Index> users, std::span<const Index> items);

// Immutable inputs shared by every forward pass.
struct ModelInputs {
  const ModalityFeatures* modalities = nullptr;
  const SparseMatrix* norm_adj = nullptr;           // (M+N) square
  const SemanticItemGraph* item_graph = nullptr;    // may be null for vbpr/vlightgcn
  Index num_users = 0;
  Index num_items = 0;
};

enum class MaskMode { kTrain, kEval };

struct EdgeMask {
  Var logits;  // E x 1, pre-sigmoid
  Var probs;   // w, E x 1
};

struct ForwardOutputs {
  std::vector<Var> modality_z;  // Z^k
  Var z_mean;                   // Z0
  Var users;                    // X
  Var items;                    // fused Y
  Var item_graph_items;         // Y' under the (masked) item graph, if used
  Matrix item_graph_base;       // Y' under the unmasked graph (constant), if GIB active
  EdgeMask mask;                // if GIB active
  Var edge_values;              // masked normalized edge values, if item graph used
};

// `mask_noise` holds one logistic sample per edge for MaskMode::kTrain; it is
// ignored in eval mode.
ForwardOutputs forward(Tape& tape, const BoundParams& params, const ModelInputs& inputs,
                       const RunConfig& config, MaskMode mode, const Matrix* mask_noise);

}  // namespace ibmrec
