#include "ibmrec/model.hpp"

#include <numeric>

#include "ibmrec/objectives.hpp"

namespace ibmrec {

namespace {

Matrix gaussian(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal(rng);
  return m;
}

std::vector<Index> iota_indices(Index begin, Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

}  // namespace

std::vector<NamedTensor> ModelParams::tensors() {
  std::vector<NamedTensor> out;
  out.push_back({"P", &user_latent, ParamGroup::kTheta1});
  out.push_back({"Q", &item_latent, ParamGroup::kTheta1});
  out.push_back({"C", &user_media, ParamGroup::kTheta1Theta2});
  for (std::size_t k = 0; k < projections.size(); ++k) {
    out.push_back({"proj" + std::to_string(k) + ".weight", &projections[k].weight, ParamGroup::kTheta1Theta2});
    out.push_back({"proj" + std::to_string(k) + ".bias", &projections[k].bias, ParamGroup::kTheta1Theta2});
  }
  out.push_back({"fusion_logits", &fusion_logits, ParamGroup::kTheta1});
  out.push_back({"mask.hidden_weight", &mask.hidden_weight, ParamGroup::kTheta1});
  out.push_back({"mask.hidden_bias", &mask.hidden_bias, ParamGroup::kTheta1});
  out.push_back({"mask.out_weight", &mask.out_weight, ParamGroup::kTheta1});
  out.push_back({"mask.out_bias", &mask.out_bias, ParamGroup::kTheta1});
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  std::vector<const Matrix*> out;
  for (const NamedTensor& t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t.value);
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const NamedTensor& t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t.name);
  return out;
}

bool ModelParams::operator==(const ModelParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols() || *a[i] != *b[i]) return false;
  }
  return true;
}

ModelParams init_params(const RunConfig& config, Index num_users, Index num_items,
                        const ModalityFeatures& modalities, std::mt19937_64& rng) {
  const Index d = config.embedding_dim;
  const double sd = config.init_std;
  ModelParams p;
  p.user_latent = gaussian(num_users, d, sd, rng);
  p.item_latent = gaussian(num_items, d, sd, rng);
  p.user_media = gaussian(num_users, d, sd, rng);
  for (const Modality& m : modalities) {
    p.projections.push_back({gaussian(m.features.cols(), d, sd, rng), Matrix::Zero(1, d)});
  }
  p.fusion_logits = Matrix::Zero(static_cast<Index>(modalities.size()), 1);
  p.mask.hidden_weight = gaussian(4 * d, d, sd, rng);
  p.mask.hidden_bias = Matrix::Zero(1, d);
  p.mask.out_weight = gaussian(d, 1, sd, rng);
  p.mask.out_bias = Matrix::Zero(1, 1);
  return p;
}

std::vector<Var> BoundParams::vars() const {
  std::vector<Var> out = {user_latent, item_latent, user_media};
  for (std::size_t k = 0; k < proj_weight.size(); ++k) {
    out.push_back(proj_weight[k]);
    out.push_back(proj_bias[k]);
  }
  out.insert(out.end(), {fusion_logits, mask_hidden_weight, mask_hidden_bias, mask_out_weight, mask_out_bias});
  return out;
}

BoundParams bind(Tape& tape, const ModelParams& params, Trainable trainable) {
  auto leaf = [&](const Matrix& m, const std::string& name, ParamGroup group) {
    const bool grad = trainable == Trainable::kTheta1 ||
                      (trainable == Trainable::kTheta2 && group == ParamGroup::kTheta1Theta2);
    return grad ? tape.parameter(m, name) : tape.constant(m, name);
  };
  BoundParams b;
  b.user_latent = leaf(params.user_latent, "P", ParamGroup::kTheta1);
  b.item_latent = leaf(params.item_latent, "Q", ParamGroup::kTheta1);
  b.user_media = leaf(params.user_media, "C", ParamGroup::kTheta1Theta2);
  for (std::size_t k = 0; k < params.projections.size(); ++k) {
    b.proj_weight.push_back(leaf(params.projections[k].weight, "proj.weight", ParamGroup::kTheta1Theta2));
    b.proj_bias.push_back(leaf(params.projections[k].bias, "proj.bias", ParamGroup::kTheta1Theta2));
  }
  b.fusion_logits = leaf(params.fusion_logits, "fusion_logits", ParamGroup::kTheta1);
  b.mask_hidden_weight = leaf(params.mask.hidden_weight, "mask.hidden_weight", ParamGroup::kTheta1);
  b.mask_hidden_bias = leaf(params.mask.hidden_bias, "mask.hidden_bias", ParamGroup::kTheta1);
  b.mask_out_weight = leaf(params.mask.out_weight, "mask.out_weight", ParamGroup::kTheta1);
  b.mask_out_bias = leaf(params.mask.out_bias, "mask.out_bias", ParamGroup::kTheta1);
  return b;
}

BoundParams bound_from_vars(std::span<const Var> vars, std::size_t modalities) {
  if (vars.size() != 8 + 2 * modalities) {
    throw ContractError("bound_from_vars: " + std::to_string(vars.size()) + " tensors for " +
                        std::to_string(modalities) + " modalities");
  }
  BoundParams b;
  std::size_t k = 0;
  b.user_latent = vars[k++];
  b.item_latent = vars[k++];
  b.user_media = vars[k++];
  for (std::size_t m = 0; m < modalities; ++m) {
    b.proj_weight.push_back(vars[k++]);
    b.proj_bias.push_back(vars[k++]);
  }
  b.fusion_logits = vars[k++];
  b.mask_hidden_weight = vars[k++];
  b.mask_hidden_bias = vars[k++];
  b.mask_out_weight = vars[k++];
  b.mask_out_bias = vars[k++];
  return b;
}

std::vector<Matrix> collect_grads(const Tape& tape, const BoundParams& bound) {
  std::vector<Matrix> grads;
  for (Var v : bound.vars()) grads.push_back(tape.grad(v));
  return grads;
}

std::vector<Var> project_modalities(const ModalityFeatures& modalities, const BoundParams& params) {
  if (modalities.size() != params.proj_weight.size()) {
    throw ConfigError("model has " + std::to_string(params.proj_weight.size()) + " projections for " +
                      std::to_string(modalities.size()) + " modalities");
  }
  std::vector<Var> z;
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    if (modalities[k].features.cols() != params.proj_weight[k].rows()) {
      throw ConfigError("modality '" + modalities[k].name + "' has " + std::to_string(modalities[k].features.cols()) +
                        " dims but its projection expects " + std::to_string(params.proj_weight[k].rows()));
    }
    z.push_back(add_row(matmul(modalities[k].features, params.proj_weight[k]), params.proj_bias[k]));
  }
  return z;
}

Var mean_projection(const std::vector<Var>& z) {
  if (z.empty()) throw ContractError("mean_projection: no modalities");
  Var total = z.front();
  for (std::size_t k = 1; k < z.size(); ++k) total = add(total, z[k]);
  return z.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(z.size()));
}

Var concat_projections(const std::vector<Var>& z) {
  if (z.empty()) throw ContractError("concat_projections: no modalities");
  Var out = z.front();
  for (std::size_t k = 1; k < z.size(); ++k) out = concat_cols(out, z[k]);
  return out;
}

UserItemRepr propagate_user_item(const SparseMatrix& norm_adj, Var x0, Var y0, int layers) {
  if (norm_adj.rows() != x0.rows() + y0.rows()) {
    throw DimensionError("propagate_user_item: adjacency " + shape_string(norm_adj) + " for " +
                         std::to_string(x0.rows()) + " users + " + std::to_string(y0.rows()) + " items");
  }
  const Index m = x0.rows();
  const Index n = y0.rows();
  if (layers == 0) return {x0, y0};
  Var layer = concat_rows(x0, y0);
  Var total = layer;
  for (int l = 0; l < layers; ++l) {
    layer = sparse_matmul(norm_adj, layer);
    total = add(total, layer);
  }
  Var avg = scale(total, 1.0 / static_cast<double>(layers + 1));
  const auto users = iota_indices(0, m);
  const auto items = iota_indices(m, n);
  return {row_gather(avg, users), row_gather(avg, items)};
}

Var propagate_item_item(const SparseMatrix& pattern, Var edge_values, Var y0, int layers) {
  Var out = y0;
  for (int l = 0; l < layers; ++l) out = weighted_sparse_matmul(pattern, edge_values, out);
  return out;
}

Var fuse_item_representations(Var y, Var y_prime) {
  return add(y, l2_row_normalize(y_prime, 1e-12));
}

Var predict_scores(Var users_repr, Var items_repr, std::span<const Index> users, std::span<const Index> items) {
  if (users.size() != items.size()) throw ContractError("predict_scores: pair lists differ in length");
  return row_dot(row_gather(users_repr, users), row_gather(items_repr, items));
}

ForwardOutputs forward(Tape& tape, const BoundParams& params, const ModelInputs& inputs, const RunConfig& config,
                       MaskMode mode, const Matrix* mask_noise) {
  ForwardOutputs out;
  out.modality_z = project_modalities(*inputs.modalities, params);
  out.z_mean = mean_projection(out.modality_z);

  Var x0, y0;
  if (config.backbone == Backbone::kLattice) {
    x0 = params.user_latent;
    y0 = params.item_latent;
  } else {
    x0 = concat_cols(params.user_latent, params.user_media);
    y0 = concat_cols(params.item_latent, out.z_mean);
  }

  if (config.uses_user_item_graph()) {
    if (inputs.norm_adj == nullptr) throw ContractError("forward: backbone needs the user-item graph");
    UserItemRepr r = propagate_user_item(*inputs.norm_adj, x0, y0, config.gcn_layers);
    out.users = r.users;
    out.items = r.items;
  } else {
    out.users = x0;
    out.items = y0;
  }

  if (!config.uses_item_graph()) return out;
  if (inputs.item_graph == nullptr) throw ContractError("forward: backbone needs the item-item graph");
  const SemanticItemGraph& graph = *inputs.item_graph;

  Var base_values = fuse_and_normalize(graph, params.fusion_logits);
  out.edge_values = base_values;
  if (config.gib_active()) {
    out.mask = edge_mask_probs(graph.pattern, out.z_mean, params.item_latent, params);
    out.edge_values = sample_masked_graph(base_values, out.mask, config.mask_temperature, mode, mask_noise);

    // Reference branch on the unmasked graph, evaluated as constants.
    Var frozen_values = tape.constant(base_values.value());
    Var frozen_y0 = tape.constant(y0.value());
    out.item_graph_base = propagate_item_item(graph.pattern, frozen_values, frozen_y0, config.gcn_layers).value();
  }
  out.item_graph_items = propagate_item_item(graph.pattern, out.edge_values, y0, config.gcn_layers);
  out.items = fuse_item_representations(out.items, out.item_graph_items);
  return out;
}

}  // namespace ibmrec
