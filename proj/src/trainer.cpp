#include "ibmrec/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ibmrec/hsic.hpp"
#include "ibmrec/ibmf.hpp"

namespace ibmrec {

namespace {

std::vector<Index> batch_items(const TripleBatch& batch) {
  std::vector<Index> items = batch.positives;
  items.insert(items.end(), batch.negatives.begin(), batch.negatives.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

ModelParams initial_params(const Dataset& dataset, const RunConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, "init"));
  return init_params(config, dataset.interactions.num_users, dataset.interactions.num_items, dataset.modalities, rng);
}

std::vector<bool> stage2_mask(ModelParams& params) {
  std::vector<bool> active;
  for (const NamedTensor& t : params.tensors()) active.push_back(t.group == ParamGroup::kTheta1Theta2);
  return active;
}

std::vector<Matrix*> tensor_ptrs(ModelParams& params) {
  std::vector<Matrix*> out;
  for (const NamedTensor& t : params.tensors()) out.push_back(t.value);
  return out;
}

}  // namespace

Stage1Terms stage1_objective(Tape& tape, const BoundParams& params, const ModelInputs& inputs,
                             const RunConfig& config, const TripleBatch& batch, const Matrix* mask_noise,
                             const Matrix* gib_reference) {
  if (batch.size() == 0) throw ContractError("stage 1: empty batch");
  const ForwardOutputs out = forward(tape, params, inputs, config, MaskMode::kTrain, mask_noise);

  Stage1Terms terms;
  Var pos = predict_scores(out.users, out.items, batch.users, batch.positives);
  Var negs = predict_scores(out.users, out.items, batch.users, batch.negatives);
  terms.rec = bpr_term(pos, negs);
  const std::vector<Var> all = params.vars();
  terms.reg = l2_penalty(all, config.lambda_reg);

  const std::vector<Index> items = batch_items(batch);
  if (items.size() < 2) return terms;
  if (config.fib_enabled && config.alpha != 0.0) {
    std::vector<Var> z_b, m_b;
    for (std::size_t k = 0; k < out.modality_z.size(); ++k) {
      z_b.push_back(row_gather(out.modality_z[k], items));
      m_b.push_back(tape.constant(gather_rows((*inputs.modalities)[k].features, items), "features"));
    }
    terms.fib = fib_loss(z_b, m_b, HsicConfig{config.sigma_sq_fib, config.hsic_normalize});
  }
  if (config.gib_active() && config.beta != 0.0) {
    const Matrix& base = gib_reference ? *gib_reference : out.item_graph_base;
    terms.gib = gib_loss(row_gather(out.item_graph_items, items), gather_rows(base, items),
                         HsicConfig{config.sigma_sq_gib, config.hsic_normalize});
  }
  return terms;
}

Var stage2_objective(Tape& tape, const BoundParams& params, const ModalityFeatures& modalities,
                     const TripleBatch& batch, double tau) {
  std::vector<Var> z;
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    Var rows = tape.constant(gather_rows(modalities[k].features, batch.positives), "features");
    z.push_back(add_row(matmul(rows, params.proj_weight[k]), params.proj_bias[k]));
  }
  return stage2_infonce(row_gather(params.user_media, batch.users), mean_projection(z), tau);
}

Trainer::Trainer(const Dataset& dataset, RunConfig config)
    : Trainer(dataset, config, initial_params(dataset, config), false) {}

Trainer::Trainer(const Dataset& dataset, RunConfig config, ModelParams params, bool restored)
    : dataset_(&dataset),
      config_(std::move(config)),
      params_(std::move(params)),
      sampler_(dataset.interactions),
      sample_rng_(derive_seed(config_.seed, "sample")),
      mask_rng_(derive_seed(config_.seed, "mask")) {
  config_.validate();
  validate_modalities(dataset.modalities, dataset.interactions.num_items);
  if (params_.user_latent.rows() != dataset.interactions.num_users ||
      params_.item_latent.rows() != dataset.interactions.num_items) {
    throw ConfigError("parameters are for " + std::to_string(params_.user_latent.rows()) + " users / " +
                      std::to_string(params_.item_latent.rows()) + " items, dataset has " +
                      std::to_string(dataset.interactions.num_users) + " / " +
                      std::to_string(dataset.interactions.num_items));
  }
  if (params_.user_latent.cols() != config_.embedding_dim) {
    throw ConfigError("parameters have embedding_dim " + std::to_string(params_.user_latent.cols()) +
                      ", config says " + std::to_string(config_.embedding_dim));
  }
  build_graphs(restored);
}

void Trainer::build_graphs(bool restored) {
  if (config_.uses_user_item_graph()) norm_adj_ = sym_normalize(build_bipartite_adjacency(dataset_->interactions));
  if (!config_.uses_item_graph()) return;
  if (config_.knn_topk >= dataset_->interactions.num_items) {
    throw ConfigError("knn_topk = " + std::to_string(config_.knn_topk) + " needs more than that many items (have " +
                      std::to_string(dataset_->interactions.num_items) + ")");
  }
  // Refreshed graphs are a function of the projections, so a reloaded model rebuilds the same one.
  if (config_.graph_refresh == GraphRefresh::kPerEpoch && restored) {
    refresh_item_graph();
  } else {
    item_graph_ = build_semantic_graph(dataset_->modalities, config_.knn_topk);
  }
  has_item_graph_ = true;
}

void Trainer::refresh_item_graph() {
  if (!config_.uses_item_graph()) return;
  ModalityFeatures projected;
  for (std::size_t k = 0; k < dataset_->modalities.size(); ++k) {
    const ModalityProjection& p = params_.projections[k];
    Matrix z = dataset_->modalities[k].features * p.weight;
    z.rowwise() += p.bias.row(0);
    projected.push_back({dataset_->modalities[k].name, std::move(z)});
  }
  item_graph_ = build_semantic_graph(projected, config_.knn_topk);
  has_item_graph_ = true;
}

ModelInputs Trainer::inputs() const {
  ModelInputs in;
  in.modalities = &dataset_->modalities;
  in.norm_adj = config_.uses_user_item_graph() ? &norm_adj_ : nullptr;
  in.item_graph = has_item_graph_ ? &item_graph_ : nullptr;
  in.num_users = dataset_->interactions.num_users;
  in.num_items = dataset_->interactions.num_items;
  return in;
}

Matrix Trainer::draw_mask_noise() {
  if (!config_.gib_active()) return Matrix();
  return sample_logistic_noise(item_graph_.num_edges(), mask_rng_);
}

TripleBatch Trainer::sample_batch() {
  return sampler_.sample(static_cast<std::size_t>(config_.batch_size), sample_rng_);
}

std::size_t Trainer::batches_per_epoch() const {
  const std::size_t n = dataset_->interactions.train_size();
  const std::size_t b = static_cast<std::size_t>(config_.batch_size);
  return std::max<std::size_t>(1, (n + b - 1) / b);
}

LossBreakdown Trainer::stage1_pass(const TripleBatch& batch, const Matrix* mask_noise,
                                   std::vector<Matrix>* grads) const {
  Tape tape;
  const BoundParams bound = bind(tape, params_, grads ? Trainable::kTheta1 : Trainable::kNone);
  const Stage1Terms terms = stage1_objective(tape, bound, inputs(), config_, batch, mask_noise);
  Var total = stage1_total(terms, config_.alpha, config_.beta);

  LossBreakdown loss;
  loss.rec = terms.rec.scalar();
  loss.reg = terms.reg.scalar();
  loss.fib = terms.fib.valid() ? terms.fib.scalar() : 0.0;
  loss.gib = terms.gib.valid() ? terms.gib.scalar() : 0.0;
  loss.total_stage1 = total.scalar();
  if (grads) {
    tape.backward(total);
    *grads = collect_grads(tape, bound);
  }
  return loss;
}

LossBreakdown Trainer::stage1_loss(const TripleBatch& batch, const Matrix* mask_noise) const {
  return stage1_pass(batch, mask_noise, nullptr);
}

LossBreakdown Trainer::stage1_step(const TripleBatch& batch) {
  const Matrix noise = draw_mask_noise();
  std::vector<Matrix> grads;
  LossBreakdown loss = stage1_pass(batch, config_.gib_active() ? &noise : nullptr, &grads);
  stage1_adam_.step(tensor_ptrs(params_), grads, config_.learning_rate, params_.names());
  return loss;
}

double Trainer::stage2_step(const TripleBatch& batch) {
  if (batch.size() < 2) return 0.0;
  Tape tape;
  const BoundParams bound = bind(tape, params_, Trainable::kTheta2);
  Var loss = stage2_objective(tape, bound, dataset_->modalities, batch, config_.tau);
  tape.backward(loss);
  const std::vector<Matrix> grads = collect_grads(tape, bound);
  stage2_adam_.step(tensor_ptrs(params_), grads, config_.learning_rate, params_.names(), stage2_mask(params_));
  return loss.scalar();
}

LossBreakdown Trainer::train_step(const TripleBatch& batch) {
  LossBreakdown loss = stage1_step(batch);
  if (config_.stage2_enabled && config_.stage2_schedule == Stage2Schedule::kPerBatch) {
    loss.stage2 = stage2_step(batch);
  }
  return loss;
}

std::pair<Matrix, Matrix> Trainer::representations() const {
  Tape tape;
  const BoundParams bound = bind(tape, params_, Trainable::kNone);
  const ForwardOutputs out = forward(tape, bound, inputs(), config_, MaskMode::kEval, nullptr);
  return {out.users.value(), out.items.value()};
}

MetricsResult Trainer::evaluate(Split split, std::span<const int> topn) const {
  const auto [users, items] = representations();
  return evaluate_embeddings(users, items, dataset_->interactions, split, topn);
}

bool EarlyStopper::update(int epoch, double metric) {
  improved_ = metric > best_metric_;
  if (improved_) {
    best_metric_ = metric;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_;
}

TrainResult run_training(const Dataset& dataset, const RunConfig& config, const EpochCallback& on_epoch) {
  Trainer trainer(dataset, config);
  const InteractionSet& set = dataset.interactions;
  const bool has_val = std::any_of(set.val.begin(), set.val.end(), [](const auto& v) { return !v.empty(); });
  if (!has_val) {
    std::cerr << "warning: validation split is empty; training for max_epochs = " << config.max_epochs
              << " without early stopping\n";
  }
  const bool stage2_per_epoch = config.stage2_enabled && config.stage2_schedule == Stage2Schedule::kPerEpoch;
  const std::vector<int> cutoff = {20};

  TrainResult result;
  result.best = trainer.params();
  EarlyStopper stopper(config.early_stop_patience);
  result.report.stop_reason = "max_epochs";
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    std::vector<TripleBatch> batches;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < trainer.batches_per_epoch(); ++b) {
      TripleBatch batch = trainer.sample_batch();
      if (batch.size() == 0) continue;
      const LossBreakdown loss = trainer.train_step(batch);
      record.loss.rec += loss.rec;
      record.loss.fib += loss.fib;
      record.loss.gib += loss.gib;
      record.loss.reg += loss.reg;
      record.loss.stage2 += loss.stage2;
      record.loss.total_stage1 += loss.total_stage1;
      ++steps;
      if (stage2_per_epoch) batches.push_back(std::move(batch));
    }
    for (const TripleBatch& batch : batches) record.loss.stage2 += trainer.stage2_step(batch);
    if (steps > 0) {
      const double inv = 1.0 / static_cast<double>(steps);
      record.loss.rec *= inv;
      record.loss.fib *= inv;
      record.loss.gib *= inv;
      record.loss.reg *= inv;
      record.loss.stage2 *= inv;
      record.loss.total_stage1 *= inv;
    }
    if (config.graph_refresh == GraphRefresh::kPerEpoch) trainer.refresh_item_graph();
    if (has_val) record.val_recall20 = trainer.evaluate(Split::kVal, cutoff).recall(20);
    result.report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (!has_val) {
      result.best = trainer.params();
      result.report.best_epoch = epoch;
      continue;
    }
    const bool stop = stopper.update(epoch, record.val_recall20);
    if (stopper.improved()) result.best = trainer.params();
    result.report.best_epoch = stopper.best_epoch();
    result.report.best_val_recall20 = stopper.best_metric();
    if (stop) {
      result.report.stop_reason = "early_stop";
      break;
    }
  }
  if (!has_val) result.report.stop_reason = "no_validation";
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.tsv").string());
  for (const NamedTensor& t : const_cast<ModelParams&>(params).tensors()) {
    ibmf::write_matrix(dir / (t.name + ".ibmf"), *t.value, ibmf::kFloat64Version);
    manifest << t.name << '\t' << t.value->rows() << '\t' << t.value->cols() << '\t'
             << (t.group == ParamGroup::kTheta1 ? "theta1" : "theta1+theta2") << '\n';
  }
  std::ofstream cfg(dir / "config.txt");
  cfg << config.to_text();
  if (!manifest || !cfg) throw DataError("failed writing checkpoint to " + dir.string());
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw DataError("checkpoint manifest not found: " + (dir / "manifest.tsv").string());
  std::map<std::string, std::pair<Index, Index>> shapes;
  std::size_t modalities = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, role;
    Index rows = -1, cols = -1;
    if (!(fields >> name >> rows >> cols >> role)) {
      throw ParseError((dir / "manifest.tsv").string() + ":" + std::to_string(line_no) + ": malformed entry");
    }
    shapes[name] = {rows, cols};
    if (name.starts_with("proj") && name.ends_with(".weight")) ++modalities;
  }
  ModelParams params;
  params.projections.resize(modalities);
  for (const NamedTensor& t : params.tensors()) {
    auto it = shapes.find(t.name);
    if (it == shapes.end()) throw DataError("checkpoint is missing tensor " + t.name);
    *t.value = ibmf::read_matrix(dir / (t.name + ".ibmf"));
    if (t.value->rows() != it->second.first || t.value->cols() != it->second.second) {
      throw DataError("checkpoint tensor " + t.name + " is " + shape_string(*t.value) + ", manifest says " +
                      std::to_string(it->second.first) + "x" + std::to_string(it->second.second));
    }
  }
  return params;
}

RunConfig load_checkpoint_config(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "config.txt")) throw DataError("checkpoint has no config.txt: " + dir.string());
  return RunConfig::load((dir / "config.txt").string());
}

std::string epoch_json(const EpochRecord& record) {
  nlohmann::json j;
  j["epoch"] = record.epoch;
  j["rec"] = record.loss.rec;
  j["fib"] = record.loss.fib;
  j["gib"] = record.loss.gib;
  j["reg"] = record.loss.reg;
  j["stage2"] = record.loss.stage2;
  j["total_stage1"] = record.loss.total_stage1;
  j["val_recall@20"] = record.val_recall20;
  return j.dump();
}

}  // namespace ibmrec
