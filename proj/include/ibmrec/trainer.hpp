#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ibmrec/config.hpp"
#include "ibmrec/dataset.hpp"
#include "ibmrec/graph.hpp"
#include "ibmrec/metrics.hpp"
#include "ibmrec/model.hpp"
#include "ibmrec/objectives.hpp"
#include "ibmrec/optimizer.hpp"

namespace ibmrec {

// rec + reg + alpha FIB + beta GIB on one batch. FIB runs over the distinct
// items of the batch (positives and negatives); GIB compares the item-item
// branch under the sampled mask with the same branch on the unmasked graph.
// `mask_noise` is required when GIB is active.
// A non-null `gib_reference` replaces Y' under the unmasked graph; finite-difference
// checks pass one so the stop-gradient side stays fixed under perturbation.
Stage1Terms stage1_objective(Tape& tape, const BoundParams& params, const ModelInputs& inputs,
                             const RunConfig& config, const TripleBatch& batch, const Matrix* mask_noise,
                             const Matrix* gib_reference = nullptr);

// Contrastive loss between C[users] and the mean projection of the positives' raw features.
Var stage2_objective(Tape& tape, const BoundParams& params, const ModalityFeatures& modalities,
                     const TripleBatch& batch, double tau);

// Alternating two-stage optimizer: stage 1 minimizes rec + alpha FIB + beta GIB + reg
// over all parameters; stage 2 minimizes the in-batch contrastive loss over C and
// the modality projections only, with its own Adam state.
class Trainer {
 public:
  Trainer(const Dataset& dataset, RunConfig config);
  // `restored` marks trained parameters: with per-epoch graph refresh the item
  // graph is then rebuilt from their projections instead of the raw features.
  Trainer(const Dataset& dataset, RunConfig config, ModelParams params, bool restored = true);

  LossBreakdown stage1_step(const TripleBatch& batch);
  double stage2_step(const TripleBatch& batch);
  // Stage 1, then stage 2 when enabled and scheduled per batch.
  LossBreakdown train_step(const TripleBatch& batch);

  // Stage-1 loss on a batch with fixed relaxation noise, without updating anything.
  LossBreakdown stage1_loss(const TripleBatch& batch, const Matrix* mask_noise) const;

  // Rebuilds the per-modality kNN topologies from the current projections.
  void refresh_item_graph();

  // Eval-mode representations (expected mask weights).
  std::pair<Matrix, Matrix> representations() const;
  MetricsResult evaluate(Split split, std::span<const int> topn) const;

  TripleBatch sample_batch();
  std::size_t batches_per_epoch() const;

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const RunConfig& config() const { return config_; }
  const Adam& stage1_optimizer() const { return stage1_adam_; }
  const Adam& stage2_optimizer() const { return stage2_adam_; }
  const SemanticItemGraph* item_graph() const { return has_item_graph_ ? &item_graph_ : nullptr; }
  const SparseMatrix& normalized_adjacency() const { return norm_adj_; }
  ModelInputs inputs() const;
  Matrix draw_mask_noise();

 private:
  // Forward + loss; when `grads` is set, also backpropagates into it.
  LossBreakdown stage1_pass(const TripleBatch& batch, const Matrix* mask_noise, std::vector<Matrix>* grads) const;
  void build_graphs(bool restored);

  const Dataset* dataset_;
  RunConfig config_;
  ModelParams params_;
  SparseMatrix norm_adj_;
  SemanticItemGraph item_graph_;
  bool has_item_graph_ = false;
  TripleSampler sampler_;
  std::mt19937_64 sample_rng_;
  std::mt19937_64 mask_rng_;
  Adam stage1_adam_;
  Adam stage2_adam_;
};

// Stops once the monitored metric has not strictly improved for `patience` epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(int epoch, double metric);
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }
  bool improved() const { return improved_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_metric_ = -1.0;
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;  // means over the epoch's batches
  double val_recall20 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_recall20 = 0.0;
  std::string stop_reason;
};

struct TrainResult {
  TrainReport report;
  ModelParams best;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult run_training(const Dataset& dataset, const RunConfig& config, const EpochCallback& on_epoch = {});

// Checkpoint directory: manifest.tsv ("name<TAB>rows<TAB>cols<TAB>role"),
// one IBMF (float64) file per tensor, and config.txt.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const RunConfig& config);
ModelParams load_checkpoint(const std::filesystem::path& dir);
RunConfig load_checkpoint_config(const std::filesystem::path& dir);

std::string epoch_json(const EpochRecord& record);

}  // namespace ibmrec
