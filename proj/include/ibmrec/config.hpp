#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ibmrec {

enum class Backbone { kVbpr, kVLightGcn, kLattice, kVLattice };
enum class Stage2Schedule { kPerBatch, kPerEpoch };
enum class GraphRefresh { kFrozen, kPerEpoch };

std::string to_string(Backbone b);
Backbone parse_backbone(std::string_view text);

// Fully-resolved run configuration. Text form is one "key = value" per line.
struct RunConfig {
  std::string dataset;

  int embedding_dim = 64;
  int gcn_layers = 2;
  int knn_topk = 10;
  double init_std = 0.01;

  double alpha = 1.0;
  double beta = 0.5;
  double sigma_sq_fib = 0.15;
  double sigma_sq_gib = 0.15;
  bool hsic_normalize = true;
  double tau = 0.2;
  double lambda_reg = 1e-4;
  double mask_temperature = 0.5;

  double learning_rate = 0.0005;
  int batch_size = 1024;
  int max_epochs = 1000;
  int early_stop_patience = 10;
  std::vector<int> topn = {10, 20};

  Backbone backbone = Backbone::kVLattice;
  bool fib_enabled = true;
  bool gib_enabled = true;
  bool stage2_enabled = true;
  Stage2Schedule stage2_schedule = Stage2Schedule::kPerBatch;
  GraphRefresh graph_refresh = GraphRefresh::kFrozen;

  std::uint64_t seed = 2024;

  // Whether the item-item branch participates (lattice, vlattice).
  bool uses_item_graph() const { return backbone == Backbone::kLattice || backbone == Backbone::kVLattice; }
  bool uses_user_item_graph() const { return backbone != Backbone::kVbpr; }
  // GIB needs an item-item graph to mask.
  bool gib_active() const { return gib_enabled && uses_item_graph(); }

  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_text() const;
  std::string hash() const;

  static RunConfig from_text(std::string_view text);
  static RunConfig load(const std::string& path);
};

// Applies "key=value" strings in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

std::vector<std::string> config_keys();

// Independent stream seed for one component ("split", "init", "sample", "mask", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

}  // namespace ibmrec
