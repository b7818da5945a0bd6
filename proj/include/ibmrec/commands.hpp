#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ibmrec/config.hpp"
#include "ibmrec/dataset.hpp"
#include "ibmrec/metrics.hpp"
#include "ibmrec/synth.hpp"
#include "ibmrec/trainer.hpp"

namespace ibmrec {

struct PrepareOptions {
  std::filesystem::path interactions;
  // (modality name, IBMF path). Feature row r belongs to the item whose external id is r.
  std::vector<std::pair<std::string, std::filesystem::path>> features;
  SplitRatios ratios;
  std::uint64_t seed = 2024;
  std::filesystem::path out;
};

Dataset prepare_dataset(const PrepareOptions& options);

// The dataset directory named by config.dataset.
Dataset load_run_dataset(const RunConfig& config);

// Reorders externally indexed feature rows into dense item order. Rows no
// interaction references are dropped.
Matrix align_features(const Matrix& rows_by_external_id, const IdMap& items, const std::string& modality);

// One flat object per cutoff.
nlohmann::json metrics_json(const MetricsResult& metrics, Split split, const RunConfig& config);

struct TrainOutcome {
  TrainReport report;
  ModelParams best;
  MetricsResult val;
  MetricsResult test;
};

// Trains on the dataset named by config.dataset. With a non-empty `out`, writes
// config.txt, epochs.jsonl, checkpoint/ and metrics.json there.
TrainOutcome train_command(const RunConfig& config, const std::filesystem::path& out);
TrainOutcome train_on(const Dataset& dataset, const RunConfig& config, const std::filesystem::path& out = {});

// Reads the checkpoint and its config echo; writes nothing.
MetricsResult evaluate_checkpoint(const std::filesystem::path& checkpoint, Split split, RunConfig* config_out = nullptr);

struct Variant {
  std::string name;
  std::vector<std::string> overrides;
};

// full, w/o FIB, w/o GIB, w/o IB.
std::vector<Variant> ablation_variants();

struct AblationRow {
  std::string variant;
  int seeds = 0;
  double val_recall20 = 0.0;
  std::vector<MetricsAtN> test;  // means over seeds
};

std::vector<AblationRow> run_ablation(const Dataset& dataset, const RunConfig& config, int seeds);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::vector<int>& topn);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

// "key=v1,v2,..."
GridAxis parse_grid_axis(const std::string& text);

struct SweepRow {
  std::vector<std::string> point;  // one value per axis
  std::uint64_t seed = 0;
  double val_recall20 = 0.0;
  double test_recall20 = 0.0;
  double test_ndcg20 = 0.0;
};

// Grid points in row-major axis order, each run for seeds config.seed, config.seed + 1, ...
std::vector<SweepRow> run_sweep(const Dataset& dataset, const RunConfig& config, const std::vector<GridAxis>& grid,
                                int seeds);
// Per-run rows, then one "summary" row per point (means, then sample stdevs),
// then a "# best" footer naming the point with the highest mean val recall@20.
void write_sweep_csv(std::ostream& out, const std::vector<GridAxis>& grid, const std::vector<SweepRow>& rows);

}  // namespace ibmrec
