#include "ibmrec/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ibmrec/ibmf.hpp"

namespace ibmrec {

namespace {

std::vector<int> cutoffs_with_20(const RunConfig& config) {
  std::vector<int> n = config.topn;
  if (std::find(n.begin(), n.end(), 20) == n.end()) n.push_back(20);
  std::sort(n.begin(), n.end());
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

Dataset load_run_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("config key 'dataset' is not set");
  if (!std::filesystem::is_directory(config.dataset)) {
    throw DataError("dataset directory not found: " + config.dataset + " (create one with 'prepare' or 'synth')");
  }
  return load_dataset(config.dataset);
}

Matrix align_features(const Matrix& rows_by_external_id, const IdMap& items, const std::string& modality) {
  Matrix out(items.size(), rows_by_external_id.cols());
  for (Index dense = 0; dense < items.size(); ++dense) {
    const std::string& ext = items.external(dense);
    Index row = -1;
    const auto [ptr, ec] = std::from_chars(ext.data(), ext.data() + ext.size(), row);
    if (ec != std::errc() || ptr != ext.data() + ext.size() || row < 0 || row >= rows_by_external_id.rows()) {
      throw DataError("modality '" + modality + "': item id '" + ext + "' is not a row index below " +
                      std::to_string(rows_by_external_id.rows()));
    }
    out.row(dense) = rows_by_external_id.row(row);
  }
  return out;
}

Dataset prepare_dataset(const PrepareOptions& options) {
  if (options.features.empty()) throw ConfigError("prepare: at least one --feature name=path is required");
  const RawInteractions raw = load_interactions(options.interactions);
  Dataset ds;
  ds.interactions = split_interactions(raw, options.ratios, options.seed);
  for (const auto& [name, path] : options.features) {
    ds.modalities.push_back({name, align_features(ibmf::read_matrix(path), raw.items, name)});
  }
  validate_modalities(ds.modalities, ds.interactions.num_items);
  save_dataset(options.out, ds);
  return ds;
}

nlohmann::json metrics_json(const MetricsResult& metrics, Split split, const RunConfig& config) {
  nlohmann::json doc = nlohmann::json::array();
  for (const MetricsAtN& m : metrics.at) {
    doc.push_back({{"split", to_string(split)},
                   {"N", m.n},
                   {"recall", m.value.recall},
                   {"precision", m.value.precision},
                   {"ndcg", m.value.ndcg},
                   {"users_evaluated", metrics.users_evaluated},
                   {"config_hash", config.hash()},
                   {"seed", config.seed}});
  }
  return doc;
}

TrainOutcome train_on(const Dataset& dataset, const RunConfig& config, const std::filesystem::path& out) {
  config.validate();
  std::ofstream log;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_text(out / "config.txt", config.to_text());
    log.open(out / "epochs.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) throw DataError("cannot write " + (out / "epochs.jsonl").string());
  }
  TrainResult result = run_training(dataset, config, [&](const EpochRecord& r) {
    if (log.is_open()) log << epoch_json(r) << '\n' << std::flush;
  });
  TrainOutcome outcome;
  outcome.report = std::move(result.report);
  outcome.best = std::move(result.best);
  const std::vector<int> cutoffs = cutoffs_with_20(config);
  const Trainer evaluator(dataset, config, outcome.best);
  outcome.val = evaluator.evaluate(Split::kVal, cutoffs);
  outcome.test = evaluator.evaluate(Split::kTest, cutoffs);
  if (!out.empty()) {
    save_checkpoint(out / "checkpoint", outcome.best, config);
    nlohmann::json doc = metrics_json(outcome.val, Split::kVal, config);
    for (auto& row : metrics_json(outcome.test, Split::kTest, config)) doc.push_back(row);
    write_text(out / "metrics.json", doc.dump(2) + "\n");
  }
  return outcome;
}

TrainOutcome train_command(const RunConfig& config, const std::filesystem::path& out) {
  config.validate();
  return train_on(load_run_dataset(config), config, out);
}

MetricsResult evaluate_checkpoint(const std::filesystem::path& checkpoint, Split split, RunConfig* config_out) {
  const RunConfig config = load_checkpoint_config(checkpoint);
  ModelParams params = load_checkpoint(checkpoint);
  const Dataset dataset = load_run_dataset(config);
  const Trainer evaluator(dataset, config, std::move(params));
  if (config_out) *config_out = config;
  return evaluator.evaluate(split, config.topn);
}

std::vector<Variant> ablation_variants() {
  return {{"full", {"fib_enabled=true", "gib_enabled=true"}},
          {"w/o FIB", {"fib_enabled=false", "gib_enabled=true"}},
          {"w/o GIB", {"fib_enabled=true", "gib_enabled=false"}},
          {"w/o IB", {"fib_enabled=false", "gib_enabled=false"}}};
}

std::vector<AblationRow> run_ablation(const Dataset& dataset, const RunConfig& config, int seeds) {
  if (seeds < 1) throw ConfigError("ablate: --seeds must be at least 1");
  const std::vector<int> cutoffs = cutoffs_with_20(config);
  std::vector<AblationRow> rows;
  for (const Variant& variant : ablation_variants()) {
    AblationRow row;
    row.variant = variant.name;
    row.seeds = seeds;
    for (int n : cutoffs) row.test.push_back({n, {}});
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = config;
      apply_overrides(cfg, variant.overrides);
      cfg.seed = config.seed + static_cast<std::uint64_t>(s);
      const TrainOutcome outcome = train_on(dataset, cfg);
      row.val_recall20 += outcome.val.recall(20) / seeds;
      for (MetricsAtN& m : row.test) {
        const RankMetrics& r = outcome.test[m.n];
        m.value.recall += r.recall / seeds;
        m.value.precision += r.precision / seeds;
        m.value.ndcg += r.ndcg / seeds;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::vector<int>& topn) {
  out << "variant,seeds,val_recall@20";
  for (int n : topn) out << ",recall@" << n << ",precision@" << n << ",ndcg@" << n;
  out << '\n';
  for (const AblationRow& row : rows) {
    out << row.variant << ',' << row.seeds << ',' << format_double(row.val_recall20);
    for (int n : topn) {
      const auto it = std::find_if(row.test.begin(), row.test.end(), [n](const MetricsAtN& m) { return m.n == n; });
      if (it == row.test.end()) throw ContractError("ablation row has no metrics at N=" + std::to_string(n));
      out << ',' << format_double(it->value.recall) << ',' << format_double(it->value.precision) << ','
          << format_double(it->value.ndcg);
    }
    out << '\n';
  }
}

GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("grid axis must look like key=v1,v2,...: '" + text + "'");
  }
  GridAxis axis;
  axis.key = text.substr(0, eq);
  std::stringstream values(text.substr(eq + 1));
  std::string v;
  while (std::getline(values, v, ',')) {
    if (v.empty()) throw ConfigError("empty value in grid axis '" + text + "'");
    axis.values.push_back(v);
  }
  RunConfig probe;
  for (const std::string& value : axis.values) probe.set(axis.key, value);
  return axis;
}

std::vector<SweepRow> run_sweep(const Dataset& dataset, const RunConfig& config, const std::vector<GridAxis>& grid,
                                int seeds) {
  if (seeds < 1) throw ConfigError("sweep: --seeds must be at least 1");
  std::size_t points = 1;
  for (const GridAxis& axis : grid) points *= axis.values.size();
  std::vector<SweepRow> rows;
  for (std::size_t p = 0; p < points; ++p) {
    std::vector<std::string> point(grid.size());
    std::size_t rest = p;
    for (std::size_t a = grid.size(); a-- > 0;) {
      point[a] = grid[a].values[rest % grid[a].values.size()];
      rest /= grid[a].values.size();
    }
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = config;
      for (std::size_t a = 0; a < grid.size(); ++a) cfg.set(grid[a].key, point[a]);
      cfg.seed = config.seed + static_cast<std::uint64_t>(s);
      const TrainOutcome outcome = train_on(dataset, cfg);
      rows.push_back({point, cfg.seed, outcome.val.recall(20), outcome.test.recall(20), outcome.test[20].ndcg});
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<GridAxis>& grid, const std::vector<SweepRow>& rows) {
  auto write_point = [&](const std::vector<std::string>& point) {
    for (const std::string& v : point) out << v << ',';
  };
  for (const GridAxis& axis : grid) out << axis.key << ',';
  out << "seed,val_recall@20,test_recall@20,test_ndcg@20,val_recall@20_stdev,test_recall@20_stdev,"
         "test_ndcg@20_stdev\n";
  for (const SweepRow& r : rows) {
    write_point(r.point);
    out << r.seed << ',' << format_double(r.val_recall20) << ',' << format_double(r.test_recall20) << ','
        << format_double(r.test_ndcg20) << ",,,\n";
  }

  // Rows of one point are contiguous.
  std::vector<std::string> best_point;
  double best_mean = -1.0;
  for (std::size_t begin = 0; begin < rows.size();) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].point == rows[begin].point) ++end;
    const double n = static_cast<double>(end - begin);
    double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    for (std::size_t i = begin; i < end; ++i) {
      const double v[3] = {rows[i].val_recall20, rows[i].test_recall20, rows[i].test_ndcg20};
      for (int c = 0; c < 3; ++c) mean[c] += v[c] / n;
    }
    for (std::size_t i = begin; i < end; ++i) {
      const double v[3] = {rows[i].val_recall20, rows[i].test_recall20, rows[i].test_ndcg20};
      for (int c = 0; c < 3; ++c) sq[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
    }
    write_point(rows[begin].point);
    out << "summary";
    for (int c = 0; c < 3; ++c) out << ',' << format_double(mean[c]);
    for (int c = 0; c < 3; ++c) out << ',' << format_double(n > 1 ? std::sqrt(sq[c] / (n - 1)) : 0.0);
    out << '\n';
    if (mean[0] > best_mean) {
      best_mean = mean[0];
      best_point = rows[begin].point;
    }
    begin = end;
  }
  if (!rows.empty()) {
    out << "# best:";
    for (std::size_t a = 0; a < grid.size(); ++a) out << ' ' << grid[a].key << '=' << best_point[a];
    out << " mean_val_recall@20=" << format_double(best_mean) << '\n';
  }
}

}  // namespace ibmrec
