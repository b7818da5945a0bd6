// ibmrec: prepare datasets, train, evaluate, ablate and sweep.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ibmrec/commands.hpp"

namespace {

using namespace ibmrec;

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig config = path.empty() ? RunConfig{} : RunConfig::load(path);
  apply_overrides(config, overrides);
  config.validate();
  return config;
}

SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> v;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("--ratios: '" + part + "' is not a number");
    }
  }
  if (v.size() != 3) throw ConfigError("--ratios needs three comma-separated values");
  return {v[0], v[1], v[2]};
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path);
}

int run(int argc, char** argv) {
  CLI::App app{"IBMRec: information-bottleneck denoised multimedia recommender"};
  app.require_subcommand(1);

  std::string config_path, out, interactions, ratios = "0.8,0.1,0.1", checkpoint, split = "test";
  std::vector<std::string> overrides, features, grid;
  std::uint64_t seed = 2024;
  int seeds = 1;

  auto* prepare = app.add_subcommand("prepare", "split interactions and validate features into a dataset directory");
  prepare->add_option("--interactions", interactions, "user<TAB>item file")->required();
  prepare->add_option("--feature", features, "name=path.ibmf, one per modality")->required();
  prepare->add_option("--ratios", ratios, "train,val,test");
  prepare->add_option("--seed", seed);
  prepare->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  train->add_option("--config", config_path);
  train->add_option("--set", overrides, "key=value, applied after the file");
  train->add_option("--out", out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--split", split)->check(CLI::IsMember({"val", "test"}));
  evaluate->add_option("--out", out, "metrics JSON path (stdout if omitted)");

  auto* ablate = app.add_subcommand("ablate", "full / w/o FIB / w/o GIB / w/o IB comparison");
  ablate->add_option("--config", config_path);
  ablate->add_option("--set", overrides);
  ablate->add_option("--seeds", seeds, "seeds per variant, averaged");
  ablate->add_option("--out", out, "CSV path (stdout if omitted)");

  auto* sweep = app.add_subcommand("sweep", "grid search over config keys");
  sweep->add_option("--config", config_path);
  sweep->add_option("--set", overrides);
  sweep->add_option("--grid", grid, "key=v1,v2,...")->required();
  sweep->add_option("--seeds", seeds);
  sweep->add_option("--out", out, "CSV path (stdout if omitted)");

  SynthSpec spec;
  auto* synth = app.add_subcommand("synth", "generate a planted-signal dataset");
  synth->add_option("--users", spec.users);
  synth->add_option("--items", spec.items);
  synth->add_option("--rank", spec.rank);
  synth->add_option("--relevant-dim", spec.relevant_dim);
  synth->add_option("--irrelevant-dim", spec.irrelevant_dim);
  synth->add_option("--noise", spec.noise);
  synth->add_option("--interactions-per-user", spec.interactions_per_user);
  synth->add_option("--sharpness", spec.sharpness);
  synth->add_option("--seed", spec.seed);
  synth->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*prepare) {
    PrepareOptions opts;
    opts.interactions = interactions;
    for (const std::string& f : features) {
      const auto eq = f.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--feature must be name=path: '" + f + "'");
      opts.features.emplace_back(f.substr(0, eq), f.substr(eq + 1));
    }
    opts.ratios = parse_ratios(ratios);
    opts.seed = seed;
    opts.out = out;
    const DatasetSummary s = summarize(prepare_dataset(opts));
    std::cout << "users=" << s.users << " items=" << s.items << " interactions=" << s.interactions
              << " density=" << s.density << '\n';
  } else if (*train) {
    const RunConfig config = resolve_config(config_path, overrides);
    const TrainOutcome outcome = train_command(config, out);
    std::cout << "best_epoch=" << outcome.report.best_epoch << " stop=" << outcome.report.stop_reason
              << " val_recall@20=" << outcome.val.recall(20) << " test_recall@20=" << outcome.test.recall(20) << '\n';
  } else if (*evaluate) {
    RunConfig config;
    const Split s = parse_split(split);
    const MetricsResult metrics = evaluate_checkpoint(checkpoint, s, &config);
    emit(out, metrics_json(metrics, s, config).dump(2) + "\n");
  } else if (*ablate) {
    const RunConfig config = resolve_config(config_path, overrides);
    const Dataset dataset = load_run_dataset(config);
    const auto rows = run_ablation(dataset, config, seeds);
    std::ostringstream csv;
    std::vector<int> topn = config.topn;
    if (std::find(topn.begin(), topn.end(), 20) == topn.end()) topn.push_back(20);
    std::sort(topn.begin(), topn.end());
    write_ablation_csv(csv, rows, topn);
    emit(out, csv.str());
  } else if (*sweep) {
    const RunConfig config = resolve_config(config_path, overrides);
    std::vector<GridAxis> axes;
    for (const std::string& g : grid) axes.push_back(parse_grid_axis(g));
    const Dataset dataset = load_run_dataset(config);
    std::ostringstream csv;
    write_sweep_csv(csv, axes, run_sweep(dataset, config, axes, seeds));
    emit(out, csv.str());
  } else if (*synth) {
    const DatasetSummary s = summarize(write_synthetic(out, spec));
    std::cout << "users=" << s.users << " items=" << s.items << " interactions=" << s.interactions << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ibmrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ibmrec::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ibmrec::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
