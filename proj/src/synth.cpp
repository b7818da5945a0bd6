#include "ibmrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ibmrec/config.hpp"

namespace ibmrec {

namespace {

Matrix standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

SynthData make_synthetic(const SynthSpec& spec) {
  if (spec.users < 1 || spec.items < 2 || spec.rank < 1 || spec.relevant_dim < 1 || spec.irrelevant_dim < 0 ||
      spec.modalities < 1 || spec.interactions_per_user < 1 || !(spec.noise >= 0.0)) {
    throw ConfigError("synth: sizes must be positive and noise non-negative");
  }
  if (spec.interactions_per_user > spec.items) {
    throw ConfigError("synth: interactions_per_user exceeds the number of items");
  }
  std::mt19937_64 rng(derive_seed(spec.seed, "synth"));
  SynthData out;
  out.user_factors = standard_normal(spec.users, spec.rank, rng);
  out.item_factors = standard_normal(spec.items, spec.rank, rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.rank));

  RawInteractions raw;
  for (Index u = 0; u < spec.users; ++u) raw.users.intern("u" + std::to_string(u));
  for (Index i = 0; i < spec.items; ++i) raw.items.intern("i" + std::to_string(i));

  const Matrix scores = (out.user_factors * out.item_factors.transpose()) * (scale * spec.sharpness);
  std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
  std::vector<Index> order(static_cast<std::size_t>(spec.items));
  Vector perturbed(spec.items);
  for (Index u = 0; u < spec.users; ++u) {
    for (Index i = 0; i < spec.items; ++i) perturbed(i) = scores(u, i) - std::log(-std::log(unif(rng)));
    std::iota(order.begin(), order.end(), Index{0});
    const auto k = static_cast<std::ptrdiff_t>(spec.interactions_per_user);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Index a, Index b) { return perturbed(a) > perturbed(b) || (perturbed(a) == perturbed(b) && a < b); });
    std::vector<Index> chosen(order.begin(), order.begin() + k);
    std::sort(chosen.begin(), chosen.end());
    for (Index i : chosen) raw.pairs.emplace_back(u, i);
  }

  Dataset& ds = out.dataset;
  ds.interactions = split_interactions(raw, SplitRatios{}, derive_seed(spec.seed, "split"));
  for (int k = 0; k < spec.modalities; ++k) {
    const Matrix mix = standard_normal(spec.rank, spec.relevant_dim, rng);
    Matrix features(spec.items, spec.relevant_dim + spec.irrelevant_dim);
    features.leftCols(spec.relevant_dim) = out.item_factors * mix * scale;
    if (spec.irrelevant_dim > 0) {
      features.rightCols(spec.irrelevant_dim) = standard_normal(spec.items, spec.irrelevant_dim, rng) * spec.noise;
    }
    // Features are stored as float32 on disk; round now so in-memory and reloaded data agree.
    features = features.cast<float>().cast<double>();
    ds.modalities.push_back({k == 0 ? "visual" : k == 1 ? "textual" : "modality" + std::to_string(k), features});
  }
  return out;
}

Dataset write_synthetic(const std::filesystem::path& dir, const SynthSpec& spec) {
  SynthData data = make_synthetic(spec);
  save_dataset(dir, data.dataset);
  return std::move(data.dataset);
}

}  // namespace ibmrec
