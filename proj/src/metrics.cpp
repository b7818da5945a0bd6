#include "ibmrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ibmrec {

std::string to_string(Split split) { return split == Split::kVal ? "val" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw ConfigError("split must be val or test, got '" + text + "'");
}

const RankMetrics& MetricsResult::operator[](int n) const {
  for (const MetricsAtN& m : at) {
    if (m.n == n) return m.value;
  }
  throw ContractError("no metrics computed at N=" + std::to_string(n));
}

std::vector<Index> top_items(const Eigen::Ref<const Vector>& scores, std::span<const Index> masked, std::size_t limit) {
  std::vector<Index> candidates;
  candidates.reserve(static_cast<std::size_t>(scores.size()));
  auto mask_it = masked.begin();
  for (Index i = 0; i < scores.size(); ++i) {
    while (mask_it != masked.end() && *mask_it < i) ++mask_it;
    if (mask_it != masked.end() && *mask_it == i) continue;
    candidates.push_back(i);
  }
  const auto better = [&](Index a, Index b) { return scores(a) != scores(b) ? scores(a) > scores(b) : a < b; };
  limit = std::min(limit, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(limit), candidates.end(), better);
  candidates.resize(limit);
  return candidates;
}

std::vector<Index> rank_items(const Matrix& users, const Matrix& items, Index user, std::span<const Index> masked) {
  if (user < 0 || user >= users.rows()) throw IndexError("rank_items: user out of range");
  const Vector scores = items * users.row(user).transpose();
  return top_items(scores, masked, static_cast<std::size_t>(scores.size()));
}

RankMetrics metrics_at(std::span<const Index> ranked, std::span<const Index> truth, int n) {
  if (n < 1) throw ContractError("metrics_at: N must be positive");
  if (truth.empty()) throw ContractError("metrics_at: empty truth set");
  const std::size_t cutoff = std::min<std::size_t>(static_cast<std::size_t>(n), ranked.size());
  double hits = 0.0, dcg = 0.0;
  for (std::size_t r = 0; r < cutoff; ++r) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[r])) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(n), truth.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return {hits / static_cast<double>(truth.size()), hits / static_cast<double>(n), dcg / idcg};
}

MetricsResult evaluate_embeddings(const Matrix& users, const Matrix& items, const InteractionSet& set, Split split,
                                  std::span<const int> topn) {
  if (users.rows() != set.num_users || items.rows() != set.num_items || users.cols() != items.cols()) {
    throw DimensionError("evaluate: representation shapes do not match the dataset");
  }
  if (topn.empty()) throw ContractError("evaluate: no cutoffs");
  const auto& truth_lists = split == Split::kVal ? set.val : set.test;
  const int max_n = *std::max_element(topn.begin(), topn.end());

  MetricsResult result;
  for (int n : topn) result.at.push_back({n, {}});

  constexpr Index kBlock = 256;
  std::vector<Index> masked;
  for (Index begin = 0; begin < set.num_users; begin += kBlock) {
    const Index count = std::min(kBlock, set.num_users - begin);
    const Matrix block = users.middleRows(begin, count) * items.transpose();
    for (Index local = 0; local < count; ++local) {
      const auto u = static_cast<std::size_t>(begin + local);
      const auto& truth = truth_lists[u];
      if (truth.empty()) continue;
      masked = set.train[u];
      if (split == Split::kTest) {
        masked.insert(masked.end(), set.val[u].begin(), set.val[u].end());
        std::sort(masked.begin(), masked.end());
      }
      const Vector scores = block.row(local).transpose();
      const std::vector<Index> ranked = top_items(scores, masked, static_cast<std::size_t>(max_n));
      for (MetricsAtN& m : result.at) {
        const RankMetrics r = metrics_at(ranked, truth, m.n);
        m.value.recall += r.recall;
        m.value.precision += r.precision;
        m.value.ndcg += r.ndcg;
      }
      ++result.users_evaluated;
    }
  }
  if (result.users_evaluated > 0) {
    const auto count = static_cast<double>(result.users_evaluated);
    for (MetricsAtN& m : result.at) {
      m.value.recall /= count;
      m.value.precision /= count;
      m.value.ndcg /= count;
    }
  }
  return result;
}

}  // namespace ibmrec
