#pragma once

#include <span>
#include <string>
#include <vector>

#include "ibmrec/dataset.hpp"
#include "ibmrec/matrix.hpp"

namespace ibmrec {

enum class Split { kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct RankMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
};

struct MetricsAtN {
  int n = 0;
  RankMetrics value;
};

struct MetricsResult {
  std::vector<MetricsAtN> at;
  Index users_evaluated = 0;

  const RankMetrics& operator[](int n) const;
  double recall(int n) const { return (*this)[n].recall; }
};

// Unmasked items in descending score order, ties to the lower id. `masked` must be sorted.
std::vector<Index> rank_items(const Matrix& users, const Matrix& items, Index user, std::span<const Index> masked);

// First `limit` entries of the same order, without sorting the tail.
std::vector<Index> top_items(const Eigen::Ref<const Vector>& scores, std::span<const Index> masked, std::size_t limit);

// Gain 1, discount 1 / log2(rank + 1). `truth` must be sorted and non-empty.
RankMetrics metrics_at(std::span<const Index> ranked, std::span<const Index> truth, int n);

// Full-ranking evaluation. Val masks train positives; test masks train and val.
// Users without positives in the split are skipped.
MetricsResult evaluate_embeddings(const Matrix& users, const Matrix& items, const InteractionSet& set, Split split,
                                  std::span<const int> topn);

}  // namespace ibmrec
