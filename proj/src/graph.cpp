#include "ibmrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace ibmrec {

SparseMatrix build_bipartite_adjacency(const InteractionSet& set) {
  const Index m = set.num_users;
  std::vector<Triplet> triplets;
  triplets.reserve(2 * set.train_size());
  for (std::size_t u = 0; u < set.train.size(); ++u) {
    for (Index i : set.train[u]) {
      triplets.emplace_back(static_cast<Index>(u), m + i, 1.0);
      triplets.emplace_back(m + i, static_cast<Index>(u), 1.0);
    }
  }
  SparseMatrix adj(m + set.num_items, m + set.num_items);
  adj.setFromTriplets(triplets.begin(), triplets.end());
  adj.makeCompressed();
  return adj;
}

SparseMatrix build_modality_knn(const Matrix& features, int k) {
  const Index n = features.rows();
  if (k < 1 || k >= n) {
    throw ContractError("build_modality_knn: need 1 <= k < N (k=" + std::to_string(k) + ", N=" +
                        std::to_string(n) + ")");
  }
  Matrix unit = features;
  Index zero_rows = 0;
  for (Index r = 0; r < n; ++r) {
    const double norm = unit.row(r).norm();
    if (norm > 0.0) {
      unit.row(r) /= norm;
    } else {
      ++zero_rows;
    }
  }
  if (zero_rows > 0) {
    std::cerr << "warning: " << zero_rows << " item(s) have all-zero features and stay isolated\n";
  }

  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  constexpr Index kBlock = 256;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index begin = 0; begin < n; begin += kBlock) {
    const Index rows = std::min(kBlock, n - begin);
    const Matrix sims = unit.middleRows(begin, rows) * unit.transpose();
    for (Index local = 0; local < rows; ++local) {
      const Index i = begin + local;
      order.clear();
      for (Index j = 0; j < n; ++j) {
        if (j != i && sims(local, j) != 0.0) order.push_back(j);
      }
      const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](Index a, Index b) {
                          const double sa = sims(local, a), sb = sims(local, b);
                          return sa != sb ? sa > sb : a < b;
                        });
      for (std::size_t p = 0; p < keep; ++p) {
        triplets.emplace_back(i, order[p], std::clamp(sims(local, order[p]), -1.0, 1.0));
      }
    }
  }
  SparseMatrix s(n, n);
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  return s;
}

SemanticItemGraph build_semantic_graph(std::vector<SparseMatrix> topologies) {
  if (topologies.empty()) throw StructureError("semantic graph needs at least one modality");
  const Index n = topologies.front().rows();
  std::vector<Triplet> support;
  for (const SparseMatrix& t : topologies) {
    if (t.rows() != n || t.cols() != n) throw DimensionError("modality topologies must share the item count");
    for (Index r = 0; r < t.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(t, r); it; ++it) support.emplace_back(it.row(), it.col(), 1.0);
    }
  }
  SemanticItemGraph g;
  g.pattern.resize(n, n);
  g.pattern.setFromTriplets(support.begin(), support.end(), [](double a, double) { return a; });
  g.pattern.makeCompressed();
  if (g.pattern.nonZeros() == 0) throw StructureError("semantic graph has no edges");

  g.modality_values = Matrix::Zero(g.pattern.nonZeros(), static_cast<Index>(topologies.size()));
  for (std::size_t m = 0; m < topologies.size(); ++m) {
    const SparseMatrix& t = topologies[m];
    for (Index r = 0; r < n; ++r) {
      // Both rows are sorted by column; walk them together.
      Index p = g.pattern.outerIndexPtr()[r];
      for (SparseMatrix::InnerIterator it(t, r); it; ++it) {
        while (g.pattern.innerIndexPtr()[p] != it.col()) ++p;
        g.modality_values(p, static_cast<Index>(m)) = it.value();
      }
    }
  }
  g.topologies = std::move(topologies);
  return g;
}

SemanticItemGraph build_semantic_graph(const ModalityFeatures& modalities, int k) {
  std::vector<SparseMatrix> topologies;
  for (const Modality& m : modalities) topologies.push_back(build_modality_knn(m.features, k));
  return build_semantic_graph(std::move(topologies));
}

Var fuse_and_normalize(const SemanticItemGraph& graph, Var fusion_logits) {
  if (fusion_logits.rows() != graph.num_modalities() || fusion_logits.cols() != 1) {
    throw DimensionError("fuse_and_normalize: " + std::to_string(graph.num_modalities()) +
                         " modalities but logits are " + shape_string(fusion_logits.value()));
  }
  Tape& tape = *fusion_logits.tape();
  Var per_modality = tape.constant(graph.modality_values, "modality_values");
  Var fused = matmul(per_modality, softmax(fusion_logits));
  return normalize_edge_values(graph.pattern, fused);
}

std::vector<Index> edge_sources(const SparseMatrix& pattern) {
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(pattern.nonZeros()));
  for (Index r = 0; r < pattern.outerSize(); ++r) {
    for (Index p = pattern.outerIndexPtr()[r]; p < pattern.outerIndexPtr()[r + 1]; ++p) rows.push_back(r);
  }
  return rows;
}

std::vector<Index> edge_targets(const SparseMatrix& pattern) {
  return {pattern.innerIndexPtr(), pattern.innerIndexPtr() + pattern.nonZeros()};
}

}  // namespace ibmrec
