#pragma once

#include <vector>

#include "ibmrec/autodiff.hpp"
#include "ibmrec/dataset.hpp"
#include "ibmrec/matrix.hpp"

namespace ibmrec {

// [[0, R], [R^T, 0]] over the train split, (M + N) square.
SparseMatrix build_bipartite_adjacency(const InteractionSet& set);

// D^{-1/2} A D^{-1/2} with D the row sums of |A|. Zero-degree rows stay zero.
template <typename Scalar>
CsrMatrix<Scalar> sym_normalize(const CsrMatrix<Scalar>& adj) {
  if (adj.rows() != adj.cols()) throw DimensionError("sym_normalize: adjacency must be square");
  DenseVector<Scalar> deg = DenseVector<Scalar>::Zero(adj.rows());
  for (Index r = 0; r < adj.outerSize(); ++r) {
    for (typename CsrMatrix<Scalar>::InnerIterator it(adj, r); it; ++it) deg(it.row()) += std::abs(it.value());
  }
  const DenseVector<Scalar> inv = deg.unaryExpr([](Scalar d) { return d > Scalar(0) ? Scalar(1) / std::sqrt(d) : Scalar(0); });
  CsrMatrix<Scalar> out = adj;
  for (Index r = 0; r < out.outerSize(); ++r) {
    for (typename CsrMatrix<Scalar>::InnerIterator it(out, r); it; ++it) it.valueRef() *= inv(it.row()) * inv(it.col());
  }
  out.makeCompressed();
  return out;
}

// Row i keeps its k most cosine-similar items j != i (nonzero similarity only),
// ties to the lower id. Requires k < N.
SparseMatrix build_modality_knn(const Matrix& features, int k);

// Fused item-item structure: union of per-modality kNN topologies.
struct SemanticItemGraph {
  std::vector<SparseMatrix> topologies;  // per modality, N x N, cosine values
  SparseMatrix pattern;                  // union support, compressed; stored values are 1
  Matrix modality_values;                // nnz x K, modality m's value on each union entry (0 if absent)

  Index num_items() const { return pattern.rows(); }
  Index num_edges() const { return pattern.nonZeros(); }
  Index num_modalities() const { return modality_values.cols(); }
};

SemanticItemGraph build_semantic_graph(std::vector<SparseMatrix> topologies);
SemanticItemGraph build_semantic_graph(const ModalityFeatures& modalities, int k);

// S = sum_m softmax(logits)_m S^m on the union, then D_S^{-1/2} S D_S^{-1/2}.
// Returns the normalized value of every entry of graph.pattern, in storage order.
Var fuse_and_normalize(const SemanticItemGraph& graph, Var fusion_logits);

// Row/col of every union entry in storage order.
std::vector<Index> edge_sources(const SparseMatrix& pattern);
std::vector<Index> edge_targets(const SparseMatrix& pattern);

}  // namespace ibmrec
