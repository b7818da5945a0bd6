#pragma once

// Reverse-mode differentiation over dense 64-bit matrices.
//
// A Tape owns an append-only list of nodes. Every operation below evaluates
// eagerly, appends one node, and registers its adjoint when any input needs a
// gradient. backward() walks the tape once in reverse append order.
//
// Sparse operands (SparseMatrix) are captured by address and must outlive the
// tape they are used on.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ibmrec/matrix.hpp"

namespace ibmrec {

class Tape;

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kExp,
  kLog,
  kSigmoid,
  kLogSigmoid,
  kRelu,
  kScale,
  kAddRow,
  kRowGather,
  kSparseMatMul,
  kWeightedSparseMatMul,
  kL2RowNormalize,
  kConcatCols,
  kConcatRows,
  kTranspose,
  kSum,
  kSumSquares,
  kRowDot,
  kSoftmax,
  kNormalizeEdges,
  kRbfKernel,
  kCenteredTrace,
  kDiagCrossEntropy,
};

const char* op_name(OpKind op);

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Adjoint = std::function<void(Tape&, std::size_t)>;

  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    bool is_parameter = false;
    std::string name;
    Adjoint adjoint;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, std::string name = {});
  Var parameter(Matrix value, std::string name = {});

  // Appends a node. Rejects non-finite values.
  Var push(OpKind op, std::vector<std::size_t> inputs, Matrix value, Adjoint adjoint);

  void backward(Var loss);

  // Gradient of the last backward() loss with respect to `v`; zeros if none flowed.
  Matrix grad(Var v) const;
  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& contribution);

  const Node& node(std::size_t id) const { return nodes_[id]; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<std::size_t> parameter_ids() const;

 private:
  std::vector<Node> nodes_;
};

template <typename Derived>
void Tape::accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& contribution) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = contribution;
  } else {
    n.grad += contribution;
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b);
// a * b with a constant dense lhs captured by address (no copy onto the tape).
Var matmul(const Matrix& a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // entrywise
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
Var relu(Var a);
Var scale(Var a, double factor);

// m (n x d) plus a 1 x d row broadcast over every row.
Var add_row(Var m, Var row);

// Output row i is row indices[i] of m; the adjoint scatter-adds.
Var row_gather(Var m, std::span<const Index> indices);

// s * d with constant sparse s.
Var sparse_matmul(const SparseMatrix& s, Var d);

// s * d where s takes its structure from `pattern` and its nonzero values from
// `values` (nnz x 1, in the pattern's compressed storage order).
Var weighted_sparse_matmul(const SparseMatrix& pattern, Var values, Var d);

// Divides each row by max(||row||, eps).
Var l2_row_normalize(Var m, double eps);

Var concat_cols(Var left, Var right);
Var concat_rows(Var top, Var bottom);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);

// Row-wise inner products of two equally shaped matrices, as an n x 1 column.
Var row_dot(Var a, Var b);

// Softmax over all entries of a column vector.
Var softmax(Var logits);

// values / sqrt(deg(row) * deg(col)) entrywise over the pattern, with
// deg(i) = sum of |values| on row i. Zero-degree ends yield zero.
Var normalize_edge_values(const SparseMatrix& pattern, Var values);

// K_ij = exp(-||x_i - x_j||^2 / (2 sigma_sq)).
Var rbf_kernel(Var x, double sigma_sq);

// tr(Kx H Ky H) / (n - 1)^2 with H the n x n centering matrix.
Var centered_trace(Var kx, Var ky);

// -(1/B) sum_a log softmax(logits row a)[a] for square logits.
Var diag_cross_entropy(Var logits);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

}  // namespace ibmrec
