#include "ibmrec/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace ibmrec {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ContractError("operands live on different tapes");
  }
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) = -softplus(-x)
double stable_log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Eigen::Map<const SparseMatrix> with_values(const SparseMatrix& pattern, const double* values) {
  return {pattern.rows(), pattern.cols(), pattern.nonZeros(), pattern.outerIndexPtr(),
          pattern.innerIndexPtr(), values};
}

// Row index of every stored entry, in storage order.
std::vector<Index> entry_rows(const SparseMatrix& s) {
  std::vector<Index> rows(static_cast<std::size_t>(s.nonZeros()));
  for (Index r = 0; r < s.outerSize(); ++r) {
    for (Index p = s.outerIndexPtr()[r]; p < s.outerIndexPtr()[r + 1]; ++p) {
      rows[static_cast<std::size_t>(p)] = r;
    }
  }
  return rows;
}

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "mat_mul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kNeg: return "neg";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLogSigmoid: return "log_sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kScale: return "scale";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kRowGather: return "row_gather";
    case OpKind::kSparseMatMul: return "sparse_mat_mul";
    case OpKind::kWeightedSparseMatMul: return "weighted_sparse_mat_mul";
    case OpKind::kL2RowNormalize: return "l2_row_normalize";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSum: return "sum";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kRowDot: return "row_dot";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kNormalizeEdges: return "normalize_edge_values";
    case OpKind::kRbfKernel: return "rbf_kernel";
    case OpKind::kCenteredTrace: return "centered_trace";
    case OpKind::kDiagCrossEntropy: return "diag_cross_entropy";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("expected a 1x1 node, got " + shape_string(v));
  }
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

Var Tape::constant(Matrix value, std::string name) {
  Var v = push(OpKind::kLeaf, {}, std::move(value), nullptr);
  nodes_.back().name = std::move(name);
  return v;
}

Var Tape::parameter(Matrix value, std::string name) {
  Var v = push(OpKind::kLeaf, {}, std::move(value), nullptr);
  Node& n = nodes_.back();
  n.name = std::move(name);
  n.requires_grad = true;
  n.is_parameter = true;
  return v;
}

Var Tape::push(OpKind op, std::vector<std::size_t> inputs, Matrix value, Adjoint adjoint) {
  if (!value.allFinite()) {
    throw DomainError(std::string("non-finite value produced by ") + op_name(op));
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward needs a scalar loss, got " + shape_string(loss.value()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.adjoint) continue;
    n.adjoint(*this, id);
    if (!n.is_parameter) n.grad.resize(0, 0);  // intermediate adjoints are no longer needed
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

std::vector<std::size_t> Tape::parameter_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_parameter) ids.push_back(i);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("mat_mul: " + shape_string(a.value()) + " * " + shape_string(b.value()));
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push(OpKind::kMatMul, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul(const Matrix& a, Var b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("mat_mul: " + shape_string(a) + " * " + shape_string(b.value()));
  }
  const std::size_t ib = b.id();
  const Matrix* lhs = &a;
  Matrix out = a * b.value();
  return b.tape()->push(OpKind::kMatMul, {ib}, std::move(out), [ib, lhs](Tape& t, std::size_t self) {
    t.accumulate(ib, Matrix(lhs->transpose() * t.upstream(self)));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(OpKind::kAdd, {ia, ib}, a.value() + b.value(),
                        [ia, ib](Tape& t, std::size_t self) {
                          t.accumulate(ia, t.upstream(self));
                          t.accumulate(ib, t.upstream(self));
                        });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(OpKind::kSub, {ia, ib}, a.value() - b.value(),
                        [ia, ib](Tape& t, std::size_t self) {
                          t.accumulate(ia, t.upstream(self));
                          t.accumulate(ib, -t.upstream(self));
                        });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->push(OpKind::kMul, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var neg(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->push(OpKind::kNeg, {ia}, -a.value(),
                        [ia](Tape& t, std::size_t self) { t.accumulate(ia, -t.upstream(self)); });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  return a.tape()->push(OpKind::kExp, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self).cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) {
    throw DomainError("log of a non-positive entry");
  }
  const std::size_t ia = a.id();
  Matrix out = a.value().array().log().matrix();
  return a.tape()->push(OpKind::kLog, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self).cwiseQuotient(t.value(ia)));
  });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().unaryExpr(&stable_sigmoid);
  return a.tape()->push(OpKind::kSigmoid, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix& s = t.value(self);
    t.accumulate(ia, (t.upstream(self).array() * s.array() * (1.0 - s.array())).matrix());
  });
}

Var log_sigmoid(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().unaryExpr(&stable_log_sigmoid);
  return a.tape()->push(OpKind::kLogSigmoid, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    // d/dx log sigmoid(x) = sigmoid(-x)
    Matrix d = (-t.value(ia)).unaryExpr(&stable_sigmoid);
    t.accumulate(ia, t.upstream(self).cwiseProduct(d));
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->push(OpKind::kRelu, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    Matrix mask = (t.value(ia).array() > 0.0).cast<double>().matrix();
    t.accumulate(ia, t.upstream(self).cwiseProduct(mask));
  });
}

Var scale(Var a, double factor) {
  const std::size_t ia = a.id();
  return a.tape()->push(OpKind::kScale, {ia}, a.value() * factor,
                        [ia, factor](Tape& t, std::size_t self) {
                          t.accumulate(ia, t.upstream(self) * factor);
                        });
}

Var add_row(Var m, Var row) {
  require_same_tape(m, row);
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw DimensionError("add_row: " + shape_string(m.value()) + " + row " +
                         shape_string(row.value()));
  }
  const std::size_t im = m.id(), ir = row.id();
  Matrix out = m.value().rowwise() + row.value().row(0);
  return m.tape()->push(OpKind::kAddRow, {im, ir}, std::move(out),
                        [im, ir](Tape& t, std::size_t self) {
                          const Matrix& g = t.upstream(self);
                          t.accumulate(im, g);
                          if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
                        });
}

Var row_gather(Var m, std::span<const Index> indices) {
  const Matrix& src = m.value();
  Matrix out(static_cast<Index>(indices.size()), src.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index r = indices[i];
    if (r < 0 || r >= src.rows()) {
      throw IndexError("row_gather: index " + std::to_string(r) + " outside " +
                       std::to_string(src.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = src.row(r);
  }
  const std::size_t im = m.id();
  std::vector<Index> idx(indices.begin(), indices.end());
  return m.tape()->push(OpKind::kRowGather, {im}, std::move(out),
                        [im, idx = std::move(idx)](Tape& t, std::size_t self) {
                          const Matrix& g = t.upstream(self);
                          const Matrix& src = t.value(im);
                          Matrix scattered = Matrix::Zero(src.rows(), src.cols());
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            scattered.row(idx[i]) += g.row(static_cast<Index>(i));
                          }
                          t.accumulate(im, scattered);
                        });
}

Var sparse_matmul(const SparseMatrix& s, Var d) {
  if (s.cols() != d.rows()) {
    throw DimensionError("sparse_mat_mul: " + shape_string(s) + " * " + shape_string(d.value()));
  }
  const std::size_t id = d.id();
  const SparseMatrix* sp = &s;
  Matrix out = s * d.value();
  return d.tape()->push(OpKind::kSparseMatMul, {id}, std::move(out),
                        [id, sp](Tape& t, std::size_t self) {
                          t.accumulate(id, Matrix(sp->transpose() * t.upstream(self)));
                        });
}

Var weighted_sparse_matmul(const SparseMatrix& pattern, Var values, Var d) {
  require_same_tape(values, d);
  if (!pattern.isCompressed()) throw ContractError("weighted_sparse_mat_mul: uncompressed pattern");
  if (values.rows() != pattern.nonZeros() || values.cols() != 1) {
    throw DimensionError("weighted_sparse_mat_mul: values " + shape_string(values.value()) +
                         " for " + std::to_string(pattern.nonZeros()) + " entries");
  }
  if (pattern.cols() != d.rows()) {
    throw DimensionError("weighted_sparse_mat_mul: " + shape_string(pattern) + " * " +
                         shape_string(d.value()));
  }
  const std::size_t iv = values.id(), id = d.id();
  const SparseMatrix* sp = &pattern;
  Matrix out = with_values(pattern, values.value().data()) * d.value();
  return d.tape()->push(
      OpKind::kWeightedSparseMatMul, {iv, id}, std::move(out), [iv, id, sp](Tape& t, std::size_t self) {
        const Matrix& g = t.upstream(self);
        const auto s = with_values(*sp, t.value(iv).data());
        if (t.requires_grad(id)) t.accumulate(id, Matrix(s.transpose() * g));
        if (t.requires_grad(iv)) {
          const Matrix& dv = t.value(id);
          Matrix gv(sp->nonZeros(), 1);
          for (Index r = 0; r < sp->outerSize(); ++r) {
            for (Index p = sp->outerIndexPtr()[r]; p < sp->outerIndexPtr()[r + 1]; ++p) {
              gv(p, 0) = g.row(r).dot(dv.row(sp->innerIndexPtr()[p]));
            }
          }
          t.accumulate(iv, gv);
        }
      });
}

Var l2_row_normalize(Var m, double eps) {
  if (!(eps > 0.0)) throw ContractError("l2_row_normalize: eps must be positive");
  const Matrix& x = m.value();
  Vector denom = x.rowwise().norm().cwiseMax(eps);
  Matrix out = denom.cwiseInverse().asDiagonal() * x;
  const std::size_t im = m.id();
  return m.tape()->push(OpKind::kL2RowNormalize, {im}, std::move(out),
                        [im, eps](Tape& t, std::size_t self) {
                          const Matrix& g = t.upstream(self);
                          const Matrix& x = t.value(im);
                          const Matrix& y = t.value(self);
                          Matrix gx(x.rows(), x.cols());
                          for (Index r = 0; r < x.rows(); ++r) {
                            const double n = x.row(r).norm();
                            if (n > eps) {
                              // (g - y (y.g)) / n
                              gx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / n;
                            } else {
                              gx.row(r) = g.row(r) / eps;
                            }
                          }
                          t.accumulate(im, gx);
                        });
}

Var concat_cols(Var left, Var right) {
  require_same_tape(left, right);
  if (left.rows() != right.rows()) {
    throw DimensionError("concat_cols: " + shape_string(left.value()) + " | " +
                         shape_string(right.value()));
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  out << left.value(), right.value();
  const std::size_t il = left.id(), ir = right.id();
  const Index split = left.cols();
  return left.tape()->push(OpKind::kConcatCols, {il, ir}, std::move(out),
                           [il, ir, split](Tape& t, std::size_t self) {
                             const Matrix& g = t.upstream(self);
                             if (t.requires_grad(il)) t.accumulate(il, g.leftCols(split));
                             if (t.requires_grad(ir)) t.accumulate(ir, g.rightCols(g.cols() - split));
                           });
}

Var concat_rows(Var top, Var bottom) {
  require_same_tape(top, bottom);
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: " + shape_string(top.value()) + " / " +
                         shape_string(bottom.value()));
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top.value(), bottom.value();
  const std::size_t it = top.id(), ib = bottom.id();
  const Index split = top.rows();
  return top.tape()->push(OpKind::kConcatRows, {it, ib}, std::move(out),
                          [it, ib, split](Tape& t, std::size_t self) {
                            const Matrix& g = t.upstream(self);
                            if (t.requires_grad(it)) t.accumulate(it, g.topRows(split));
                            if (t.requires_grad(ib)) t.accumulate(ib, g.bottomRows(g.rows() - split));
                          });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->push(OpKind::kTranspose, {ia}, a.value().transpose(),
                        [ia](Tape& t, std::size_t self) {
                          t.accumulate(ia, t.upstream(self).transpose());
                        });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape()->push(OpKind::kSum, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), t.upstream(self)(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ContractError("mean of an empty node");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_squares(Var a) {
  const std::size_t ia = a.id();
  Matrix out = Matrix::Constant(1, 1, a.value().squaredNorm());
  return a.tape()->push(OpKind::kSumSquares, {ia}, std::move(out), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.value(ia) * (2.0 * t.upstream(self)(0, 0)));
  });
}

Var row_dot(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "row_dot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(OpKind::kRowDot, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate(ia, Matrix(g.col(0).asDiagonal() * t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, Matrix(g.col(0).asDiagonal() * t.value(ia)));
  });
}

Var softmax(Var logits) {
  if (logits.cols() != 1 || logits.rows() == 0) {
    throw DimensionError("softmax expects a non-empty column, got " + shape_string(logits.value()));
  }
  const Matrix& z = logits.value();
  Matrix out = (z.array() - z.maxCoeff()).exp().matrix();
  out /= out.sum();
  const std::size_t il = logits.id();
  return logits.tape()->push(OpKind::kSoftmax, {il}, std::move(out), [il](Tape& t, std::size_t self) {
    const Matrix& p = t.value(self);
    const Matrix& g = t.upstream(self);
    const double inner = p.cwiseProduct(g).sum();
    t.accumulate(il, Matrix(p.array() * (g.array() - inner)));
  });
}

Var normalize_edge_values(const SparseMatrix& pattern, Var values) {
  if (values.rows() != pattern.nonZeros() || values.cols() != 1) {
    throw DimensionError("normalize_edge_values: values " + shape_string(values.value()) + " for " +
                         std::to_string(pattern.nonZeros()) + " entries");
  }
  if (pattern.rows() != pattern.cols()) throw DimensionError("normalize_edge_values: non-square pattern");
  const Matrix& s = values.value();
  std::vector<Index> rows = entry_rows(pattern);
  const auto* cols = pattern.innerIndexPtr();
  Vector deg = Vector::Zero(pattern.rows());
  for (Index e = 0; e < pattern.nonZeros(); ++e) deg(rows[e]) += std::abs(s(e, 0));
  Vector inv_sqrt = deg.unaryExpr([](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
  Matrix out(pattern.nonZeros(), 1);
  for (Index e = 0; e < pattern.nonZeros(); ++e) {
    out(e, 0) = s(e, 0) * inv_sqrt(rows[e]) * inv_sqrt(cols[e]);
  }
  const std::size_t iv = values.id();
  return values.tape()->push(
      OpKind::kNormalizeEdges, {iv}, std::move(out),
      [iv, rows = std::move(rows), cols, deg, inv_sqrt](Tape& t, std::size_t self) {
        const Matrix& g = t.upstream(self);
        const Matrix& s = t.value(iv);
        const Matrix& n = t.value(self);
        // a_i = -1/(2 d_i) * sum of g_e n_e over entries touching node i (as row or column)
        Vector a = Vector::Zero(deg.size());
        for (Index e = 0; e < s.rows(); ++e) {
          const double gn = g(e, 0) * n(e, 0);
          a(rows[e]) += gn;
          a(cols[e]) += gn;
        }
        for (Index i = 0; i < a.size(); ++i) a(i) = deg(i) > 0.0 ? -0.5 * a(i) / deg(i) : 0.0;
        Matrix gs(s.rows(), 1);
        for (Index e = 0; e < s.rows(); ++e) {
          const double sign = s(e, 0) > 0.0 ? 1.0 : (s(e, 0) < 0.0 ? -1.0 : 0.0);
          gs(e, 0) = g(e, 0) * inv_sqrt(rows[e]) * inv_sqrt(cols[e]) + sign * a(rows[e]);
        }
        t.accumulate(iv, gs);
      });
}

Var rbf_kernel(Var x, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw ContractError("rbf_kernel: sigma_sq must be positive");
  const Matrix& v = x.value();
  const Vector norms = v.rowwise().squaredNorm();
  Matrix dist = (-2.0 * (v * v.transpose())).colwise() + norms;
  dist.rowwise() += norms.transpose();
  dist = dist.cwiseMax(0.0);
  dist = (0.5 * (dist + dist.transpose())).eval();
  dist.diagonal().setZero();
  Matrix out = (dist.array() * (-0.5 / sigma_sq)).exp().matrix();
  const std::size_t ix = x.id();
  return x.tape()->push(OpKind::kRbfKernel, {ix}, std::move(out), [ix, sigma_sq](Tape& t, std::size_t self) {
    const Matrix& k = t.value(self);
    const Matrix& x = t.value(ix);
    // dL/dD_ij = G_ij K_ij (-1 / 2 sigma^2); dL/dx_i = 2 sum_j B_ij (x_i - x_j), B = A + A^T
    Matrix a = t.upstream(self).cwiseProduct(k) * (-0.5 / sigma_sq);
    Matrix b = a + a.transpose();
    Vector rowsum = b.rowwise().sum();
    t.accumulate(ix, Matrix(2.0 * (rowsum.asDiagonal() * x - b * x)));
  });
}

namespace {

Matrix double_center(const Matrix& k) {
  const Vector row_mean = k.rowwise().mean();
  const Eigen::RowVectorXd col_mean = k.colwise().mean();
  Matrix c = k.colwise() - row_mean;
  c.rowwise() -= col_mean;
  c.array() += k.mean();
  return c;
}

}  // namespace

Var centered_trace(Var kx, Var ky) {
  require_same_tape(kx, ky);
  const Index n = kx.rows();
  if (kx.cols() != n || ky.rows() != n || ky.cols() != n) {
    throw DimensionError("centered_trace: " + shape_string(kx.value()) + " and " +
                         shape_string(ky.value()));
  }
  if (n < 2) throw ContractError("centered_trace: need at least 2 samples");
  const double norm = 1.0 / static_cast<double>((n - 1) * (n - 1));
  // tr(Kx H Ky H) = sum_ij (H Kx H)_ij (H Ky H)_ji; centering both sides keeps a constant kernel exactly 0.
  const Matrix cx = double_center(kx.value());
  const Matrix cy = double_center(ky.value());
  Matrix out = Matrix::Constant(1, 1, cx.cwiseProduct(cy.transpose()).sum() * norm);
  const std::size_t ix = kx.id(), iy = ky.id();
  return kx.tape()->push(OpKind::kCenteredTrace, {ix, iy}, std::move(out),
                         [ix, iy, norm](Tape& t, std::size_t self) {
                           const double g = t.upstream(self)(0, 0) * norm;
                           if (t.requires_grad(ix)) {
                             t.accumulate(ix, Matrix(double_center(t.value(iy)).transpose() * g));
                           }
                           if (t.requires_grad(iy)) {
                             t.accumulate(iy, Matrix(double_center(t.value(ix)).transpose() * g));
                           }
                         });
}

Var diag_cross_entropy(Var logits) {
  const Matrix& l = logits.value();
  const Index b = l.rows();
  if (l.cols() != b || b == 0) {
    throw DimensionError("diag_cross_entropy expects square logits, got " + shape_string(l));
  }
  Matrix prob(b, b);
  double total = 0.0;
  for (Index r = 0; r < b; ++r) {
    const double m = l.row(r).maxCoeff();
    prob.row(r) = (l.row(r).array() - m).exp();
    const double z = prob.row(r).sum();
    prob.row(r) /= z;
    total += (m + std::log(z)) - l(r, r);
  }
  Matrix out = Matrix::Constant(1, 1, total / static_cast<double>(b));
  const std::size_t il = logits.id();
  return logits.tape()->push(OpKind::kDiagCrossEntropy, {il}, std::move(out),
                             [il, prob = std::move(prob)](Tape& t, std::size_t self) {
                               const double g = t.upstream(self)(0, 0) / static_cast<double>(prob.rows());
                               Matrix d = prob;
                               d.diagonal().array() -= 1.0;
                               t.accumulate(il, Matrix(d * g));
                             });
}

}  // namespace ibmrec
