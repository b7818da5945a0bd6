#pragma once

// Biased HSIC with RBF kernels: (n-1)^-2 tr(Kx H Ky H).
//
// The templated functions work on any Eigen dense expression and are plain
// value computations; the Var overloads record adjoints on a tape.

#include <cmath>

#include "ibmrec/autodiff.hpp"
#include "ibmrec/matrix.hpp"

namespace ibmrec {

struct HsicConfig {
  double sigma_sq = 0.15;
  bool normalize_inputs = true;  // row-L2-normalize before the kernel
};

template <typename Derived>
DenseMatrix<typename Derived::Scalar> row_normalized(const Eigen::MatrixBase<Derived>& x, double eps = 1e-12) {
  using Scalar = typename Derived::Scalar;
  DenseMatrix<Scalar> out = x;
  for (Index r = 0; r < out.rows(); ++r) out.row(r) /= std::max<Scalar>(out.row(r).norm(), Scalar(eps));
  return out;
}

template <typename Derived>
DenseMatrix<typename Derived::Scalar> rbf_kernel_matrix(const Eigen::MatrixBase<Derived>& x, const HsicConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  if (!(cfg.sigma_sq > 0.0)) throw ContractError("rbf_kernel_matrix: sigma_sq must be positive");
  const DenseMatrix<Scalar> v = cfg.normalize_inputs ? row_normalized(x) : DenseMatrix<Scalar>(x);
  const DenseVector<Scalar> norms = v.rowwise().squaredNorm();
  DenseMatrix<Scalar> dist = (Scalar(-2) * (v * v.transpose())).colwise() + norms;
  dist.rowwise() += norms.transpose();
  dist = dist.cwiseMax(Scalar(0));
  dist = (Scalar(0.5) * (dist + dist.transpose())).eval();
  dist.diagonal().setZero();
  return (dist.array() * Scalar(-0.5 / cfg.sigma_sq)).exp().matrix();
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar hsic_value(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                     const HsicConfig& cfg) {
  using Scalar = typename DerivedX::Scalar;
  const Index n = x.rows();
  if (n < 2) throw ContractError("hsic: batch needs at least 2 rows");
  if (y.rows() != n) throw DimensionError("hsic: inputs disagree on batch size");
  const DenseMatrix<Scalar> kx = rbf_kernel_matrix(x, cfg);
  const DenseMatrix<Scalar> ky = rbf_kernel_matrix(y, cfg);
  auto center = [](const DenseMatrix<Scalar>& k) {
    DenseMatrix<Scalar> c = k.colwise() - k.rowwise().mean();
    c.rowwise() -= k.colwise().mean();
    c.array() += k.mean();
    return c;
  };
  return center(kx).cwiseProduct(center(ky).transpose()).sum() / Scalar((n - 1) * (n - 1));
}

// Tape versions.
Var rbf_kernel_matrix(Var x, const HsicConfig& cfg);
Var hsic_estimate(Var x, Var y, const HsicConfig& cfg);

}  // namespace ibmrec
