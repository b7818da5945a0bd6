#include "ibmrec/hsic.hpp"

namespace ibmrec {

Var rbf_kernel_matrix(Var x, const HsicConfig& cfg) {
  if (cfg.normalize_inputs) x = l2_row_normalize(x, 1e-12);
  return rbf_kernel(x, cfg.sigma_sq);
}

Var hsic_estimate(Var x, Var y, const HsicConfig& cfg) {
  if (x.rows() < 2) throw ContractError("hsic_estimate: batch needs at least 2 rows, got " + std::to_string(x.rows()));
  if (x.rows() != y.rows()) {
    throw DimensionError("hsic_estimate: batch sizes differ (" + std::to_string(x.rows()) + " vs " +
                         std::to_string(y.rows()) + ")");
  }
  return centered_trace(rbf_kernel_matrix(x, cfg), rbf_kernel_matrix(y, cfg));
}

}  // namespace ibmrec
