#include "ibmrec/optimizer.hpp"

#include <cmath>

namespace ibmrec {

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr,
                const std::vector<std::string>& names, const std::vector<bool>& active) {
  if (params.size() != grads.size()) throw ContractError("adam: parameter and gradient counts differ");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!active.empty() && !active[k]) continue;
    if (!grads[k].allFinite()) {
      const std::string name = k < names.size() ? names[k] : "#" + std::to_string(k);
      throw NumericalError("non-finite gradient for parameter " + name);
    }
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!active.empty() && !active[k]) continue;
    Matrix& p = *params[k];
    const Matrix& g = grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw DimensionError("adam: gradient " + shape_string(g) + " for parameter " + shape_string(p));
    }
    if (m_[k].size() == 0) {
      m_[k] = Matrix::Zero(p.rows(), p.cols());
      v_[k] = Matrix::Zero(p.rows(), p.cols());
    }
    m_[k] = options_.beta1 * m_[k] + (1.0 - options_.beta1) * g;
    v_[k] = options_.beta2 * v_[k] + (1.0 - options_.beta2) * g.cwiseAbs2();
    p.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + options_.epsilon);
  }
}

}  // namespace ibmrec
