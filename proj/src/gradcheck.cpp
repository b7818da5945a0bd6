#include "ibmrec/gradcheck.hpp"

#include <cmath>

namespace ibmrec {

namespace {

double evaluate(const LossBuilder& loss, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.constant(p));
  double value = 0.0;
  try {
    value = loss(tape, leaves).scalar();
  } catch (const DomainError& e) {
    throw NumericalError(std::string("finite_diff_check: evaluation failed: ") + e.what());
  }
  if (!std::isfinite(value)) throw NumericalError("finite_diff_check: non-finite loss");
  return value;
}

}  // namespace

GradientCheck finite_diff_check(const LossBuilder& loss, const std::vector<Matrix>& params, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& p : params) leaves.push_back(tape.parameter(p));
    Var out = loss(tape, leaves);
    if (!std::isfinite(out.scalar())) throw NumericalError("finite_diff_check: non-finite loss");
    tape.backward(out);
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }

  GradientCheck result;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Index r = 0; r < probe[k].rows(); ++r) {
      for (Index c = 0; c < probe[k].cols(); ++c) {
        const double x = probe[k](r, c);
        probe[k](r, c) = x + h;
        const double up = evaluate(loss, probe);
        probe[k](r, c) = x - h;
        const double down = evaluate(loss, probe);
        probe[k](r, c) = x;

        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[k](r, c);
        const double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-8);
        ++result.coordinates;
        if (err > result.max_rel_error || result.coordinates == 1) {
          result.max_rel_error = err;
          result.worst_param = k;
          result.worst_row = r;
          result.worst_col = c;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace ibmrec
