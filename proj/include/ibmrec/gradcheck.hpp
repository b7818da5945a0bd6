#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ibmrec/autodiff.hpp"

namespace ibmrec {

// Builds a scalar loss on `tape` from parameter leaves. Must be deterministic:
// any sampling noise has to be fixed outside the builder.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Index worst_row = 0;
  Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares the tape gradient against central differences on every coordinate;
// error is |analytic - numeric| / (|numeric| + 1e-8).
GradientCheck finite_diff_check(const LossBuilder& loss, const std::vector<Matrix>& params,
                                double h = 1e-5);

}  // namespace ibmrec
