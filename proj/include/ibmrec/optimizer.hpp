#pragma once

#include <string>
#include <vector>

#include "ibmrec/matrix.hpp"

namespace ibmrec {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  // Applies one update to every parameter whose entry in `active` is true (all,
  // when `active` is empty). Moments are allocated lazily on first use.
  // Throws NumericalError naming the parameter when a gradient is non-finite.
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr,
            const std::vector<std::string>& names = {}, const std::vector<bool>& active = {});

  long steps() const { return step_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  long step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace ibmrec
