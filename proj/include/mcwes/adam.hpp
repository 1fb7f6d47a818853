#pragma once

#include <cstdint>
#include <vector>

#include "mcwes/tensor.hpp"

namespace mcwes {

/// Adam optimizer state over an ordered parameter list. Moment buffers are
/// allocated on the first step and keyed by position, so the same parameter
/// order must be used for every step.
struct AdamState {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update in place. Parameters whose grad buffer is
/// empty are treated as having zero gradient. Throws std::runtime_error on a
/// non-finite gradient entry (callers report which parameter before stepping).
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace mcwes
