#pragma once

#include <cstdint>
#include <vector>

#include "fadvlp/tensor.hpp"

namespace fadvlp {

struct AdamHyperParams {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moments per parameter, in the parameter order used by
// adam_step.
template <typename T>
struct AdamState {
  AdamHyperParams hyper;
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// One bias-corrected Adam update over all parameters. Parameters without a
// gradient buffer are treated as having zero gradient. Throws NumericError if
// any gradient is NaN or infinite (parameters are left untouched).
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

}  // namespace fadvlp
