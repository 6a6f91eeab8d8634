#include "fadvlp/optim.hpp"

#include <cmath>
#include <string>

namespace fadvlp {

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (const Tensor<T>& p : params) {
      state.first_moment.emplace_back(p.numel(), T(0));
      state.second_moment.emplace_back(p.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: moment size mismatch for parameter " + std::to_string(i));
    }
    for (T g : params[i].grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const T lr = static_cast<T>(state.hyper.learning_rate);
  const T eps = static_cast<T>(state.hyper.epsilon);
  const T tb1 = static_cast<T>(b1);
  const T tb2 = static_cast<T>(b2);
  const T inv_c1 = static_cast<T>(1.0 / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const T g = grad.empty() ? T(0) : grad[j];
      m[j] = tb1 * m[j] + (T(1) - tb1) * g;
      v[j] = tb2 * v[j] + (T(1) - tb2) * g * g;
      const T m_hat = m[j] * inv_c1;
      const T v_hat = v[j] * inv_c2;
      data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace fadvlp
