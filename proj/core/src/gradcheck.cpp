#include "fadvlp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fadvlp {

template <typename T>
std::vector<T> finite_difference_in_place(const std::function<T()>& f, Tensor<T>& x, T h) {
  auto data = x.mutable_data();
  std::vector<T> grad(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const T saved = data[i];
    data[i] = saved + h;
    const T plus = f();
    data[i] = saved - h;
    const T minus = f();
    data[i] = saved;
    grad[i] = (plus - minus) / (T(2) * h);
  }
  return grad;
}

template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                                     T h) {
  Tensor<T> probe = x.detach();
  auto grad = finite_difference_in_place<T>([&]() { return f(probe); }, probe, h);
  return Tensor<T>(x.shape(), std::move(grad));
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double worst = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return a.size() == b.size() ? worst : INFINITY;
}

template Tensor<float> finite_difference_gradient(const std::function<float(const Tensor<float>&)>&,
                                                  Tensor<float>, float);
template Tensor<double> finite_difference_gradient(
    const std::function<double(const Tensor<double>&)>&, Tensor<double>, double);
template std::vector<float> finite_difference_in_place(const std::function<float()>&, Tensor<float>&, float);
template std::vector<double> finite_difference_in_place(const std::function<double()>&, Tensor<double>&, double);

}  // namespace fadvlp
