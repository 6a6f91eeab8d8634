#include "fadvlp/params.hpp"
#include "fadvlp/random.hpp"

#include <cmath>
#include <stdexcept>

namespace fadvlp {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, double scale) {
  if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n, T(0));
  double stddev = scale;
  if (init == Init::kXavier || init == Init::kHe) {
    if (shape.size() != 2) throw DimensionError("fan-based init needs a matrix: " + name);
    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = static_cast<double>(shape[1]);
    stddev = init == Init::kXavier ? std::sqrt(2.0 / (fan_in + fan_out)) : std::sqrt(2.0 / fan_in);
    stddev *= scale;
  }
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      for (T& v : values) v = T(1);
      break;
    case Init::kNormal:
    case Init::kXavier:
    case Init::kHe: {
      // Sampled in double so float and double models with one seed agree up
      // to rounding.
      for (T& v : values) v = static_cast<T>(stddev * standard_normal(rng_));
      break;
    }
  }
  Tensor<T> t(std::move(shape), std::move(values), true);
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("unknown parameter: " + name);
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

template <typename T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace fadvlp
