#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fadvlp/tensor.hpp"

namespace fadvlp {

enum class Init {
  kZeros,
  kOnes,
  kNormal,   // N(0, scale^2)
  kXavier,   // N(0, 2 / (fan_in + fan_out)) on a [fan_in, fan_out] matrix
  kHe,       // N(0, 2 / fan_in)
};

// Named, insertion-ordered trainable parameters. Names are the checkpoint
// keys.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> create(const std::string& name, Shape shape, Init init, double scale = 1.0);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<Tensor<T>> tensors() const;
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

}  // namespace fadvlp
