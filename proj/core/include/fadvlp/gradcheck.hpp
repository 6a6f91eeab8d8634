#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fadvlp/tensor.hpp"

namespace fadvlp {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate
// of x. f must be pure; x is restored before returning.
template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                                     T h);

// Same, but perturbs a tensor in place and evaluates a closure that reads it
// (e.g. a model parameter).
template <typename T>
std::vector<T> finite_difference_in_place(const std::function<T()>& f, Tensor<T>& x, T h);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

}  // namespace fadvlp
