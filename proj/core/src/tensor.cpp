#include "fadvlp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace fadvlp {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<TensorNode<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

template <typename T>
Tape<T>::~Tape() {
  if (active_ == this) active_ = nullptr;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return active_;
}

template <typename T>
void Tape<T>::record(std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward) {
  records_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss");
  }
  const auto& loss_node = loss.node();
  static std::atomic<std::uint64_t> epochs{0};
  const std::uint64_t epoch = ++epochs;
  auto reset = [epoch](TensorNode<T>& n) {
    if (n.grad_epoch == epoch) return;
    n.grad_epoch = epoch;
    n.grad.assign(n.data.size(), T(0));
  };
  bool on_tape = false;
  for (const Record& r : records_) {
    for (const NodePtr& in : r.inputs) {
      if (in->requires_grad) reset(*in);
    }
    reset(*r.output);
    on_tape = on_tape || r.output == loss_node;
  }
  if (!on_tape) {
    if (!loss_node->requires_grad) throw std::logic_error("backward() on a loss that is not on the tape");
    loss_node->grad.assign(1, T(1));
    return;
  }
  loss_node->grad[0] = T(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
}

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(Tape<T>::active_) {
  Tape<T>::active_ = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  Tape<T>::active_ = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(Tape<T>::active_) {
  Tape<T>::active_ = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  Tape<T>::active_ = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace fadvlp
