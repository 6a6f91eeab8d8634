#pragma once

// Dense row-major tensors and the reverse-mode gradient tape.
//
// A Tensor is a cheap handle onto a shared TensorNode. Operations in ops.hpp
// record themselves on the thread's active Tape (see Tape::Scope) whenever at
// least one input requires a gradient; with no active tape they run as plain
// forward computations.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fadvlp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  std::uint64_t grad_epoch = 0;  // backward pass that last zeroed grad
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor from_node(std::shared_ptr<TensorNode<T>> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct write access; only valid for leaves that are not on a live tape.
  std::span<T> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  T item() const;
  T operator[](std::size_t flat_index) const { return node_->data[flat_index]; }

  // Copy of the values with no gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of differentiable operations. Backward replays the records
// in exact reverse order, so gradient accumulation order is fixed by the
// forward order.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward);

  // Overwrites the gradients of every node on the tape: zero-fills them,
  // seeds d(loss)/d(loss) = 1 and propagates. Calling it twice yields
  // bit-identical gradients.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  static Tape* active();

  // Makes a tape the active one for the current thread for the lifetime of
  // the scope. Scopes nest.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  static thread_local Tape* active_;

  template <typename U>
  friend class NoGradScope;
};

// Suspends recording on the current thread (e.g. during generation inside a
// training step).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

}  // namespace fadvlp
