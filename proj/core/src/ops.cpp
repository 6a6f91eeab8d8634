#include "fadvlp/ops.hpp"
#include "fadvlp/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <type_traits>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace fadvlp {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
void check_finite(const std::vector<T>& values, const char* op) {
  // Exponent bits all set means NaN or infinity. Integer OR-reduction
  // vectorizes, unlike a floating-point accumulation.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits kExp = sizeof(T) == 4 ? Bits(0x7f800000u) : Bits(0x7ff0000000000000ull);
  Bits bad = 0;
  for (T v : values) {
    const Bits b = std::bit_cast<Bits>(v);
    bad |= Bits((b & kExp) == kExp);
  }
  if (bad) throw NumericError(std::string("non-finite value produced by ") + op);
}

// Wraps a freshly computed result and, when recording is active and any input
// needs a gradient, registers the backward rule. The rule receives the output
// node; inputs are captured by the caller as raw node pointers (the tape
// record owns them).
template <typename T, typename Fn>
Tensor<T> emit(const char* op, Shape shape, std::vector<T> data,
               std::initializer_list<const Tensor<T>*> inputs, Fn&& backward) {
  check_finite(data, op);
  Tensor<T> out(std::move(shape), std::move(data));
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return out;
  bool any = false;
  for (const Tensor<T>* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  std::vector<NodePtr<T>> nodes;
  nodes.reserve(inputs.size());
  for (const Tensor<T>* in : inputs) nodes.push_back(in->node());
  TensorNode<T>* o = out.node().get();
  tape->record(std::move(nodes), out.node(),
               [o, fn = std::forward<Fn>(backward)]() { fn(*o); });
  return out;
}

template <typename T>
TensorNode<T>* raw(const Tensor<T>& t) {
  return t.node().get();
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C += op(A) * op(B) on row-major maps.
template <typename Lhs, typename Rhs, typename Out>
void gemm_acc(bool ta, bool tb, const Lhs& a, const Rhs& b, Out& c) {
  if (!ta && !tb) {
    c.noalias() += a * b;
  } else if (ta && !tb) {
    c.noalias() += a.transpose() * b;
  } else if (!ta && tb) {
    c.noalias() += a * b.transpose();
  } else {
    c.noalias() += a.transpose() * b.transpose();
  }
}

template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D df) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  TensorNode<T>* xn = raw(x);
  return emit<T>(op, x.shape(), std::move(out), {&x}, [xn, df](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * df(xn->data[i], o.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  TensorNode<T>* an = raw(a);
  TensorNode<T>* bn = raw(b);
  return emit<T>("add", a.shape(), std::move(out), {&a, &b}, [an, bn](const TensorNode<T>& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  TensorNode<T>* an = raw(a);
  TensorNode<T>* bn = raw(b);
  return emit<T>("sub", a.shape(), std::move(out), {&a, &b}, [an, bn](const TensorNode<T>& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  TensorNode<T>* an = raw(a);
  TensorNode<T>* bn = raw(b);
  return emit<T>("mul", a.shape(), std::move(out), {&a, &b}, [an, bn](const TensorNode<T>& o) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->data[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->data[i];
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bd[j];
  TensorNode<T>* xn = raw(x);
  TensorNode<T>* bn = raw(bias);
  return emit<T>("add_bias", x.shape(), std::move(out), {&x, &bias},
                 [xn, bn, n, rows](const TensorNode<T>& o) {
                   if (xn->requires_grad)
                     for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
                   if (bn->requires_grad)
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < n; ++j) bn->grad[j] += o.grad[r * n + j];
                 });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  TensorNode<T>* xn = raw(x);
  return emit<T>("scale", x.shape(), std::move(out), {&x}, [xn, factor](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + value;
  TensorNode<T>* xn = raw(x);
  return emit<T>("add_scalar", x.shape(), std::move(out), {&x}, [xn](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must have one element");
  const T factor = s.item();
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  TensorNode<T>* xn = raw(x);
  TensorNode<T>* sn = raw(s);
  return emit<T>("scale_by", x.shape(), std::move(out), {&x, &s}, [xn, sn](const TensorNode<T>& o) {
    const T factor = sn->data[0];
    if (xn->requires_grad)
      for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * factor;
    if (sn->requires_grad) {
      T acc = T(0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * xn->data[i];
      sn->grad[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  if (b.rank() != 2 || a.rank() < 2 || ((transpose_a || transpose_b) && a.rank() != 2)) {
    throw DimensionError("matmul: unsupported operand ranks " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t a_cols = a.shape().back();
  const std::size_t a_rows = a.numel() / a_cols;
  const std::size_t b_rows = b.dim(0);
  const std::size_t b_cols = b.dim(1);
  const std::size_t m = transpose_a ? a_cols : a_rows;
  const std::size_t k = transpose_a ? a_rows : a_cols;
  const std::size_t kb = transpose_b ? b_cols : b_rows;
  const std::size_t n = transpose_b ? b_rows : b_cols;
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Shape out_shape;
  if (a.rank() == 2) {
    out_shape = {m, n};
  } else {
    out_shape.assign(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
  }
  std::vector<T> out(m * n, T(0));
  {
    ConstMap<T> am(a.data().data(), a_rows, a_cols);
    ConstMap<T> bm(b.data().data(), b_rows, b_cols);
    MutMap<T> cm(out.data(), m, n);
    gemm_acc(transpose_a, transpose_b, am, bm, cm);
  }
  TensorNode<T>* an = raw(a);
  TensorNode<T>* bn = raw(b);
  return emit<T>("matmul", std::move(out_shape), std::move(out), {&a, &b},
                 [=](const TensorNode<T>& o) {
                   ConstMap<T> dc(o.grad.data(), m, n);
                   ConstMap<T> am(an->data.data(), a_rows, a_cols);
                   ConstMap<T> bm(bn->data.data(), b_rows, b_cols);
                   if (an->requires_grad) {
                     MutMap<T> da(an->grad.data(), a_rows, a_cols);
                     if (!transpose_a) {
                       gemm_acc(false, !transpose_b, dc, bm, da);
                     } else {
                       gemm_acc(transpose_b, true, bm, dc, da);
                     }
                   }
                   if (bn->requires_grad) {
                     MutMap<T> db(bn->grad.data(), b_rows, b_cols);
                     if (!transpose_b) {
                       gemm_acc(!transpose_a, false, am, dc, db);
                     } else {
                       gemm_acc(true, transpose_a, dc, am, db);
                     }
                   }
                 });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: expected matching rank-3 operands, got " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t g = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t b_rows = b.dim(1);
  const std::size_t b_cols = b.dim(2);
  const std::size_t kb = transpose_b ? b_cols : b_rows;
  const std::size_t n = transpose_b ? b_rows : b_cols;
  if (k != kb) {
    throw DimensionError("bmm: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(g * m * n, T(0));
  for (std::size_t i = 0; i < g; ++i) {
    ConstMap<T> am(a.data().data() + i * m * k, m, k);
    ConstMap<T> bm(b.data().data() + i * b_rows * b_cols, b_rows, b_cols);
    MutMap<T> cm(out.data() + i * m * n, m, n);
    gemm_acc(false, transpose_b, am, bm, cm);
  }
  TensorNode<T>* an = raw(a);
  TensorNode<T>* bn = raw(b);
  return emit<T>("bmm", Shape{g, m, n}, std::move(out), {&a, &b}, [=](const TensorNode<T>& o) {
    for (std::size_t i = 0; i < g; ++i) {
      ConstMap<T> dc(o.grad.data() + i * m * n, m, n);
      ConstMap<T> am(an->data.data() + i * m * k, m, k);
      ConstMap<T> bm(bn->data.data() + i * b_rows * b_cols, b_rows, b_cols);
      if (an->requires_grad) {
        MutMap<T> da(an->grad.data() + i * m * k, m, k);
        gemm_acc(false, !transpose_b, dc, bm, da);
      }
      if (bn->requires_grad) {
        MutMap<T> db(bn->grad.data() + i * b_rows * b_cols, b_rows, b_cols);
        if (!transpose_b) {
          gemm_acc(true, false, am, dc, db);
        } else {
          gemm_acc(true, false, dc, am, db);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  TensorNode<T>* xn = raw(x);
  return emit<T>("reshape", std::move(shape), std::move(out), {&x}, [xn](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute: wrong number of axes");
  std::vector<bool> seen(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axis permutation");
    seen[ax] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  const std::size_t n = x.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*index)[i] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      src += src_strides[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_strides[d] * counter[d];
      counter[d] = 0;
    }
  }
  std::vector<T> out(n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xd[(*index)[i]];
  TensorNode<T>* xn = raw(x);
  return emit<T>("permute", std::move(out_shape), std::move(out), {&x},
                 [xn, index](const TensorNode<T>& o) {
                   if (!xn->requires_grad) return;
                   for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[(*index)[i]] += o.grad[i];
                 });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_at(first, axis, "concat");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const Tensor<T>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                             " differ off the concat axis");
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const std::size_t outer = base.outer;
  const std::size_t inner = base.inner;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pd = parts[p].data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * chunk, chunk, out.begin() + o * total * inner + offset * inner);
    }
    offset += lens[p];
  }

  Tape<T>* tape = Tape<T>::active();
  check_finite(out, "concat");
  Tensor<T> result(std::move(out_shape), std::move(out));
  bool any = false;
  for (const Tensor<T>& p : parts) any = any || p.requires_grad();
  if (tape == nullptr || !any) return result;
  result.set_requires_grad(true);
  std::vector<NodePtr<T>> nodes;
  std::vector<TensorNode<T>*> raws;
  for (const Tensor<T>& p : parts) {
    nodes.push_back(p.node());
    raws.push_back(p.node().get());
  }
  TensorNode<T>* o = result.node().get();
  tape->record(std::move(nodes), result.node(), [o, raws, lens, outer, inner, total]() {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < raws.size(); ++p) {
      const std::size_t chunk = lens[p] * inner;
      if (raws[p]->requires_grad) {
        for (std::size_t q = 0; q < outer; ++q) {
          const T* src = o->grad.data() + q * total * inner + offset * inner;
          T* dst = raws[p]->grad.data() + q * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += lens[p];
    }
  });
  return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(x.shape(), axis, "slice");
  if (begin >= end || end > s.len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<T> out(s.outer * chunk);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + o * s.len * s.inner + begin * s.inner, chunk, out.begin() + o * chunk);
  }
  TensorNode<T>* xn = raw(x);
  return emit<T>("slice", std::move(out_shape), std::move(out), {&x},
                 [xn, s, begin, chunk](const TensorNode<T>& o) {
                   if (!xn->requires_grad) return;
                   for (std::size_t q = 0; q < s.outer; ++q) {
                     T* dst = xn->grad.data() + q * s.len * s.inner + begin * s.inner;
                     const T* src = o.grad.data() + q * chunk;
                     for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                   }
                 });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<T> out(ids.size() * width);
  const auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of range " +
                           std::to_string(rows));
    }
    std::copy_n(td.begin() + ids[i] * width, width, out.begin() + i * width);
  }
  TensorNode<T>* tn = raw(table);
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return emit<T>("gather_rows", Shape{ids.size(), width}, std::move(out), {&table},
                 [tn, idv = std::move(idv), width](const TensorNode<T>& o) {
                   if (!tn->requires_grad) return;
                   for (std::size_t i = 0; i < idv.size(); ++i) {
                     T* dst = tn->grad.data() + idv[i] * width;
                     const T* src = o.grad.data() + i * width;
                     for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                   }
                 });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  TensorNode<T>* xn = raw(x);
  return emit<T>("sum", Shape{}, std::vector<T>{acc}, {&x}, [xn](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (T& g : xn->grad) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  TensorNode<T>* xn = raw(x);
  return emit<T>("mean", Shape{}, std::vector<T>{acc * inv}, {&x}, [xn, inv](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (T& g : xn->grad) g += o.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "mean_axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto xd = x.data();
  const T inv = T(1) / static_cast<T>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.len + l) * s.inner + i];
  for (T& v : out) v *= inv;
  TensorNode<T>* xn = raw(x);
  return emit<T>("mean_axis", std::move(out_shape), std::move(out), {&x},
                 [xn, s, inv](const TensorNode<T>& o) {
                   if (!xn->requires_grad) return;
                   for (std::size_t q = 0; q < s.outer; ++q)
                     for (std::size_t l = 0; l < s.len; ++l)
                       for (std::size_t i = 0; i < s.inner; ++i)
                         xn->grad[(q * s.len + l) * s.inner + i] += o.grad[q * s.inner + i] * inv;
                 });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T mx = xd[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, xd[base + l * s.inner]);
      T total = T(0);
      for (std::size_t l = 0; l < s.len; ++l) {
        const T e = std::exp(xd[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] *= inv;
    }
  }
  TensorNode<T>* xn = raw(x);
  return emit<T>("softmax", x.shape(), std::move(out), {&x}, [xn, s](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t q = 0; q < s.outer; ++q) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = q * s.len * s.inner + i;
        T dot = T(0);
        for (std::size_t l = 0; l < s.len; ++l) dot += o.grad[base + l * s.inner] * o.data[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t at = base + l * s.inner;
          xn->grad[at] += o.data[at] * (o.grad[at] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "log_softmax");
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T mx = xd[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, xd[base + l * s.inner]);
      T total = T(0);
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(xd[base + l * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = xd[base + l * s.inner] - lse;
    }
  }
  TensorNode<T>* xn = raw(x);
  return emit<T>("log_softmax", x.shape(), std::move(out), {&x}, [xn, s](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t q = 0; q < s.outer; ++q) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = q * s.len * s.inner + i;
        T total = T(0);
        for (std::size_t l = 0; l < s.len; ++l) total += o.grad[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t at = base + l * s.inner;
          xn->grad[at] += o.grad[at] - std::exp(o.data[at]) * total;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != n || bias.dim(0) != n) {
    throw DimensionError("layer_norm: gain/bias do not match last dimension of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gd[j] + bd[j];
    }
  }
  TensorNode<T>* xn = raw(x);
  TensorNode<T>* gn = raw(gain);
  TensorNode<T>* bn = raw(bias);
  return emit<T>("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias},
                 [xn, gn, bn, xhat, inv_std, n, rows](const TensorNode<T>& o) {
                   const T inv_n = T(1) / static_cast<T>(n);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T* dy = o.grad.data() + r * n;
                     const T* h = xhat->data() + r * n;
                     if (gn->requires_grad)
                       for (std::size_t j = 0; j < n; ++j) gn->grad[j] += dy[j] * h[j];
                     if (bn->requires_grad)
                       for (std::size_t j = 0; j < n; ++j) bn->grad[j] += dy[j];
                     if (xn->requires_grad) {
                       T sum_dh = T(0);
                       T sum_dh_h = T(0);
                       for (std::size_t j = 0; j < n; ++j) {
                         const T dh = dy[j] * gn->data[j];
                         sum_dh += dh;
                         sum_dh_h += dh * h[j];
                       }
                       const T is = (*inv_std)[r];
                       for (std::size_t j = 0; j < n; ++j) {
                         const T dh = dy[j] * gn->data[j];
                         xn->grad[r * n + j] += is * (dh - inv_n * sum_dh - h[j] * inv_n * sum_dh_h);
                       }
                     }
                   }
                 });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis, T eps) {
  const AxisSplit s = split_at(x.shape(), axis, "l2_normalize");
  auto denom = std::make_shared<std::vector<T>>(s.outer * s.inner);
  auto clipped = std::make_shared<std::vector<bool>>(s.outer * s.inner);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T sq = T(0);
      for (std::size_t l = 0; l < s.len; ++l) sq += xd[base + l * s.inner] * xd[base + l * s.inner];
      const T norm = std::sqrt(sq);
      const bool clip = norm < eps;
      const T d = clip ? eps : norm;
      (*denom)[o * s.inner + i] = d;
      (*clipped)[o * s.inner + i] = clip;
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = xd[base + l * s.inner] / d;
    }
  }
  TensorNode<T>* xn = raw(x);
  return emit<T>("l2_normalize", x.shape(), std::move(out), {&x},
                 [xn, s, denom, clipped](const TensorNode<T>& o) {
                   if (!xn->requires_grad) return;
                   for (std::size_t q = 0; q < s.outer; ++q) {
                     for (std::size_t i = 0; i < s.inner; ++i) {
                       const std::size_t base = q * s.len * s.inner + i;
                       const T d = (*denom)[q * s.inner + i];
                       if ((*clipped)[q * s.inner + i]) {
                         for (std::size_t l = 0; l < s.len; ++l)
                           xn->grad[base + l * s.inner] += o.grad[base + l * s.inner] / d;
                         continue;
                       }
                       T dot = T(0);
                       for (std::size_t l = 0; l < s.len; ++l)
                         dot += o.grad[base + l * s.inner] * o.data[base + l * s.inner];
                       for (std::size_t l = 0; l < s.len; ++l) {
                         const std::size_t at = base + l * s.inner;
                         xn->grad[at] += (o.grad[at] - o.data[at] * dot) / d;
                       }
                     }
                   }
                 });
}

template <typename T>
Tensor<T> cross_entropy_with_logits(const Tensor<T>& logits, std::span<const int> targets,
                                    int ignore_id) {
  if (logits.rank() < 2) throw DimensionError("cross_entropy: logits must be at least rank 2");
  const std::size_t v = logits.shape().back();
  const std::size_t rows = logits.numel() / v;
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  std::size_t count = 0;
  for (int t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(t) + " outside vocabulary");
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every target is ignored");
  const auto ld = logits.data();
  T total = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_id) continue;
    const T* row = ld.data() + r * v;
    T mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    T acc = T(0);
    for (std::size_t j = 0; j < v; ++j) acc += std::exp(row[j] - mx);
    total += mx + std::log(acc) - row[targets[r]];
  }
  const T inv = T(1) / static_cast<T>(count);
  TensorNode<T>* ln = raw(logits);
  std::vector<int> tv(targets.begin(), targets.end());
  return emit<T>("cross_entropy", Shape{}, std::vector<T>{total * inv}, {&logits},
                 [ln, tv = std::move(tv), v, rows, inv, ignore_id](const TensorNode<T>& o) {
                   if (!ln->requires_grad) return;
                   const T g = o.grad[0] * inv;
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (tv[r] == ignore_id) continue;
                     const T* row = ln->data.data() + r * v;
                     T* dst = ln->grad.data() + r * v;
                     T mx = row[0];
                     for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                     T acc = T(0);
                     for (std::size_t j = 0; j < v; ++j) acc += std::exp(row[j] - mx);
                     const T inv_acc = T(1) / acc;
                     for (std::size_t j = 0; j < v; ++j) dst[j] += g * std::exp(row[j] - mx) * inv_acc;
                     dst[tv[r]] -= g;
                   }
                 });
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4) throw DimensionError("im2col: expected [b, h, w, c], got " + shape_str(x.shape()));
  if (kernel == 0 || stride == 0) throw DimensionError("im2col: kernel and stride must be positive");
  const std::size_t b = x.dim(0);
  const std::size_t h = x.dim(1);
  const std::size_t w = x.dim(2);
  const std::size_t c = x.dim(3);
  if (h + 2 * pad < kernel || w + 2 * pad < kernel) throw DimensionError("im2col: kernel larger than input");
  const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kernel) / stride + 1;
  const std::size_t patch = kernel * kernel * c;
  constexpr std::size_t kPad = static_cast<std::size_t>(-1);
  auto index = std::make_shared<std::vector<std::size_t>>(b * ho * wo * patch, kPad);
  std::size_t at = 0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            for (std::size_t ch = 0; ch < c; ++ch, ++at) {
              if (inside) {
                (*index)[at] = ((n * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ch;
              }
            }
          }
  std::vector<T> out(index->size(), T(0));
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if ((*index)[i] != kPad) out[i] = xd[(*index)[i]];
  TensorNode<T>* xn = raw(x);
  return emit<T>("im2col", Shape{b, ho, wo, patch}, std::move(out), {&x}, [xn, index](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if ((*index)[i] != kPad) xn->grad[(*index)[i]] += o.grad[i];
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const T factor = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  for (T& m : *mask) m = uniform01(rng) >= rate ? factor : T(0);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * (*mask)[i];
  TensorNode<T>* xn = raw(x);
  return emit<T>("dropout", x.shape(), std::move(out), {&x}, [xn, mask](const TensorNode<T>& o) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * (*mask)[i];
  });
}

#define FADVLP_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> tanh(const Tensor<T>&);                                                   \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                   \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);              \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> l2_normalize(const Tensor<T>&, std::size_t, T);                           \
  template Tensor<T> cross_entropy_with_logits(const Tensor<T>&, std::span<const int>, int);   \
  template Tensor<T> im2col(const Tensor<T>&, std::size_t, std::size_t, std::size_t);          \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&);

FADVLP_INSTANTIATE_OPS(float)
FADVLP_INSTANTIATE_OPS(double)

#undef FADVLP_INSTANTIATE_OPS

}  // namespace fadvlp
