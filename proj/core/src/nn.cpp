#include "fadvlp/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fadvlp {
namespace {

constexpr double kMaskedScore = -1e9;

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  if (x.rank() == 3) return x;
  if (x.rank() == 2) return reshape(x, Shape{1, x.dim(0), x.dim(1)});
  throw DimensionError("expected a [B, L, D] or [L, D] sequence, got " + shape_str(x.shape()));
}

template <typename T>
Tensor<T> restore_rank(const Tensor<T>& y, const Tensor<T>& like) {
  if (like.rank() == 2) return reshape(y, like.shape());
  return y;
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t b = x.dim(0);
  const std::size_t l = x.dim(1);
  const std::size_t d = x.dim(2);
  Tensor<T> y = reshape(x, Shape{b, l, heads, d / heads});
  y = permute(y, {0, 2, 1, 3});
  return reshape(y, Shape{b * heads, l, d / heads});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batch, std::size_t heads) {
  const std::size_t l = x.dim(1);
  const std::size_t dh = x.dim(2);
  Tensor<T> y = reshape(x, Shape{batch, heads, l, dh});
  y = permute(y, {0, 2, 1, 3});
  return reshape(y, Shape{batch, l, heads * dh});
}

// Scaled dot-product attention with an optional additive mask [B*H, L, M].
template <typename T>
Tensor<T> attend(const Tensor<T>& queries, const Tensor<T>& context, const AttentionParams<T>& p,
                 const Tensor<T>* mask) {
  const std::size_t batch = queries.dim(0);
  const std::size_t width = queries.dim(2);
  if (context.dim(2) != width || p.width() != width) {
    throw DimensionError("attention width mismatch: queries " + shape_str(queries.shape()) +
                         ", context " + shape_str(context.shape()) + ", params " +
                         std::to_string(p.width()));
  }
  if (context.dim(0) != batch) throw DimensionError("attention batch mismatch");
  const std::size_t dh = width / p.heads;
  Tensor<T> q = split_heads(p.query(queries), p.heads);
  Tensor<T> k = split_heads(p.key(context), p.heads);
  Tensor<T> v = split_heads(p.value(context), p.heads);
  Tensor<T> scores = scale(bmm(q, k, true), T(1.0 / std::sqrt(static_cast<double>(dh))));
  if (mask != nullptr) scores = add(scores, *mask);
  Tensor<T> weights = softmax(scores, 2);
  Tensor<T> mixed = merge_heads(bmm(weights, v), batch, p.heads);
  return p.output(mixed);
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, DropoutContext ctx) {
  if (ctx.rate <= 0.0 || ctx.rng == nullptr) return x;
  return dropout(x, ctx.rate, *ctx.rng);
}

}  // namespace

template <typename T>
Linear<T> Linear<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t in,
                            std::size_t out) {
  Linear l;
  l.weight = store.create(name + ".weight", Shape{in, out}, Init::kXavier);
  l.bias = store.create(name + ".bias", Shape{out}, Init::kZeros);
  return l;
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::create(ParameterStore<T>& store, const std::string& name,
                                              std::size_t width) {
  LayerNormParams p;
  p.gain = store.create(name + ".gain", Shape{width}, Init::kOnes);
  p.bias = store.create(name + ".bias", Shape{width}, Init::kZeros);
  return p;
}

template <typename T>
AttentionParams<T> AttentionParams<T>::create(ParameterStore<T>& store, const std::string& name,
                                              std::size_t width, std::size_t heads) {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(width) +
                                " is not divisible by head count " + std::to_string(heads));
  }
  AttentionParams p;
  p.query = Linear<T>::create(store, name + ".query", width, width);
  p.key = Linear<T>::create(store, name + ".key", width, width);
  p.value = Linear<T>::create(store, name + ".value", width, width);
  p.output = Linear<T>::create(store, name + ".output", width, width);
  p.heads = heads;
  return p;
}

template <typename T>
GatedCrossAttentionParams<T> GatedCrossAttentionParams<T>::create(ParameterStore<T>& store,
                                                                  const std::string& name,
                                                                  std::size_t width, std::size_t heads) {
  GatedCrossAttentionParams p;
  p.attention = AttentionParams<T>::create(store, name, width, heads);
  p.alpha = store.create(name + ".alpha", Shape{}, Init::kZeros);
  return p;
}

template <typename T>
DecoderLayerParams<T> DecoderLayerParams<T>::create(ParameterStore<T>& store, const std::string& name,
                                                    std::size_t width, std::size_t heads,
                                                    std::size_t ffn_width, bool with_cross) {
  DecoderLayerParams p;
  p.self_attention = AttentionParams<T>::create(store, name + ".self_attention", width, heads);
  p.self_norm = LayerNormParams<T>::create(store, name + ".self_norm", width);
  if (with_cross) {
    p.cross_attention = AttentionParams<T>::create(store, name + ".cross_attention", width, heads);
    p.cross_norm = LayerNormParams<T>::create(store, name + ".cross_norm", width);
    p.gated_cross_attention =
        GatedCrossAttentionParams<T>::create(store, name + ".gated_cross_attention", width, heads);
  }
  p.ff_in = Linear<T>::create(store, name + ".ff_in", width, ffn_width);
  p.ff_out = Linear<T>::create(store, name + ".ff_out", ffn_width, width);
  p.ff_norm = LayerNormParams<T>::create(store, name + ".ff_norm", width);
  return p;
}

template <typename T>
Tensor<T> causal_self_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                                std::span<const std::uint8_t> key_valid) {
  const Tensor<T> xb = as_batched(x);
  const std::size_t batch = xb.dim(0);
  const std::size_t len = xb.dim(1);
  if (!key_valid.empty() && key_valid.size() != batch * len) {
    throw DimensionError("causal_self_attention: key mask has wrong length");
  }
  const std::size_t heads = params.heads;
  std::vector<T> mask(batch * heads * len * len, T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < len; ++j) {
          const bool blocked = j > i || (!key_valid.empty() && key_valid[b * len + j] == 0);
          if (blocked) mask[((b * heads + h) * len + i) * len + j] = T(kMaskedScore);
        }
  const Tensor<T> mask_t(Shape{batch * heads, len, len}, std::move(mask));
  return restore_rank(attend(xb, xb, params, &mask_t), x);
}

template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x, const Tensor<T>& context, const AttentionParams<T>& params,
                          std::span<const std::uint8_t> context_valid) {
  const Tensor<T> xb = as_batched(x);
  const Tensor<T> cb = as_batched(context);
  if (context_valid.empty()) return restore_rank(attend<T>(xb, cb, params, nullptr), x);

  const std::size_t batch = xb.dim(0);
  const std::size_t len = xb.dim(1);
  const std::size_t ctx_len = cb.dim(1);
  if (context_valid.size() != batch * ctx_len) {
    throw DimensionError("cross_attention: context mask has wrong length");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < ctx_len; ++j) any = any || context_valid[b * ctx_len + j] != 0;
    if (!any) throw std::invalid_argument("cross_attention: empty context");
  }
  const std::size_t heads = params.heads;
  std::vector<T> mask(batch * heads * len * ctx_len, T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < ctx_len; ++j)
          if (context_valid[b * ctx_len + j] == 0)
            mask[((b * heads + h) * len + i) * ctx_len + j] = T(kMaskedScore);
  const Tensor<T> mask_t(Shape{batch * heads, len, ctx_len}, std::move(mask));
  return restore_rank(attend(xb, cb, params, &mask_t), x);
}

template <typename T>
Tensor<T> gated_cross_attention(const Tensor<T>& x, const Tensor<T>& context,
                                const GatedCrossAttentionParams<T>& params) {
  return add(x, scale_by(cross_attention(x, context, params.attention), tanh(params.alpha)));
}

template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& x, const Tensor<T>* context, const Tensor<T>* context2,
                        const DecoderLayerParams<T>& params, std::span<const std::uint8_t> key_valid,
                        DropoutContext dropout_ctx) {
  if (context2 != nullptr && context == nullptr) {
    throw std::invalid_argument("decoder_layer: second image context given without the first");
  }
  if (context != nullptr && !params.cross_attention) {
    throw std::invalid_argument("decoder_layer: layer has no cross-attention parameters");
  }
  Tensor<T> h = params.self_norm(
      add(x, maybe_dropout(causal_self_attention(x, params.self_attention, key_valid), dropout_ctx)));
  if (context != nullptr) {
    h = (*params.cross_norm)(
        add(h, maybe_dropout(cross_attention(h, *context, *params.cross_attention), dropout_ctx)));
  }
  if (context2 != nullptr) {
    h = gated_cross_attention(h, *context2, *params.gated_cross_attention);
  }
  Tensor<T> ff = params.ff_out(gelu(params.ff_in(h)));
  return params.ff_norm(add(h, maybe_dropout(ff, dropout_ctx)));
}

#define FADVLP_INSTANTIATE_NN(T)                                                                  \
  template struct Linear<T>;                                                                      \
  template struct LayerNormParams<T>;                                                             \
  template struct AttentionParams<T>;                                                             \
  template struct GatedCrossAttentionParams<T>;                                                   \
  template struct DecoderLayerParams<T>;                                                          \
  template Tensor<T> causal_self_attention(const Tensor<T>&, const AttentionParams<T>&,           \
                                           std::span<const std::uint8_t>);                        \
  template Tensor<T> cross_attention(const Tensor<T>&, const Tensor<T>&, const AttentionParams<T>&, \
                                     std::span<const std::uint8_t>);                              \
  template Tensor<T> gated_cross_attention(const Tensor<T>&, const Tensor<T>&,                    \
                                           const GatedCrossAttentionParams<T>&);                  \
  template Tensor<T> decoder_layer(const Tensor<T>&, const Tensor<T>*, const Tensor<T>*,          \
                                   const DecoderLayerParams<T>&, std::span<const std::uint8_t>,   \
                                   DropoutContext);

FADVLP_INSTANTIATE_NN(float)
FADVLP_INSTANTIATE_NN(double)

#undef FADVLP_INSTANTIATE_NN

}  // namespace fadvlp
