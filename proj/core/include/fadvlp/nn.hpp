#pragma once

// Attention and transformer decoder layers. Sequence inputs are [B, L, D]
// (a rank-2 [L, D] input is treated as a batch of one).

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "fadvlp/ops.hpp"
#include "fadvlp/params.hpp"

namespace fadvlp {

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static Linear create(ParameterStore<T>& store, const std::string& name, std::size_t in,
                       std::size_t out);
  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNormParams create(ParameterStore<T>& store, const std::string& name, std::size_t width);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, T(1e-5)); }
};

template <typename T>
struct AttentionParams {
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;
  std::size_t heads = 1;

  static AttentionParams create(ParameterStore<T>& store, const std::string& name, std::size_t width,
                                std::size_t heads);
  std::size_t width() const { return query.weight.dim(0); }
};

// The gate scalar starts at 0, so the block is an identity on its residual
// path until alpha moves.
template <typename T>
struct GatedCrossAttentionParams {
  AttentionParams<T> attention;
  Tensor<T> alpha;  // scalar

  static GatedCrossAttentionParams create(ParameterStore<T>& store, const std::string& name,
                                          std::size_t width, std::size_t heads);
};

template <typename T>
struct DecoderLayerParams {
  AttentionParams<T> self_attention;
  LayerNormParams<T> self_norm;
  std::optional<AttentionParams<T>> cross_attention;
  std::optional<LayerNormParams<T>> cross_norm;
  std::optional<GatedCrossAttentionParams<T>> gated_cross_attention;
  Linear<T> ff_in;
  Linear<T> ff_out;
  LayerNormParams<T> ff_norm;

  // with_cross adds both the first cross-attention and the gated second one.
  static DecoderLayerParams create(ParameterStore<T>& store, const std::string& name, std::size_t width,
                                   std::size_t heads, std::size_t ffn_width, bool with_cross);
};

// Per-call stochastic settings; rate 0 (or no rng) disables dropout.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

// key_valid holds B*L flags (nonzero = attendable); empty means all valid.
template <typename T>
Tensor<T> causal_self_attention(const Tensor<T>& x, const AttentionParams<T>& params,
                                std::span<const std::uint8_t> key_valid = {});

template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x, const Tensor<T>& context, const AttentionParams<T>& params,
                          std::span<const std::uint8_t> context_valid = {});

// x + tanh(alpha) * cross_attention(x, context)
template <typename T>
Tensor<T> gated_cross_attention(const Tensor<T>& x, const Tensor<T>& context,
                                const GatedCrossAttentionParams<T>& params);

// Post-norm layer: self-attention, optional cross-attention on context,
// optional gated cross-attention on context2, feed-forward.
template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& x, const Tensor<T>* context, const Tensor<T>* context2,
                        const DecoderLayerParams<T>& params, std::span<const std::uint8_t> key_valid = {},
                        DropoutContext dropout_ctx = {});

}  // namespace fadvlp
