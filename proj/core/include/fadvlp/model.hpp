#pragma once

// Visual encoder, text decoder and multimodal decoder sharing one set of
// weights across the Aligner/Captioner, Relative Captioner and Fuser modes.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fadvlp/nn.hpp"
#include "fadvlp/params.hpp"
#include "fadvlp/vocab.hpp"

namespace fadvlp {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t image_channels = 3;
  std::vector<std::size_t> stage_widths{16, 32, 64, 64};
  std::vector<std::size_t> stage_strides{2, 2, 2, 2};
  std::size_t vocab_size = 0;
  std::size_t width = 64;
  std::size_t text_layers = 2;
  std::size_t multimodal_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_width = 256;
  std::size_t joint_dim = 32;
  std::size_t max_text_len = 24;  // [BOS] .. [EOS], mode token excluded
  double dropout = 0.0;
  double temperature = 1.0;
  std::uint64_t init_seed = 0;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  // Spatial side of each conv stage's output.
  std::vector<std::size_t> stage_sides() const;
  std::size_t image_token_count() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class Mode { kAlign, kRelativeCaption, kFuse };

int mode_token(Mode mode);

// Padded batch of token sequences, each [BOS] .. [EOS] followed by [PAD]s.
struct TextBatch {
  std::vector<int> ids;  // batch * len
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::size_t> eos_index;  // per row, position of [EOS]

  // Validates [BOS] start, an [EOS], and length <= max_len.
  static TextBatch from_sequences(const std::vector<std::vector<int>>& seqs, std::size_t max_len);
  // Prefixes without [EOS] (generation); all rows share one length.
  static TextBatch from_prefixes(const std::vector<std::vector<int>>& prefixes, std::size_t max_len);
  int at(std::size_t row, std::size_t pos) const { return ids[row * len + pos]; }
  // Number of predicted tokens (positions after [BOS] up to and including [EOS]).
  std::size_t target_count() const;
};

template <typename T>
struct ImageEncoding {
  Tensor<T> tokens;  // [B, N_tok, D]
  Tensor<T> pooled;  // [B, last stage width]

  std::size_t batch() const { return tokens.dim(0); }
  // Rows [begin, end) of the batch.
  ImageEncoding slice_rows(std::size_t begin, std::size_t end) const;
};

struct DecodeOptions {
  bool greedy = true;
  double top_p = 0.9;
  std::size_t max_len = 24;
  std::uint64_t seed = 0;
};

// Keeps the smallest probability-sorted prefix (ties by ascending id) whose
// mass reaches p, then renormalizes.
std::vector<double> nucleus_filter(const std::vector<double>& probs, double p);

template <typename T>
class FadVlpModel {
 public:
  explicit FadVlpModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  std::vector<Tensor<T>> parameters() const { return store_.tensors(); }

  // images: [B, H, W, C]
  ImageEncoding<T> encode_images(const Tensor<T>& images) const;

  // Text decoder over [mode] + ids; returns hidden states [B, len+1, D].
  Tensor<T> text_hidden(const TextBatch& text, Mode mode, DropoutContext dropout = {}) const;
  // Multimodal decoder on top of text_hidden with one or two image contexts.
  Tensor<T> multimodal_hidden(const Tensor<T>& text_hidden, const TextBatch& text,
                              const Tensor<T>& context, const Tensor<T>* context2,
                              DropoutContext dropout = {}) const;
  // Hidden state at each row's [EOS]: [B, D].
  Tensor<T> pool_eos(const Tensor<T>& hidden, const TextBatch& text) const;
  // Next-token logits for positions [BOS] .. end: [B, len, V].
  Tensor<T> lm_logits(const Tensor<T>& hidden) const;
  // Targets aligned with lm_logits rows; [PAD] where nothing is predicted.
  static std::vector<int> lm_targets(const TextBatch& text);

  // Unit-norm joint embeddings [B, J].
  Tensor<T> embed_image(const Tensor<T>& pooled) const;  // f
  Tensor<T> embed_text(const Tensor<T>& pooled) const;   // g
  Tensor<T> embed_fused(const Tensor<T>& pooled) const;  // h
  // a[B1, J] . b[B2, J]^T / tau
  Tensor<T> similarity(const Tensor<T>& a, const Tensor<T>& b) const;

  // Aligner: text-side pooled representation [B, D].
  Tensor<T> encode_text(const TextBatch& text, Mode mode, DropoutContext dropout = {}) const;
  // Fuser: pooled multimodal representation [B, D] for (reference, text).
  Tensor<T> fuse(const ImageEncoding<T>& reference, const TextBatch& text,
                 DropoutContext dropout = {}) const;
  // Captioner logits [B, len, V].
  Tensor<T> caption_logits(const TextBatch& text, const ImageEncoding<T>& image,
                           DropoutContext dropout = {}) const;
  // Relative Captioner logits [B, len, V].
  Tensor<T> relative_caption_logits(const TextBatch& text, const ImageEncoding<T>& reference,
                                    const ImageEncoding<T>& target, DropoutContext dropout = {}) const;

  // kappa(i, t) and kappa'(m, i_t) for single pooled vectors.
  T kappa(const Tensor<T>& image_pooled, const Tensor<T>& text_pooled) const;
  T kappa_prime(const Tensor<T>& fused_pooled, const Tensor<T>& target_pooled) const;

  // Generated token ids per row (no [BOS]; ends with [EOS] unless truncated).
  // images holds one encoding for Mode::kAlign and two for kRelativeCaption.
  std::vector<std::vector<int>> generate(Mode mode, const std::vector<ImageEncoding<T>>& images,
                                         const DecodeOptions& options) const;

  // Tokens that generation never emits.
  static bool is_forbidden_output(int id);

 private:
  Tensor<T> embed_tokens(const TextBatch& text, Mode mode) const;
  std::vector<std::uint8_t> key_mask(const TextBatch& text) const;

  ModelConfig config_;
  ParameterStore<T> store_;

  struct ConvStage {
    Tensor<T> weight;  // [k*k*c_in, c_out]
    Tensor<T> bias;
  };
  std::vector<ConvStage> conv_;
  Linear<T> token_adapter_[2];
  Tensor<T> stage_embedding_;     // [2, D]
  Tensor<T> token_embedding_;     // [V, D]
  Tensor<T> position_embedding_;  // [max_len + 1, D]
  std::vector<DecoderLayerParams<T>> text_layers_;
  std::vector<DecoderLayerParams<T>> multimodal_layers_;
  Linear<T> lm_head_;
  Linear<T> proj_image_;  // f
  Linear<T> proj_text_;   // g
  Linear<T> proj_fused_;  // h
};

}  // namespace fadvlp
