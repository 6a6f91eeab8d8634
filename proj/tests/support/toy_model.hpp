#pragma once

// Small model configurations and batches shared by the model and objective
// tests.

#include <random>
#include <vector>

#include "fadvlp/model.hpp"
#include "fadvlp/objectives.hpp"

namespace fadvlp::testing {

inline ModelConfig toy_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.image_size = 8;
  c.stage_widths = {3, 4, 5, 6};
  c.vocab_size = 12;
  c.width = 8;
  c.text_layers = 1;
  c.multimodal_layers = 1;
  c.heads = 2;
  c.ffn_width = 12;
  c.joint_dim = 4;
  c.max_text_len = 6;
  c.init_seed = seed;
  return c;
}

template <typename T>
Tensor<T> random_images(const ModelConfig& c, std::size_t batch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> v(batch * c.image_size * c.image_size * c.image_channels);
  for (T& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(Shape{batch, c.image_size, c.image_size, c.image_channels}, std::move(v));
}

// Rows of random word ids (no specials) with random lengths, wrapped in
// [BOS] .. [EOS].
inline TextBatch random_text(const ModelConfig& c, std::size_t batch, std::mt19937_64& rng,
                             std::size_t min_words = 0) {
  std::vector<std::vector<int>> rows;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t words =
        min_words + static_cast<std::size_t>(rng() % (c.max_text_len - 2 - min_words + 1));
    std::vector<int> row{kBos};
    for (std::size_t i = 0; i < words; ++i)
      row.push_back(kNumSpecialTokens + static_cast<int>(rng() % (c.vocab_size - kNumSpecialTokens)));
    row.push_back(kEos);
    rows.push_back(row);
  }
  return TextBatch::from_sequences(rows, c.max_text_len);
}

// Moves every parameter off its initial value (opening the gates) so each
// path carries gradient.
template <typename T>
void jitter_parameters(FadVlpModel<T>& model, std::uint64_t seed, double amplitude = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (auto& t : model.parameters())
    for (T& v : t.mutable_data()) v += static_cast<T>(u(rng));
}

// Copies the [ALIGN] embedding row into [RELCAP].
template <typename T>
void tie_mode_embeddings(FadVlpModel<T>& model) {
  Tensor<T> table = model.store().get("text.token_embedding");
  auto d = table.mutable_data();
  const std::size_t w = model.config().width;
  std::copy_n(d.begin() + kAlignToken * w, w, d.begin() + kRelCapToken * w);
}

}  // namespace fadvlp::testing
