#include "fadvlp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fadvlp/random.hpp"

namespace fadvlp {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (image_size == 0 || image_channels == 0) fail("image size and channels must be positive");
  if (stage_widths.size() < 2) fail("at least two conv stages are required");
  if (stage_widths.size() != stage_strides.size()) fail("stage_widths and stage_strides differ in length");
  for (std::size_t w : stage_widths)
    if (w == 0) fail("stage widths must be positive");
  for (std::size_t s : stage_strides)
    if (s == 0) fail("stage strides must be positive");
  if (vocab_size < kNumSpecialTokens + 1) fail("vocab_size must cover the special tokens plus words");
  if (width == 0 || heads == 0 || width % heads != 0) fail("width must be a positive multiple of heads");
  if (joint_dim == 0 || joint_dim > width) fail("joint_dim must be in [1, width]");
  if (text_layers == 0 || multimodal_layers == 0) fail("decoder layer counts must be positive");
  if (ffn_width == 0) fail("ffn_width must be positive");
  if (max_text_len < 2) fail("max_text_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive");
}

std::vector<std::size_t> ModelConfig::stage_sides() const {
  std::vector<std::size_t> sides;
  std::size_t side = image_size;
  for (std::size_t s : stage_strides) {
    side = (side + 2 - 3) / s + 1;
    sides.push_back(side);
  }
  return sides;
}

std::size_t ModelConfig::image_token_count() const {
  const auto sides = stage_sides();
  const std::size_t a = sides[sides.size() - 2];
  const std::size_t b = sides.back();
  return a * a + b * b;
}

int mode_token(Mode mode) {
  switch (mode) {
    case Mode::kAlign:
      return kAlignToken;
    case Mode::kRelativeCaption:
      return kRelCapToken;
    case Mode::kFuse:
      return kFuseToken;
  }
  return kAlignToken;
}

namespace {

std::size_t first_eos(const std::vector<int>& seq) {
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (seq[i] == kEos) return i;
  return seq.size();
}

}  // namespace

TextBatch TextBatch::from_sequences(const std::vector<std::vector<int>>& seqs, std::size_t max_len) {
  if (seqs.empty()) throw std::invalid_argument("text batch is empty");
  TextBatch tb;
  tb.batch = seqs.size();
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto& s = seqs[r];
    if (s.empty() || s.front() != kBos) {
      throw std::invalid_argument("text row " + std::to_string(r) + " does not start with [BOS]");
    }
    const std::size_t eos = first_eos(s);
    if (eos == s.size()) throw std::invalid_argument("text row " + std::to_string(r) + " has no [EOS]");
    for (std::size_t i = eos + 1; i < s.size(); ++i) {
      if (s[i] != kPad) throw std::invalid_argument("text row " + std::to_string(r) + " has tokens after [EOS]");
    }
    if (eos + 1 > max_len) {
      throw std::invalid_argument("text row " + std::to_string(r) + " has " + std::to_string(eos + 1) +
                                  " tokens, limit is " + std::to_string(max_len));
    }
    tb.len = std::max(tb.len, eos + 1);
    tb.eos_index.push_back(eos);
  }
  tb.ids.assign(tb.batch * tb.len, kPad);
  for (std::size_t r = 0; r < seqs.size(); ++r)
    for (std::size_t i = 0; i <= tb.eos_index[r]; ++i) tb.ids[r * tb.len + i] = seqs[r][i];
  return tb;
}

TextBatch TextBatch::from_prefixes(const std::vector<std::vector<int>>& prefixes, std::size_t max_len) {
  if (prefixes.empty()) throw std::invalid_argument("text batch is empty");
  TextBatch tb;
  tb.batch = prefixes.size();
  tb.len = prefixes.front().size();
  if (tb.len == 0 || tb.len > max_len) throw std::invalid_argument("prefix length out of range");
  for (const auto& p : prefixes) {
    if (p.size() != tb.len) throw std::invalid_argument("prefixes must share one length");
    if (p.front() != kBos) throw std::invalid_argument("prefix does not start with [BOS]");
    tb.ids.insert(tb.ids.end(), p.begin(), p.end());
  }
  tb.eos_index.assign(tb.batch, tb.len - 1);
  return tb;
}

std::size_t TextBatch::target_count() const {
  std::size_t n = 0;
  for (std::size_t e : eos_index) n += e;
  return n;
}

template <typename T>
ImageEncoding<T> ImageEncoding<T>::slice_rows(std::size_t begin, std::size_t end) const {
  return ImageEncoding{slice(tokens, 0, begin, end), slice(pooled, 0, begin, end)};
}

std::vector<double> nucleus_filter(const std::vector<double>& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nucleus p must be in (0, 1]");
  if (probs.empty()) throw std::invalid_argument("nucleus_filter: empty distribution");
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("nucleus_filter: probabilities do not sum to 1");
  if (p >= 1.0) return probs;
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<double> out(probs.size(), 0.0);
  double kept = 0.0;
  for (std::size_t id : order) {
    out[id] = probs[id];
    kept += probs[id];
    if (kept >= p) break;
  }
  for (double& v : out) v /= kept;
  return out;
}

template <typename T>
FadVlpModel<T>::FadVlpModel(const ModelConfig& config) : config_(config), store_(config.init_seed) {
  config_.validate();
  const std::size_t d = config_.width;
  std::size_t in_ch = config_.image_channels;
  for (std::size_t s = 0; s < config_.stage_widths.size(); ++s) {
    const std::string name = "encoder.stage" + std::to_string(s);
    const std::size_t out_ch = config_.stage_widths[s];
    ConvStage stage;
    stage.weight = store_.create(name + ".weight", Shape{9 * in_ch, out_ch}, Init::kHe);
    stage.bias = store_.create(name + ".bias", Shape{out_ch}, Init::kZeros);
    conv_.push_back(stage);
    in_ch = out_ch;
  }
  const std::size_t n = config_.stage_widths.size();
  token_adapter_[0] = Linear<T>::create(store_, "encoder.adapter0", config_.stage_widths[n - 2], d);
  token_adapter_[1] = Linear<T>::create(store_, "encoder.adapter1", config_.stage_widths[n - 1], d);
  stage_embedding_ = store_.create("encoder.stage_embedding", Shape{2, d}, Init::kNormal, 0.02);
  token_embedding_ = store_.create("text.token_embedding", Shape{config_.vocab_size, d}, Init::kNormal, 0.02);
  position_embedding_ =
      store_.create("text.position_embedding", Shape{config_.max_text_len + 1, d}, Init::kNormal, 0.02);
  for (std::size_t l = 0; l < config_.text_layers; ++l) {
    text_layers_.push_back(DecoderLayerParams<T>::create(store_, "text.layer" + std::to_string(l), d,
                                                         config_.heads, config_.ffn_width, false));
  }
  for (std::size_t l = 0; l < config_.multimodal_layers; ++l) {
    multimodal_layers_.push_back(DecoderLayerParams<T>::create(
        store_, "multimodal.layer" + std::to_string(l), d, config_.heads, config_.ffn_width, true));
  }
  lm_head_ = Linear<T>::create(store_, "multimodal.lm_head", d, config_.vocab_size);
  proj_image_ = Linear<T>::create(store_, "proj.image", config_.stage_widths.back(), config_.joint_dim);
  proj_text_ = Linear<T>::create(store_, "proj.text", d, config_.joint_dim);
  proj_fused_ = Linear<T>::create(store_, "proj.fused", d, config_.joint_dim);
}

template <typename T>
ImageEncoding<T> FadVlpModel<T>::encode_images(const Tensor<T>& images) const {
  const std::size_t side = config_.image_size;
  const std::size_t ch = config_.image_channels;
  if (images.rank() != 4 || images.dim(1) != side || images.dim(2) != side || images.dim(3) != ch) {
    throw DimensionError("encode_images expects [B, " + std::to_string(side) + ", " + std::to_string(side) +
                         ", " + std::to_string(ch) + "], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  Tensor<T> x = add_scalar(images, T(-0.5));
  std::vector<Tensor<T>> stages;
  for (std::size_t s = 0; s < conv_.size(); ++s) {
    Tensor<T> cols = im2col(x, 3, config_.stage_strides[s], 1);
    x = gelu(add_bias(matmul(cols, conv_[s].weight), conv_[s].bias));
    stages.push_back(x);
  }
  const std::size_t d = config_.width;
  std::vector<Tensor<T>> groups;
  for (std::size_t g = 0; g < 2; ++g) {
    const Tensor<T>& map = stages[stages.size() - 2 + g];
    const std::size_t cells = map.dim(1) * map.dim(2);
    Tensor<T> flat = reshape(map, Shape{batch, cells, map.dim(3)});
    Tensor<T> stage_row = reshape(slice(stage_embedding_, 0, g, g + 1), Shape{d});
    groups.push_back(add_bias(token_adapter_[g](flat), stage_row));
  }
  const Tensor<T>& last = stages.back();
  Tensor<T> pooled = mean_axis(reshape(last, Shape{batch, last.dim(1) * last.dim(2), last.dim(3)}), 1);
  return ImageEncoding<T>{concat(groups, 1), pooled};
}

template <typename T>
Tensor<T> FadVlpModel<T>::embed_tokens(const TextBatch& text, Mode mode) const {
  if (text.len > config_.max_text_len) throw std::invalid_argument("text longer than max_text_len");
  const std::size_t l1 = text.len + 1;
  std::vector<std::size_t> ids(text.batch * l1);
  std::vector<std::size_t> positions(text.batch * l1);
  for (std::size_t b = 0; b < text.batch; ++b) {
    ids[b * l1] = static_cast<std::size_t>(mode_token(mode));
    for (std::size_t i = 0; i < text.len; ++i) {
      const int id = text.at(b, i);
      if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
        throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
      }
      ids[b * l1 + i + 1] = static_cast<std::size_t>(id);
    }
    for (std::size_t i = 0; i < l1; ++i) positions[b * l1 + i] = i;
  }
  Tensor<T> tok = gather_rows(token_embedding_, std::span<const std::size_t>(ids));
  Tensor<T> pos = gather_rows(position_embedding_, std::span<const std::size_t>(positions));
  return reshape(add(tok, pos), Shape{text.batch, l1, config_.width});
}

template <typename T>
std::vector<std::uint8_t> FadVlpModel<T>::key_mask(const TextBatch& text) const {
  const std::size_t l1 = text.len + 1;
  std::vector<std::uint8_t> mask(text.batch * l1, 1);
  for (std::size_t b = 0; b < text.batch; ++b)
    for (std::size_t i = 0; i < text.len; ++i) mask[b * l1 + i + 1] = text.at(b, i) != kPad;
  return mask;
}

template <typename T>
Tensor<T> FadVlpModel<T>::text_hidden(const TextBatch& text, Mode mode, DropoutContext dropout) const {
  Tensor<T> h = embed_tokens(text, mode);
  const auto mask = key_mask(text);
  for (const auto& layer : text_layers_) h = decoder_layer<T>(h, nullptr, nullptr, layer, mask, dropout);
  return h;
}

template <typename T>
Tensor<T> FadVlpModel<T>::multimodal_hidden(const Tensor<T>& hidden, const TextBatch& text,
                                            const Tensor<T>& context, const Tensor<T>* context2,
                                            DropoutContext dropout) const {
  Tensor<T> h = hidden;
  const auto mask = key_mask(text);
  for (const auto& layer : multimodal_layers_) h = decoder_layer<T>(h, &context, context2, layer, mask, dropout);
  return h;
}

template <typename T>
Tensor<T> FadVlpModel<T>::pool_eos(const Tensor<T>& hidden, const TextBatch& text) const {
  const std::size_t l1 = hidden.dim(1);
  std::vector<std::size_t> rows(text.batch);
  for (std::size_t b = 0; b < text.batch; ++b) rows[b] = b * l1 + text.eos_index[b] + 1;
  Tensor<T> flat = reshape(hidden, Shape{hidden.dim(0) * l1, hidden.dim(2)});
  return gather_rows(flat, std::span<const std::size_t>(rows));
}

template <typename T>
Tensor<T> FadVlpModel<T>::lm_logits(const Tensor<T>& hidden) const {
  return lm_head_(slice(hidden, 1, 1, hidden.dim(1)));
}

template <typename T>
std::vector<int> FadVlpModel<T>::lm_targets(const TextBatch& text) {
  std::vector<int> targets(text.batch * text.len, kPad);
  for (std::size_t b = 0; b < text.batch; ++b)
    for (std::size_t j = 0; j + 1 < text.len; ++j) targets[b * text.len + j] = text.at(b, j + 1);
  return targets;
}

template <typename T>
Tensor<T> FadVlpModel<T>::embed_image(const Tensor<T>& pooled) const {
  return l2_normalize(proj_image_(pooled), 1);
}

template <typename T>
Tensor<T> FadVlpModel<T>::embed_text(const Tensor<T>& pooled) const {
  return l2_normalize(proj_text_(pooled), 1);
}

template <typename T>
Tensor<T> FadVlpModel<T>::embed_fused(const Tensor<T>& pooled) const {
  return l2_normalize(proj_fused_(pooled), 1);
}

template <typename T>
Tensor<T> FadVlpModel<T>::similarity(const Tensor<T>& a, const Tensor<T>& b) const {
  return scale(matmul(a, b, false, true), T(1.0 / config_.temperature));
}

template <typename T>
Tensor<T> FadVlpModel<T>::encode_text(const TextBatch& text, Mode mode, DropoutContext dropout) const {
  return pool_eos(text_hidden(text, mode, dropout), text);
}

template <typename T>
Tensor<T> FadVlpModel<T>::fuse(const ImageEncoding<T>& reference, const TextBatch& text,
                               DropoutContext dropout) const {
  Tensor<T> h = text_hidden(text, Mode::kFuse, dropout);
  return pool_eos(multimodal_hidden(h, text, reference.tokens, nullptr, dropout), text);
}

template <typename T>
Tensor<T> FadVlpModel<T>::caption_logits(const TextBatch& text, const ImageEncoding<T>& image,
                                         DropoutContext dropout) const {
  Tensor<T> h = text_hidden(text, Mode::kAlign, dropout);
  return lm_logits(multimodal_hidden(h, text, image.tokens, nullptr, dropout));
}

template <typename T>
Tensor<T> FadVlpModel<T>::relative_caption_logits(const TextBatch& text, const ImageEncoding<T>& reference,
                                                  const ImageEncoding<T>& target,
                                                  DropoutContext dropout) const {
  Tensor<T> h = text_hidden(text, Mode::kRelativeCaption, dropout);
  return lm_logits(multimodal_hidden(h, text, reference.tokens, &target.tokens, dropout));
}

template <typename T>
T FadVlpModel<T>::kappa(const Tensor<T>& image_pooled, const Tensor<T>& text_pooled) const {
  Tensor<T> i = embed_image(reshape(image_pooled, Shape{1, image_pooled.numel()}));
  Tensor<T> t = embed_text(reshape(text_pooled, Shape{1, text_pooled.numel()}));
  return similarity(i, t).item();
}

template <typename T>
T FadVlpModel<T>::kappa_prime(const Tensor<T>& fused_pooled, const Tensor<T>& target_pooled) const {
  Tensor<T> m = embed_fused(reshape(fused_pooled, Shape{1, fused_pooled.numel()}));
  Tensor<T> i = embed_image(reshape(target_pooled, Shape{1, target_pooled.numel()}));
  return similarity(m, i).item();
}

template <typename T>
bool FadVlpModel<T>::is_forbidden_output(int id) {
  return id == kPad || id == kBos || id == kUnk || id == kAlignToken || id == kRelCapToken || id == kFuseToken;
}

template <typename T>
std::vector<std::vector<int>> FadVlpModel<T>::generate(Mode mode, const std::vector<ImageEncoding<T>>& images,
                                                       const DecodeOptions& options) const {
  const std::size_t arity = mode == Mode::kRelativeCaption ? 2 : mode == Mode::kAlign ? 1 : 0;
  if (arity == 0) throw std::invalid_argument("generate: the Fuser mode does not produce text");
  if (images.size() != arity) {
    throw std::invalid_argument("generate: mode needs " + std::to_string(arity) + " image(s), got " +
                                std::to_string(images.size()));
  }
  const std::size_t batch = images[0].batch();
  if (arity == 2 && images[1].batch() != batch) throw std::invalid_argument("generate: image batches differ");
  if (!options.greedy && !(options.top_p > 0.0 && options.top_p <= 1.0)) {
    throw std::invalid_argument("nucleus p must be in (0, 1]");
  }
  NoGradScope<T> no_grad;
  std::mt19937_64 rng(options.seed);
  const std::size_t steps = std::min(options.max_len, config_.max_text_len - 1);
  std::vector<std::vector<int>> prefixes(batch, std::vector<int>{kBos});
  std::vector<std::vector<int>> out(batch);
  std::vector<bool> done(batch, false);
  const std::size_t vocab = config_.vocab_size;
  for (std::size_t step = 0; step < steps; ++step) {
    const TextBatch text = TextBatch::from_prefixes(prefixes, config_.max_text_len);
    Tensor<T> h = text_hidden(text, mode);
    h = multimodal_hidden(h, text, images[0].tokens, arity == 2 ? &images[1].tokens : nullptr);
    std::vector<std::size_t> last(batch);
    for (std::size_t b = 0; b < batch; ++b) last[b] = b * (text.len + 1) + text.len;
    Tensor<T> rows = gather_rows(reshape(h, Shape{batch * (text.len + 1), config_.width}),
                                 std::span<const std::size_t>(last));
    Tensor<T> logits = lm_head_(rows);
    const auto ld = logits.data();
    bool all_done = true;
    for (std::size_t b = 0; b < batch; ++b) {
      if (done[b]) {
        prefixes[b].push_back(kPad);
        continue;
      }
      double best = -INFINITY;
      for (std::size_t v = 0; v < vocab; ++v)
        if (!is_forbidden_output(static_cast<int>(v))) best = std::max(best, static_cast<double>(ld[b * vocab + v]));
      std::vector<double> probs(vocab, 0.0);
      double total = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) {
        if (is_forbidden_output(static_cast<int>(v))) continue;
        probs[v] = std::exp(static_cast<double>(ld[b * vocab + v]) - best);
        total += probs[v];
      }
      for (double& p : probs) p /= total;
      int chosen = 0;
      if (options.greedy) {
        chosen = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      } else {
        const std::vector<double> filtered = nucleus_filter(probs, options.top_p);
        const double u = uniform01(rng);
        double acc = 0.0;
        chosen = -1;
        for (std::size_t v = 0; v < vocab; ++v) {
          if (filtered[v] <= 0.0) continue;
          acc += filtered[v];
          chosen = static_cast<int>(v);
          if (u < acc) break;
        }
      }
      out[b].push_back(chosen);
      prefixes[b].push_back(chosen);
      if (chosen == kEos) done[b] = true;
      all_done = all_done && done[b];
    }
    if (all_done) break;
  }
  return out;
}

template struct ImageEncoding<float>;
template struct ImageEncoding<double>;
template class FadVlpModel<float>;
template class FadVlpModel<double>;

}  // namespace fadvlp
