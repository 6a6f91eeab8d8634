#include "fadvlp/objectives.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace fadvlp {
namespace {

template <typename T>
void require_contrastive_batch(const Tensor<T>& sim, const char* what) {
  if (sim.rank() != 2 || sim.dim(0) != sim.dim(1)) {
    throw DimensionError(std::string(what) + ": similarity must be square, got " + shape_str(sim.shape()));
  }
  if (sim.dim(0) < 2) throw std::invalid_argument(std::string(what) + ": batch size must be at least 2");
}

std::vector<int> diagonal_targets(std::size_t n) {
  std::vector<int> t(n);
  std::iota(t.begin(), t.end(), 0);
  return t;
}

}  // namespace

template <typename T>
Tensor<T> cmc_from_similarity(const Tensor<T>& sim) {
  require_contrastive_batch(sim, "cmc");
  const auto targets = diagonal_targets(sim.dim(0));
  Tensor<T> i2t = cross_entropy_with_logits(sim, std::span<const int>(targets), -1);
  Tensor<T> t2i = cross_entropy_with_logits(transpose(sim), std::span<const int>(targets), -1);
  return add(i2t, t2i);
}

template <typename T>
Tensor<T> hmc_from_similarity(const Tensor<T>& sim) {
  require_contrastive_batch(sim, "hmc");
  const auto targets = diagonal_targets(sim.dim(0));
  return cross_entropy_with_logits(sim, std::span<const int>(targets), -1);
}

template <typename T>
Tensor<T> lm_loss(const Tensor<T>& logits, const TextBatch& text, LmNormalization norm) {
  if (logits.rank() != 3 || logits.dim(0) != text.batch || logits.dim(1) != text.len) {
    throw DimensionError("lm_loss: logits " + shape_str(logits.shape()) + " do not match text batch");
  }
  const auto targets = FadVlpModel<T>::lm_targets(text);
  Tensor<T> mean_nll = cross_entropy_with_logits(logits, std::span<const int>(targets), kPad);
  if (norm == LmNormalization::kPerTokenMean) return mean_nll;
  const double count = static_cast<double>(text.target_count());
  return scale(mean_nll, T(count / static_cast<double>(text.batch)));
}

template <typename T>
Tensor<T> cmc_loss(const FadVlpModel<T>& model, const PairBatch<T>& batch) {
  const auto enc = model.encode_images(batch.images);
  Tensor<T> t = model.encode_text(batch.captions, Mode::kAlign);
  return cmc_from_similarity(model.similarity(model.embed_image(enc.pooled), model.embed_text(t)));
}

template <typename T>
Tensor<T> iclm_loss(const FadVlpModel<T>& model, const PairBatch<T>& batch, LmNormalization norm) {
  const auto enc = model.encode_images(batch.images);
  return lm_loss(model.caption_logits(batch.captions, enc), batch.captions, norm);
}

template <typename T>
Tensor<T> hmc_loss(const FadVlpModel<T>& model, const TripletBatch<T>& batch) {
  const auto ref = model.encode_images(batch.ref_images);
  const auto tgt = model.encode_images(batch.tgt_images);
  Tensor<T> m = model.fuse(ref, batch.relative);
  return hmc_from_similarity(model.similarity(model.embed_fused(m), model.embed_image(tgt.pooled)));
}

template <typename T>
Tensor<T> rclm_loss(const FadVlpModel<T>& model, const TripletBatch<T>& batch, LmNormalization norm) {
  const auto ref = model.encode_images(batch.ref_images);
  const auto tgt = model.encode_images(batch.tgt_images);
  return lm_loss(model.relative_caption_logits(batch.relative, ref, tgt), batch.relative, norm);
}

template <typename T>
StageLoss<T> stage_loss(const FadVlpModel<T>& model, int stage, const PairBatch<T>& pairs,
                        const TripletBatch<T>* triplets, const LossWeights& weights, DropoutContext dropout) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  if (stage == 2) {
    if (triplets == nullptr) throw std::invalid_argument("stage 2 needs a triplet batch");
    if (triplets->ref_ids != pairs.ids) {
      throw std::invalid_argument("stage 2 triplet references must match the pair batch items");
    }
  }
  StageLoss<T> out;
  const auto enc = model.encode_images(pairs.images);
  Tensor<T> th = model.text_hidden(pairs.captions, Mode::kAlign, dropout);
  Tensor<T> t = model.pool_eos(th, pairs.captions);
  Tensor<T> cmc = cmc_from_similarity(model.similarity(model.embed_image(enc.pooled), model.embed_text(t)));
  Tensor<T> mh = model.multimodal_hidden(th, pairs.captions, enc.tokens, nullptr, dropout);
  Tensor<T> iclm = lm_loss(model.lm_logits(mh), pairs.captions, weights.lm_normalization);
  out.parts.cmc = static_cast<double>(cmc.item());
  out.parts.iclm = static_cast<double>(iclm.item());
  out.total = add(scale(cmc, T(weights.cmc)), scale(iclm, T(weights.iclm)));
  if (stage == 2) {
    const auto tgt = model.encode_images(triplets->tgt_images);
    Tensor<T> fused = model.pool_eos(
        model.multimodal_hidden(model.text_hidden(triplets->relative, Mode::kFuse, dropout), triplets->relative,
                                enc.tokens, nullptr, dropout),
        triplets->relative);
    Tensor<T> hmc = hmc_from_similarity(model.similarity(model.embed_fused(fused), model.embed_image(tgt.pooled)));
    Tensor<T> rh = model.multimodal_hidden(model.text_hidden(triplets->relative, Mode::kRelativeCaption, dropout),
                                           triplets->relative, enc.tokens, &tgt.tokens, dropout);
    Tensor<T> rclm = lm_loss(model.lm_logits(rh), triplets->relative, weights.lm_normalization);
    out.parts.hmc = static_cast<double>(hmc.item());
    out.parts.rclm = static_cast<double>(rclm.item());
    out.total = add(out.total, add(scale(hmc, T(weights.hmc)), scale(rclm, T(weights.rclm))));
  }
  out.parts.total = static_cast<double>(out.total.item());
  return out;
}

std::string loss_csv_header() { return "step,cmc,iclm,hmc,rclm,total"; }

std::string loss_csv_row(std::size_t step, const LossBreakdown& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", step, p.cmc, p.iclm, p.hmc, p.rclm, p.total);
  return buf;
}

#define FADVLP_INSTANTIATE_OBJECTIVES(T)                                                               \
  template Tensor<T> cmc_from_similarity(const Tensor<T>&);                                            \
  template Tensor<T> hmc_from_similarity(const Tensor<T>&);                                            \
  template Tensor<T> lm_loss(const Tensor<T>&, const TextBatch&, LmNormalization);                     \
  template Tensor<T> cmc_loss(const FadVlpModel<T>&, const PairBatch<T>&);                             \
  template Tensor<T> iclm_loss(const FadVlpModel<T>&, const PairBatch<T>&, LmNormalization);           \
  template Tensor<T> hmc_loss(const FadVlpModel<T>&, const TripletBatch<T>&);                          \
  template Tensor<T> rclm_loss(const FadVlpModel<T>&, const TripletBatch<T>&, LmNormalization);        \
  template StageLoss<T> stage_loss(const FadVlpModel<T>&, int, const PairBatch<T>&, const TripletBatch<T>*, \
                                   const LossWeights&, DropoutContext);

FADVLP_INSTANTIATE_OBJECTIVES(float)
FADVLP_INSTANTIATE_OBJECTIVES(double)

#undef FADVLP_INSTANTIATE_OBJECTIVES

}  // namespace fadvlp
