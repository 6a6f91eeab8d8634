#pragma once

// Contrastive (CMC, HMC) and language-modeling (ICLM, RCLM) objectives.

#include <string>
#include <vector>

#include "fadvlp/model.hpp"

namespace fadvlp {

// B images aligned with B captions.
template <typename T>
struct PairBatch {
  std::vector<std::size_t> ids;  // corpus ids, for bookkeeping
  Tensor<T> images;              // [B, H, W, C]
  TextBatch captions;
};

// B (reference, relative caption, target) rows.
template <typename T>
struct TripletBatch {
  std::vector<std::size_t> ref_ids;
  std::vector<std::size_t> tgt_ids;
  Tensor<T> ref_images;
  TextBatch relative;
  Tensor<T> tgt_images;
};

enum class LmNormalization {
  kSumOverTokens,  // sum of token NLLs, averaged over the batch
  kPerTokenMean,
};

struct LossWeights {
  double cmc = 1.0;
  double iclm = 1.0;
  double hmc = 1.0;
  double rclm = 1.0;
  LmNormalization lm_normalization = LmNormalization::kSumOverTokens;
};

struct LossBreakdown {
  double cmc = 0.0;
  double iclm = 0.0;
  double hmc = 0.0;
  double rclm = 0.0;
  double total = 0.0;
};

// Bidirectional InfoNCE over a [B, B] similarity matrix whose diagonal holds
// the positives.
template <typename T>
Tensor<T> cmc_from_similarity(const Tensor<T>& sim);
// One-directional (rows) InfoNCE.
template <typename T>
Tensor<T> hmc_from_similarity(const Tensor<T>& sim);
// Caption likelihood loss from [B, L, V] logits; [PAD] targets ignored.
template <typename T>
Tensor<T> lm_loss(const Tensor<T>& logits, const TextBatch& text,
                  LmNormalization norm = LmNormalization::kSumOverTokens);

template <typename T>
Tensor<T> cmc_loss(const FadVlpModel<T>& model, const PairBatch<T>& batch);
template <typename T>
Tensor<T> iclm_loss(const FadVlpModel<T>& model, const PairBatch<T>& batch,
                    LmNormalization norm = LmNormalization::kSumOverTokens);
template <typename T>
Tensor<T> hmc_loss(const FadVlpModel<T>& model, const TripletBatch<T>& batch);
template <typename T>
Tensor<T> rclm_loss(const FadVlpModel<T>& model, const TripletBatch<T>& batch,
                    LmNormalization norm = LmNormalization::kSumOverTokens);

template <typename T>
struct StageLoss {
  Tensor<T> total;
  LossBreakdown parts;
};

// Stage 1: weighted CMC + ICLM. Stage 2 adds HMC + RCLM and requires a
// triplet batch whose references are the pair batch's items. Image
// encodings and the text-decoder pass are shared between the sub-losses.
template <typename T>
StageLoss<T> stage_loss(const FadVlpModel<T>& model, int stage, const PairBatch<T>& pairs,
                        const TripletBatch<T>* triplets, const LossWeights& weights = {},
                        DropoutContext dropout = {});

std::string loss_csv_header();
std::string loss_csv_row(std::size_t step, const LossBreakdown& parts);

}  // namespace fadvlp
