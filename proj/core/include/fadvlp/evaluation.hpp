#pragma once

// Downstream evaluation: the 101-candidate cross-modal protocol, full-gallery
// IRTF ranking, classification metrics and caption metrics (BLEU-4, ROUGE-L,
// CIDEr-D).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fadvlp/trainer.hpp"
#include "fadvlp/triplets.hpp"

namespace fadvlp {

struct MetricsReport {
  std::string task;
  std::vector<std::pair<std::string, double>> metrics;     // in report order
  std::vector<std::pair<std::string, double>> protocol;    // numeric protocol parameters
  std::vector<std::string> notes;

  double at(const std::string& name) const;  // throws std::out_of_range
  void set(const std::string& name, double value);
  std::string to_json() const;
  std::string to_csv() const;
};

// 100 * fraction of queries whose gold id is within the first k entries.
double recall_at_k(const std::vector<std::vector<std::size_t>>& ranked, const std::vector<std::size_t>& gold,
                   std::size_t k);

// Row-major unit vectors, one row per corpus id.
struct Embeddings {
  std::size_t dim = 0;
  std::vector<float> rows;

  std::size_t size() const { return dim == 0 ? 0 : rows.size() / dim; }
  const float* row(std::size_t i) const { return rows.data() + i * dim; }
};

Embeddings random_unit_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed);

enum class Direction { kImageToText, kTextToImage };

struct CandidateProtocol {
  std::size_t candidates = 101;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks{1, 5, 10};
};

struct ItemLabels {
  std::vector<std::string> category;     // per corpus id
  std::vector<std::string> subcategory;  // per corpus id
  static ItemLabels from_corpus(const Corpus& corpus);
};

// Negatives for one query: same subcategory first, then same category, then
// anywhere, each tier sampled without replacement. Throws when the pool
// cannot supply candidates - 1 negatives.
std::vector<std::size_t> sample_negatives(std::size_t query, const ItemLabels& labels, std::size_t count,
                                          std::mt19937_64& rng);

// Ranks each query's true match (same id on the other side) against sampled
// negatives; R@K averaged over the repeats.
MetricsReport crossmodal_protocol(const Embeddings& images, const Embeddings& texts,
                                  const std::vector<std::size_t>& query_ids, const ItemLabels& labels,
                                  Direction direction, const CandidateProtocol& protocol, const std::string& task);

struct IrtfQuery {
  std::size_t ref_id = 0;
  std::size_t tgt_id = 0;
  std::string relative_caption;
  std::string group;  // reference category
};

// per_ref triplets per reference; the first uses (seed XOR id) like the
// dataset build, the others derived seeds. References without a usable
// target are skipped.
std::vector<PseudoTriplet> build_query_triplets(const TripletIndex& index, const std::vector<std::size_t>& refs,
                                                const TripletConfig& cfg, std::size_t per_ref);

// Full-gallery ranking of fused query embeddings against gallery image
// embeddings; the reference itself is left out of its own ranking. Reports
// R@K per group and their average.
MetricsReport irtf_rank(const Embeddings& fused, const Embeddings& gallery, const std::vector<IrtfQuery>& queries,
                        const std::vector<std::size_t>& ks, const std::string& task = "irtf");

// Accuracy in percent; macro-F1 in [0, 1] over all classes.
MetricsReport classification_report(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold,
                                    std::size_t class_count, const std::string& task);

struct CaptionScores {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;  // CIDEr-D on the usual x10 scale
  double sum = 0.0;    // 100*BLEU-4 + 100*ROUGE-L + 10*CIDEr
};

// Lowercased whitespace tokens with "." and "," dropped.
std::vector<std::string> caption_tokens(const std::string& text);

double corpus_bleu4(const std::vector<std::vector<std::string>>& hyps,
                    const std::vector<std::vector<std::vector<std::string>>>& refs);
double rouge_l(const std::vector<std::string>& hyp, const std::vector<std::vector<std::string>>& refs,
               double beta = 1.2);
double cider_d(const std::vector<std::vector<std::string>>& hyps,
               const std::vector<std::vector<std::vector<std::string>>>& refs, double sigma = 6.0);
CaptionScores caption_metrics(const std::vector<std::string>& hypotheses,
                              const std::vector<std::vector<std::string>>& references);
MetricsReport caption_report(const CaptionScores& scores, const std::string& task);

// Two captions joined the way relative-caption pairs are scored.
std::string join_pair(const std::string& first, const std::string& second);

// Model-facing helpers. All run without gradient tracking.
Embeddings image_embeddings(const FadVlpModel<float>& model, const TrainingData& data, std::size_t batch = 64);
Embeddings text_embeddings(const FadVlpModel<float>& model, const TrainingData& data, std::size_t batch = 64);
Embeddings fused_embeddings(const FadVlpModel<float>& model, const TrainingData& data,
                            const std::vector<IrtfQuery>& queries, std::size_t batch = 64);
std::vector<std::size_t> predict_classes(const FadVlpModel<float>& model, const ClassifierHead& head,
                                         const TrainingData& data, const std::vector<std::size_t>& ids,
                                         std::size_t batch = 64);
// Greedy captions for the given items.
std::vector<std::string> generate_captions(const FadVlpModel<float>& model, const TrainingData& data,
                                           const std::vector<std::size_t>& ids, std::size_t batch = 64);
// Nucleus relative captions for (ref, tgt) rows with one sampling seed.
std::vector<std::string> generate_relative_captions(const FadVlpModel<float>& model, const TrainingData& data,
                                                    const std::vector<std::pair<std::size_t, std::size_t>>& rows,
                                                    double top_p, std::uint64_t seed, std::size_t batch = 64);

// Second gold relative caption: the same token lists under another template.
std::string alternate_relative_caption(const TripletIndex& index, const PseudoTriplet& triplet);

}  // namespace fadvlp
