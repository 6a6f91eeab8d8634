#pragma once

// Weakly-supervised (reference, relative caption, target) construction from
// image-text pairs: target selection by a feature/attribute score, attribute
// filtering, overlap removal and template filling.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fadvlp/corpus.hpp"
#include "fadvlp/tagger.hpp"

namespace fadvlp {

struct CatalogEntry {
  std::size_t id = 0;
  std::vector<TaggedSentence> sentences;
  std::vector<double> image_features;  // unit norm
  std::vector<double> text_features;   // unit norm
  std::string category;
  std::string subcategory;
};

// Features come from the item's stored vectors when present, otherwise from
// the oracle attribute encodings; sentences come from stored tags, otherwise
// from the given tagger.
std::vector<CatalogEntry> make_catalog(const Corpus& corpus, const PosTagger& tagger);

struct DeltaWeights {
  double image = 1.0;
  double text = 1.0;
  double tokens = 1.0 / 16.0;
};

class AttributeVocabulary {
 public:
  AttributeVocabulary() = default;
  AttributeVocabulary(std::map<std::string, std::size_t> frequency, std::size_t threshold)
      : frequency_(std::move(frequency)), threshold_(threshold) {}

  // Token occurrence counts over every sentence of every entry.
  static AttributeVocabulary build(const std::vector<CatalogEntry>& entries, std::size_t threshold);

  bool is_attribute(const std::string& token) const;
  std::size_t threshold() const { return threshold_; }
  const std::map<std::string, std::size_t>& frequency() const { return frequency_; }

 private:
  std::map<std::string, std::size_t> frequency_;
  std::size_t threshold_ = 0;
};

// max(2, round(500 * n / 1.4e6)): the 500-occurrence cut-off for 1.4M pairs,
// scaled to the corpus size.
std::size_t scaled_frequency_threshold(std::size_t corpus_size);

using TokenList = std::vector<std::string>;

// nullopt once sentence_index runs past the caption.
std::optional<TaggedSentence> first_sentence(const CatalogEntry& entry, std::size_t sentence_index);
// Nouns, adjectives and participles at or above the frequency threshold,
// lowercased, first occurrence kept, in sentence order.
TokenList filter_attribute_tokens(const TaggedSentence& sentence, const AttributeVocabulary& vocab);
// Size of the symmetric difference of the two token sets.
std::size_t hamming_distance(const TokenList& a, const TokenList& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

double delta_score(double cos_image, double cos_text, std::size_t token_distance, const DeltaWeights& w);
// -w.image*cos(img) - w.text*cos(txt) + w.tokens*d on the given sentence.
double delta(const CatalogEntry& a, const CatalogEntry& b, const DeltaWeights& w, const AttributeVocabulary& vocab,
             std::size_t sentence_index = 0);

// Tokens present in both lists are dropped from both; order is kept.
std::pair<TokenList, TokenList> remove_overlap(const TokenList& ref, const TokenList& tgt);

inline constexpr std::size_t kTemplateCount = 4;
// Template id in [0, 4): "modify <r> to be <t>", "<t> instead of <r>",
// "change <r> to <t>", "replace <r> with <t>". Empty slots render as empty
// strings and runs of spaces collapse to one.
std::string render_template(std::size_t template_id, const TokenList& ref, const TokenList& tgt);

struct FilledTemplate {
  std::string text;
  std::size_t template_id = 0;
};
// Uniformly chosen template; throws if both lists are empty.
FilledTemplate fill_template(const TokenList& ref, const TokenList& tgt, std::mt19937_64& rng);

struct PseudoTriplet {
  std::size_t ref_id = 0;
  std::size_t tgt_id = 0;
  std::string relative_caption;
  std::size_t template_id = 0;
  std::size_t sentence_index = 0;
  bool operator==(const PseudoTriplet&) const = default;
};

struct TripletConfig {
  std::size_t sample_size = 1000;
  DeltaWeights weights;
  std::uint64_t seed = 0;
};

// Precomputed filtered tokens of every sentence of every entry.
class TripletIndex {
 public:
  TripletIndex(const std::vector<CatalogEntry>& entries, AttributeVocabulary vocab);

  const std::vector<CatalogEntry>& entries() const { return *entries_; }
  const AttributeVocabulary& vocab() const { return vocab_; }
  // Empty list for sentences past the end of the caption.
  const TokenList& tokens(std::size_t entry, std::size_t sentence) const;
  std::size_t sentence_count(std::size_t entry) const { return tokens_[entry].size(); }
  // True when every sentence filters to the same token set on both entries.
  bool indistinguishable(std::size_t a, std::size_t b) const;
  double delta(std::size_t a, std::size_t b, const DeltaWeights& w) const;

 private:
  const std::vector<CatalogEntry>* entries_;
  AttributeVocabulary vocab_;
  std::vector<std::vector<TokenList>> tokens_;
  TokenList empty_;
};

// Argmin of delta over a without-replacement sample of the eligible entries
// (everything except the reference and entries indistinguishable from it);
// ties go to the smaller id. nullopt when nothing is eligible.
std::optional<std::size_t> select_target(const TripletIndex& index, std::size_t ref, std::size_t sample_size,
                                         const DeltaWeights& w, std::mt19937_64& rng);

struct BuildOutcome {
  std::optional<PseudoTriplet> triplet;
  bool fallback_used = false;
};

// Selects a target, then walks sentences from index 0 until the
// overlap-removed lists are not both empty; skips once sentences run out.
BuildOutcome build_triplet(const TripletIndex& index, std::size_t ref, const TripletConfig& cfg,
                           std::mt19937_64& rng);

struct TripletStats {
  std::size_t built = 0;
  std::size_t skipped = 0;
  std::size_t fallback_used = 0;
};

struct TripletDataset {
  std::vector<PseudoTriplet> triplets;  // ordered by ref_id
  TripletStats stats;
  std::size_t threshold = 0;
};

// One attempt per entry with per-entry rng seeded by (seed XOR id).
// threshold 0 selects scaled_frequency_threshold(entries.size()).
TripletDataset build_triplet_dataset(const std::vector<CatalogEntry>& entries, const TripletConfig& cfg,
                                     std::size_t threshold = 0);

std::string triplets_to_jsonl(const std::vector<PseudoTriplet>& triplets);
std::vector<PseudoTriplet> triplets_from_jsonl(const std::string& text);
void save_triplets(const std::string& path, const std::vector<PseudoTriplet>& triplets);
std::vector<PseudoTriplet> load_triplets(const std::string& path);
std::string triplet_stats_json(const TripletDataset& dataset, const TripletConfig& cfg);

}  // namespace fadvlp
