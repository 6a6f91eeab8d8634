#pragma once

// Synthetic fashion catalogue: attribute schema, deterministic image and
// caption rendering, JSON-lines corpus files and holdout splitting.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fadvlp/tagger.hpp"

namespace fadvlp {

struct AttributeAxis {
  std::string name;
  std::vector<std::string> values;
};

// Axes in caption order. "subcategory" values are globally unique and each
// belongs to exactly one category.
struct AttributeSchema {
  std::vector<AttributeAxis> axes;
  std::map<std::string, std::string> subcategory_parent;
  std::vector<std::string> openers;
  std::vector<std::string> fillers;  // sentence-2 tails without attribute words
  std::map<std::string, PosTag> lexicon;

  static AttributeSchema fashion_default();

  const AttributeAxis& axis(const std::string& name) const;
  std::vector<std::string> subcategories_of(const std::string& category) const;
  // Every word the caption grammar can emit.
  std::vector<std::string> grammar_words() const;
  // Closed lexicon covering the grammar.
  LexiconTagger tagger() const;
  // Total number of attribute values over all axes (oracle feature width).
  std::size_t value_count() const;
};

using Attributes = std::map<std::string, std::string>;

struct CorpusItem {
  std::size_t id = 0;
  Attributes attributes;  // empty for external records
  std::uint64_t seed = 0;
  std::string caption;
  std::string category;
  std::string subcategory;
  std::vector<double> image_features;  // optional precomputed vectors
  std::vector<double> text_features;
  std::vector<float> pixels;  // optional external image, side*side*3
  std::vector<TaggedSentence> tagged_sentences;  // optional; overrides the tagger

  bool operator==(const CorpusItem&) const = default;
};

struct Corpus {
  AttributeSchema schema;
  std::vector<CorpusItem> items;

  std::size_t size() const { return items.size(); }
  std::vector<std::string> categories() const;     // sorted, distinct
  std::vector<std::string> subcategories() const;  // sorted, distinct
};

class CorpusFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr double kDefaultNoise = 0.05;

// Items with attributes drawn uniformly per axis (subcategory within the
// drawn category) and per-item seeds from the master seed.
Corpus generate_corpus(const AttributeSchema& schema, std::size_t n, std::uint64_t master_seed);

// [side, side, 3] row-major floats in [0, 1] plus uniform noise of the given
// amplitude. Throws std::invalid_argument on unknown values.
std::vector<float> render_image(const AttributeSchema& schema, const Attributes& attrs, std::uint64_t seed,
                                double noise = kDefaultNoise);
// Two sentences, each terminated by " .".
std::string render_caption(const AttributeSchema& schema, const Attributes& attrs, std::uint64_t seed);

// Pixels for any item: rendered from attributes, or the stored external image.
std::vector<float> item_pixels(const AttributeSchema& schema, const CorpusItem& item);

// Unit-norm one-hot attribute encoding.
std::vector<double> oracle_image_features(const AttributeSchema& schema, const Attributes& attrs);
// Unit-norm bag of grammar words of the caption.
std::vector<double> oracle_text_features(const AttributeSchema& schema, const std::string& caption);

void save_corpus(const std::string& path, const Corpus& corpus);
// The schema is not stored in the file; records are validated against it.
Corpus load_corpus(const std::string& path, const AttributeSchema& schema);
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text, const AttributeSchema& schema);

struct HoldoutSplit {
  std::vector<std::size_t> train;    // ascending ids
  std::vector<std::size_t> holdout;  // ascending ids
};
// round(n * fraction) items held out.
HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed);

}  // namespace fadvlp
