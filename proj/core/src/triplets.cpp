#include "fadvlp/triplets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fadvlp/random.hpp"
#include "json.hpp"

namespace fadvlp {

using Json = nlohmann::ordered_json;

std::vector<CatalogEntry> make_catalog(const Corpus& corpus, const PosTagger& tagger) {
  std::vector<CatalogEntry> entries;
  entries.reserve(corpus.size());
  for (const CorpusItem& item : corpus.items) {
    CatalogEntry e;
    e.id = item.id;
    if (!item.tagged_sentences.empty()) {
      e.sentences = item.tagged_sentences;
    } else {
      for (const auto& s : split_sentences(item.caption)) e.sentences.push_back(tagger.tag(s));
    }
    if (!item.image_features.empty()) {
      e.image_features = item.image_features;
    } else if (!item.attributes.empty()) {
      e.image_features = oracle_image_features(corpus.schema, item.attributes);
    }
    e.text_features = item.text_features.empty() ? oracle_text_features(corpus.schema, item.caption)
                                                 : item.text_features;
    if (e.image_features.empty()) {
      throw std::invalid_argument("item " + std::to_string(item.id) + " has no image features");
    }
    e.category = item.category;
    e.subcategory = item.subcategory;
    entries.push_back(std::move(e));
  }
  return entries;
}

AttributeVocabulary AttributeVocabulary::build(const std::vector<CatalogEntry>& entries, std::size_t threshold) {
  std::map<std::string, std::size_t> freq;
  for (const auto& e : entries)
    for (const auto& s : e.sentences)
      for (const auto& t : s) ++freq[t.text];
  return AttributeVocabulary(std::move(freq), threshold);
}

bool AttributeVocabulary::is_attribute(const std::string& token) const {
  auto it = frequency_.find(token);
  return it != frequency_.end() && it->second >= threshold_;
}

std::size_t scaled_frequency_threshold(std::size_t corpus_size) {
  const auto scaled = std::llround(500.0 * static_cast<double>(corpus_size) / 1.4e6);
  return static_cast<std::size_t>(std::max<long long>(2, scaled));
}

std::optional<TaggedSentence> first_sentence(const CatalogEntry& entry, std::size_t sentence_index) {
  if (sentence_index >= entry.sentences.size()) return std::nullopt;
  return entry.sentences[sentence_index];
}

TokenList filter_attribute_tokens(const TaggedSentence& sentence, const AttributeVocabulary& vocab) {
  TokenList out;
  for (const TaggedToken& t : sentence) {
    if (t.tag != PosTag::kNoun && t.tag != PosTag::kAdjective && t.tag != PosTag::kParticiple) continue;
    std::string lower = t.text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!vocab.is_attribute(lower)) continue;
    if (std::find(out.begin(), out.end(), lower) != out.end()) continue;
    out.push_back(std::move(lower));
  }
  return out;
}

std::size_t hamming_distance(const TokenList& a, const TokenList& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  std::size_t d = 0;
  for (const auto& t : sa) d += sb.count(t) == 0;
  for (const auto& t : sb) d += sa.count(t) == 0;
  return d;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: feature sizes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

double delta_score(double cos_image, double cos_text, std::size_t token_distance, const DeltaWeights& w) {
  return -w.image * cos_image - w.text * cos_text + w.tokens * static_cast<double>(token_distance);
}

double delta(const CatalogEntry& a, const CatalogEntry& b, const DeltaWeights& w, const AttributeVocabulary& vocab,
             std::size_t sentence_index) {
  auto tokens = [&](const CatalogEntry& e) {
    auto s = first_sentence(e, sentence_index);
    return s ? filter_attribute_tokens(*s, vocab) : TokenList{};
  };
  return delta_score(cosine(a.image_features, b.image_features), cosine(a.text_features, b.text_features),
                     hamming_distance(tokens(a), tokens(b)), w);
}

std::pair<TokenList, TokenList> remove_overlap(const TokenList& ref, const TokenList& tgt) {
  TokenList r, t;
  for (const auto& x : ref)
    if (std::find(tgt.begin(), tgt.end(), x) == tgt.end()) r.push_back(x);
  for (const auto& x : tgt)
    if (std::find(ref.begin(), ref.end(), x) == ref.end()) t.push_back(x);
  return {r, t};
}

namespace {

std::string join(const TokenList& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::string collapse_spaces(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string render_template(std::size_t template_id, const TokenList& ref, const TokenList& tgt) {
  const std::string r = join(ref);
  const std::string t = join(tgt);
  std::string s;
  switch (template_id) {
    case 0:
      s = "modify " + r + " to be " + t;
      break;
    case 1:
      s = t + " instead of " + r;
      break;
    case 2:
      s = "change " + r + " to " + t;
      break;
    case 3:
      s = "replace " + r + " with " + t;
      break;
    default:
      throw std::invalid_argument("template id must be below 4");
  }
  return collapse_spaces(s);
}

FilledTemplate fill_template(const TokenList& ref, const TokenList& tgt, std::mt19937_64& rng) {
  if (ref.empty() && tgt.empty()) throw std::logic_error("fill_template: both token lists are empty");
  FilledTemplate f;
  f.template_id = uniform_below(rng, kTemplateCount);
  f.text = render_template(f.template_id, ref, tgt);
  return f;
}

TripletIndex::TripletIndex(const std::vector<CatalogEntry>& entries, AttributeVocabulary vocab)
    : entries_(&entries), vocab_(std::move(vocab)) {
  tokens_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id != i) throw std::invalid_argument("catalog ids must be 0..n-1 in order");
    std::vector<TokenList> per_sentence;
    for (const auto& s : entries[i].sentences) {
      TokenList t = filter_attribute_tokens(s, vocab_);
      std::sort(t.begin(), t.end());
      per_sentence.push_back(std::move(t));
    }
    tokens_.push_back(std::move(per_sentence));
  }
}

const TokenList& TripletIndex::tokens(std::size_t entry, std::size_t sentence) const {
  const auto& s = tokens_.at(entry);
  return sentence < s.size() ? s[sentence] : empty_;
}

bool TripletIndex::indistinguishable(std::size_t a, std::size_t b) const {
  const std::size_t n = std::max(sentence_count(a), sentence_count(b));
  for (std::size_t k = 0; k < n; ++k)
    if (tokens(a, k) != tokens(b, k)) return false;  // both sorted and deduplicated
  return true;
}

double TripletIndex::delta(std::size_t a, std::size_t b, const DeltaWeights& w) const {
  const auto& ea = (*entries_)[a];
  const auto& eb = (*entries_)[b];
  return delta_score(cosine(ea.image_features, eb.image_features), cosine(ea.text_features, eb.text_features),
                     hamming_distance(tokens(a, 0), tokens(b, 0)), w);
}

std::optional<std::size_t> select_target(const TripletIndex& index, std::size_t ref, std::size_t sample_size,
                                         const DeltaWeights& w, std::mt19937_64& rng) {
  const std::size_t n = index.entries().size();
  if (ref >= n) throw std::out_of_range("reference id outside the catalogue");
  std::vector<std::size_t> eligible;
  eligible.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    if (j != ref && !index.indistinguishable(ref, j)) eligible.push_back(j);
  if (eligible.empty()) return std::nullopt;
  const auto picks = sample_without_replacement(eligible.size(), sample_size, rng);
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t p : picks) {
    const std::size_t j = eligible[p];
    const double score = index.delta(ref, j, w);
    if (!best || score < best_score || (score == best_score && j < *best)) {
      best = j;
      best_score = score;
    }
  }
  return best;
}

BuildOutcome build_triplet(const TripletIndex& index, std::size_t ref, const TripletConfig& cfg,
                           std::mt19937_64& rng) {
  BuildOutcome out;
  const auto target = select_target(index, ref, cfg.sample_size, cfg.weights, rng);
  if (!target) return out;
  const auto& entries = index.entries();
  for (std::size_t k = 0;; ++k) {
    const auto rs = first_sentence(entries[ref], k);
    const auto ts = first_sentence(entries[*target], k);
    if (!rs || !ts) return out;
    auto [r, t] = remove_overlap(filter_attribute_tokens(*rs, index.vocab()),
                                 filter_attribute_tokens(*ts, index.vocab()));
    if (r.empty() && t.empty()) {
      out.fallback_used = true;
      continue;
    }
    const FilledTemplate filled = fill_template(r, t, rng);
    out.triplet = PseudoTriplet{ref, *target, filled.text, filled.template_id, k};
    return out;
  }
}

TripletDataset build_triplet_dataset(const std::vector<CatalogEntry>& entries, const TripletConfig& cfg,
                                     std::size_t threshold) {
  TripletDataset ds;
  ds.threshold = threshold == 0 ? scaled_frequency_threshold(entries.size()) : threshold;
  const TripletIndex index(entries, AttributeVocabulary::build(entries, ds.threshold));
  for (std::size_t id = 0; id < entries.size(); ++id) {
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(id));
    const BuildOutcome outcome = build_triplet(index, id, cfg, rng);
    if (outcome.triplet) {
      ds.triplets.push_back(*outcome.triplet);
      ++ds.stats.built;
      ds.stats.fallback_used += outcome.fallback_used;
    } else {
      ++ds.stats.skipped;
    }
  }
  return ds;
}

std::string triplets_to_jsonl(const std::vector<PseudoTriplet>& triplets) {
  std::string out;
  for (const auto& t : triplets) {
    Json j;
    j["ref_id"] = t.ref_id;
    j["tgt_id"] = t.tgt_id;
    j["relative_caption"] = t.relative_caption;
    j["template_id"] = t.template_id;
    j["sentence_index"] = t.sentence_index;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PseudoTriplet> triplets_from_jsonl(const std::string& text) {
  std::vector<PseudoTriplet> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      PseudoTriplet t;
      t.ref_id = j.at("ref_id").get<std::size_t>();
      t.tgt_id = j.at("tgt_id").get<std::size_t>();
      t.relative_caption = j.at("relative_caption").get<std::string>();
      t.template_id = j.value("template_id", std::size_t{0});
      t.sentence_index = j.value("sentence_index", std::size_t{0});
      if (t.ref_id == t.tgt_id) throw std::invalid_argument("ref_id equals tgt_id");
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw CorpusFormatError("triplet line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_triplets(const std::string& path, const std::vector<PseudoTriplet>& triplets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << triplets_to_jsonl(triplets);
}

std::vector<PseudoTriplet> load_triplets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return triplets_from_jsonl(buf.str());
}

std::string triplet_stats_json(const TripletDataset& ds, const TripletConfig& cfg) {
  Json j;
  j["built"] = ds.stats.built;
  j["skipped"] = ds.stats.skipped;
  j["fallback_used"] = ds.stats.fallback_used;
  j["frequency_threshold"] = ds.threshold;
  j["sample_size"] = cfg.sample_size;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

}  // namespace fadvlp
