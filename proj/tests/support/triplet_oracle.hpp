#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fadvlp/corpus.hpp"
#include "fadvlp/vocab.hpp"

namespace fadvlp::testing {

// Exhaustive reference for target selection, written against the raw
// captions: its own frequency count, its own POS filter, its own cosine.
struct BruteForce {
  const Corpus& corpus;
  std::map<std::string, std::size_t> freq;
  std::size_t threshold;
  LexiconTagger tagger;

  BruteForce(const Corpus& c, std::size_t thr) : corpus(c), threshold(thr), tagger(c.schema.tagger()) {
    for (const auto& item : c.items)
      for (const auto& w : tokenize(item.caption))
        if (w != ".") ++freq[w];
  }

  std::vector<std::set<std::string>> attribute_sets(std::size_t id) const {
    std::vector<std::set<std::string>> out(1);
    for (const auto& w : tokenize(corpus.items[id].caption)) {
      if (w == ".") {
        out.emplace_back();
        continue;
      }
      const auto tag = tagger.tag({w}).front().tag;
      const bool pos_ok = tag == PosTag::kNoun || tag == PosTag::kAdjective || tag == PosTag::kParticiple;
      if (pos_ok && freq.at(w) >= threshold) out.back().insert(w);
    }
    if (tokenize(corpus.items[id].caption).back() == ".") out.pop_back();  // nothing after the last stop
    return out;
  }

  static double cos(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
    return d / std::sqrt(na * nb);
  }

  std::optional<std::size_t> argmin(std::size_t ref) const {
    const auto rs = attribute_sets(ref);
    const auto img_r = oracle_image_features(corpus.schema, corpus.items[ref].attributes);
    const auto txt_r = oracle_text_features(corpus.schema, corpus.items[ref].caption);
    std::optional<std::size_t> best;
    double best_score = 1e300;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j == ref) continue;
      const auto js = attribute_sets(j);
      if (js == rs) continue;
      std::size_t d = 0;
      for (const auto& w : rs[0]) d += js[0].count(w) == 0;
      for (const auto& w : js[0]) d += rs[0].count(w) == 0;
      const double score = -cos(img_r, oracle_image_features(corpus.schema, corpus.items[j].attributes)) -
                           cos(txt_r, oracle_text_features(corpus.schema, corpus.items[j].caption)) +
                           static_cast<double>(d) / 16.0;
      if (score < best_score) best_score = score, best = j;  // strict: earliest id wins ties
    }
    return best;
  }
};

}  // namespace fadvlp::testing
