#include "fadvlp/tagger.hpp"

#include <stdexcept>

#include "fadvlp/vocab.hpp"

namespace fadvlp {
namespace {

constexpr const char* kTagNames[] = {"noun",    "adjective", "participle", "determiner", "pronoun",
                                     "verb",    "adposition", "punct",     "other"};

}  // namespace

const char* pos_tag_name(PosTag tag) { return kTagNames[static_cast<int>(tag)]; }

PosTag pos_tag_from_name(const std::string& name) {
  for (int i = 0; i < 9; ++i)
    if (name == kTagNames[i]) return static_cast<PosTag>(i);
  throw std::invalid_argument("unknown part-of-speech tag '" + name + "'");
}

TaggedSentence LexiconTagger::tag(const std::vector<std::string>& tokens) const {
  TaggedSentence out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) {
    auto it = lexicon_.find(t);
    out.push_back(TaggedToken{t, it == lexicon_.end() ? PosTag::kOther : it->second});
  }
  return out;
}

std::vector<std::vector<std::string>> split_sentences(const std::string& text) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;
  for (std::string& tok : tokenize(text)) {
    if (tok == ".") {
      if (!current.empty()) sentences.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(tok));
    }
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

}  // namespace fadvlp
