#pragma once

#include <map>
#include <string>
#include <vector>

namespace fadvlp {

enum class PosTag { kNoun, kAdjective, kParticiple, kDeterminer, kPronoun, kVerb, kAdposition, kPunct, kOther };

const char* pos_tag_name(PosTag tag);
PosTag pos_tag_from_name(const std::string& name);  // throws on unknown names

struct TaggedToken {
  std::string text;
  PosTag tag = PosTag::kOther;
  bool operator==(const TaggedToken&) const = default;
};

using TaggedSentence = std::vector<TaggedToken>;

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual TaggedSentence tag(const std::vector<std::string>& tokens) const = 0;
};

// Word -> tag lookup; words outside the lexicon get kOther.
class LexiconTagger : public PosTagger {
 public:
  explicit LexiconTagger(std::map<std::string, PosTag> lexicon) : lexicon_(std::move(lexicon)) {}
  TaggedSentence tag(const std::vector<std::string>& tokens) const override;
  const std::map<std::string, PosTag>& lexicon() const { return lexicon_; }

 private:
  std::map<std::string, PosTag> lexicon_;
};

// Splits lowercased whitespace tokens into sentences at "." tokens; the "."
// itself is dropped.
std::vector<std::vector<std::string>> split_sentences(const std::string& text);

}  // namespace fadvlp
