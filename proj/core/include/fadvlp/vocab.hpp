#pragma once

// Word-level vocabulary. Ids 0..6 are reserved for the special tokens; words
// follow in the order given at construction.

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fadvlp {

enum SpecialToken : int {
  kPad = 0,
  kBos = 1,
  kEos = 2,
  kUnk = 3,
  kAlignToken = 4,
  kRelCapToken = 5,
  kFuseToken = 6,
  kNumSpecialTokens = 7,
};

// Lowercases and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  // Duplicates and special spellings are ignored.
  explicit Vocabulary(const std::vector<std::string>& words);

  // Sorted, de-duplicated words from the tokenized texts.
  static Vocabulary from_texts(const std::vector<std::string>& texts);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view word) const;  // kUnk when absent
  std::optional<int> find(std::string_view word) const;
  const std::string& token(int id) const;
  // Non-special tokens in id order.
  std::vector<std::string> words() const;

  // [BOS] w1 .. wn [EOS]
  std::vector<int> encode(std::string_view text) const;
  // Drops specials; stops at the first [EOS].
  std::string decode(const std::vector<int>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

bool is_special(int id);

}  // namespace fadvlp
