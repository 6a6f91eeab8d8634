#include "fadvlp/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fadvlp {
namespace {

const std::vector<std::string> kSpecialSpellings = {"[PAD]",   "[BOS]",    "[EOS]", "[UNK]",
                                                    "[ALIGN]", "[RELCAP]", "[FUSE]"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : tokens_(kSpecialSpellings) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  for (const std::string& w : words) {
    if (w.empty() || index_.count(w)) continue;
    index_.emplace(w, static_cast<int>(tokens_.size()));
    tokens_.push_back(w);
  }
}

Vocabulary Vocabulary::from_texts(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const std::string& t : texts)
    for (std::string& w : tokenize(t)) words.insert(std::move(w));
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view word) const { return find(word).value_or(kUnk); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return std::vector<std::string>(tokens_.begin() + kNumSpecialTokens, tokens_.end());
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids{kBos};
  for (const std::string& w : tokenize(text)) ids.push_back(id(w));
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

bool is_special(int id) { return id >= 0 && id < kNumSpecialTokens; }

}  // namespace fadvlp
