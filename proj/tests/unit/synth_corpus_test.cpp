#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "fadvlp/corpus.hpp"
#include "fadvlp/vocab.hpp"

using namespace fadvlp;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fadvlp_corpus_" + name);
}

Attributes sample_attributes() {
  return {{"category", "dress"}, {"subcategory", "gown"}, {"color", "red"},
          {"pattern", "floral"}, {"sleeve", "sleeveless"}, {"length", "midi"}};
}

std::size_t count_token(const std::string& caption, const std::string& word) {
  std::size_t n = 0;
  for (const auto& t : tokenize(caption)) n += t == word;
  return n;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const auto schema = AttributeSchema::fashion_default();
  CHECK(corpus_to_jsonl(generate_corpus(schema, 2, 7)) == corpus_to_jsonl(generate_corpus(schema, 2, 7)));
  CHECK(corpus_to_jsonl(generate_corpus(schema, 2, 7)) != corpus_to_jsonl(generate_corpus(schema, 2, 8)));
}

TEST_CASE("single-item corpus round-trips") {
  const auto schema = AttributeSchema::fashion_default();
  const Corpus c = generate_corpus(schema, 1, 3);
  REQUIRE(c.size() == 1);
  CHECK(c.items[0].id == 0);
  CHECK(corpus_from_jsonl(corpus_to_jsonl(c), schema).items == c.items);
}

TEST_CASE("2000 items cover every category and subcategory at least twice") {
  const auto schema = AttributeSchema::fashion_default();
  const Corpus c = generate_corpus(schema, 2000, 1234);
  std::map<std::string, int> subs;
  for (const auto& item : c.items) {
    ++subs[item.subcategory];
    CHECK(schema.subcategory_parent.at(item.subcategory) == item.category);
  }
  CHECK(c.categories().size() == schema.axis("category").values.size());
  CHECK(subs.size() == schema.axis("subcategory").values.size());
  for (const auto& [name, n] : subs) CHECK_MESSAGE(n >= 2, name);
}

TEST_CASE("regions are disjoint per attribute") {
  const auto schema = AttributeSchema::fashion_default();
  const auto base = sample_attributes();
  const auto a = render_image(schema, base, 5, 0.0);
  for (const auto& axis : schema.axes) {
    if (axis.name == "subcategory") continue;
    Attributes changed = base;
    for (const auto& v : axis.values) {
      if (v == base.at(axis.name)) continue;
      changed[axis.name] = v;
      break;
    }
    if (axis.name == "category") changed["subcategory"] = schema.subcategories_of(changed["category"]).front();
    const auto b = render_image(schema, changed, 5, 0.0);
    std::set<std::pair<std::size_t, std::size_t>> touched;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) touched.insert({i / (kImageSide * kImageChannels), (i / kImageChannels) % kImageSide});
    }
    CHECK_MESSAGE(!touched.empty(), axis.name);
    // Each axis owns a rectangle: rows/cols of changed pixels stay inside it.
    std::size_t r0 = 99, r1 = 0, c0 = 99, c1 = 0;
    for (auto [r, col] : touched) {
      r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, col), c1 = std::max(c1, col);
    }
    if (axis.name == "color") {
      CHECK(r0 >= 8);
      CHECK(r1 < 24);
      CHECK(c0 >= 8);
      CHECK(c1 < 24);
    } else if (axis.name == "pattern") {
      CHECK(r0 >= 8);
      CHECK(r1 < 24);
      CHECK(c1 < 8);
    } else if (axis.name == "sleeve") {
      CHECK(r0 >= 8);
      CHECK(r1 < 24);
      CHECK(c0 >= 24);
    } else if (axis.name == "length") {
      CHECK(r0 >= 24);
    } else if (axis.name == "category") {
      CHECK(r1 < 8);
    }
  }
}

TEST_CASE("subcategory change only touches the subcategory block") {
  const auto schema = AttributeSchema::fashion_default();
  auto base = sample_attributes();
  auto other = base;
  other["subcategory"] = "sundress";
  const auto a = render_image(schema, base, 5, 0.0);
  const auto b = render_image(schema, other, 5, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t row = i / (kImageSide * kImageChannels);
    const std::size_t col = (i / kImageChannels) % kImageSide;
    if (a[i] != b[i]) {
      CHECK(row < 8);
      CHECK(col >= 16);
    }
  }
}

TEST_CASE("noise is seeded and bounded") {
  const auto schema = AttributeSchema::fashion_default();
  const auto attrs = sample_attributes();
  const auto clean = render_image(schema, attrs, 9, 0.0);
  const auto n1 = render_image(schema, attrs, 9);
  const auto n2 = render_image(schema, attrs, 9);
  const auto n3 = render_image(schema, attrs, 10);
  CHECK(n1 == n2);
  CHECK(n1 != n3);
  REQUIRE(clean.size() == kImageSide * kImageSide * kImageChannels);
  for (std::size_t i = 0; i < clean.size(); ++i) CHECK(std::abs(n1[i] - clean[i]) <= 0.05f + 1e-6f);
}

TEST_CASE("unknown attribute value is rejected") {
  const auto schema = AttributeSchema::fashion_default();
  auto attrs = sample_attributes();
  attrs["color"] = "mauve";
  CHECK_THROWS_AS(render_image(schema, attrs, 1), std::invalid_argument);
  attrs = sample_attributes();
  attrs["subcategory"] = "jeans";  // belongs to pants
  CHECK_THROWS_AS(render_image(schema, attrs, 1), std::invalid_argument);
}

TEST_CASE("captions name every core attribute exactly once") {
  const auto schema = AttributeSchema::fashion_default();
  const Corpus c = generate_corpus(schema, 200, 77);
  for (const auto& item : c.items) {
    CHECK(item.caption == render_caption(schema, item.attributes, item.seed));
    CHECK(split_sentences(item.caption).size() == 2);
    for (const auto& [axis, value] : item.attributes) CHECK_MESSAGE(count_token(item.caption, value) == 1, value);
  }
}

TEST_CASE("attribute words are tagged as nouns, adjectives or participles") {
  const auto schema = AttributeSchema::fashion_default();
  const auto tagger = schema.tagger();
  for (const auto& axis : schema.axes) {
    for (const auto& v : axis.values) {
      const auto tag = tagger.tag({v}).front().tag;
      CHECK_MESSAGE((tag == PosTag::kNoun || tag == PosTag::kAdjective || tag == PosTag::kParticiple), v);
    }
  }
  for (const auto& w : schema.grammar_words()) CHECK_MESSAGE(tagger.lexicon().count(w) + (w == ".") >= 1, w);
}

TEST_CASE("corpus file round-trips") {
  const auto schema = AttributeSchema::fashion_default();
  const Corpus c = generate_corpus(schema, 50, 11);
  const auto path = temp_file("roundtrip.jsonl");
  save_corpus(path.string(), c);
  const Corpus back = load_corpus(path.string(), schema);
  CHECK(back.items == c.items);
  std::filesystem::remove(path);
}

TEST_CASE("truncated last line names the line") {
  const auto schema = AttributeSchema::fashion_default();
  std::string text = corpus_to_jsonl(generate_corpus(schema, 5, 11));
  text.resize(text.size() - 20);
  try {
    corpus_from_jsonl(text, schema);
    FAIL("expected a format error");
  } catch (const CorpusFormatError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("external records with precomputed features are accepted") {
  const auto schema = AttributeSchema::fashion_default();
  const std::string line =
      R"({"id":0,"caption":"a linen shirt . relaxed fit .","category":"top","subcategory":"shirt",)"
      R"("image_features":[0.6,0.8],"text_features":[1.0,0.0],)"
      R"("tagged_sentences":[[["a","determiner"],["linen","noun"],["shirt","noun"]],[["relaxed","participle"],["fit","noun"]]]})";
  const Corpus c = corpus_from_jsonl(line + "\n", schema);
  REQUIRE(c.size() == 1);
  CHECK(c.items[0].attributes.empty());
  CHECK(c.items[0].image_features == std::vector<double>{0.6, 0.8});
  CHECK(c.items[0].tagged_sentences.size() == 2);
  CHECK(corpus_from_jsonl(corpus_to_jsonl(c), schema).items == c.items);
}

TEST_CASE("unknown fields and bad ids are rejected") {
  const auto schema = AttributeSchema::fashion_default();
  CHECK_THROWS_AS(corpus_from_jsonl(R"({"id":0,"caption":"a b .","category":"x","subcategory":"y","size":3})"
                                    "\n",
                                    schema),
                  CorpusFormatError);
  CHECK_THROWS_AS(corpus_from_jsonl(R"({"id":4,"caption":"a b .","category":"x","subcategory":"y"})"
                                    "\n",
                                    schema),
                  CorpusFormatError);
}

TEST_CASE("oracle features are unit norm and separate attributes") {
  const auto schema = AttributeSchema::fashion_default();
  const auto a = sample_attributes();
  auto b = a;
  b["color"] = "blue";
  const auto fa = oracle_image_features(schema, a);
  const auto fb = oracle_image_features(schema, b);
  double na = 0, dot = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) na += fa[i] * fa[i], dot += fa[i] * fb[i];
  CHECK(na == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dot == doctest::Approx(5.0 / 6.0).epsilon(1e-12));  // 5 of 6 axes shared
  const auto t = oracle_text_features(schema, render_caption(schema, a, 1));
  double nt = 0;
  for (double x : t) nt += x * x;
  CHECK(nt == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("holdout split sizes, coverage and determinism") {
  const auto s = split_holdout(100, 0.03, 5);
  CHECK(s.holdout.size() == 3);
  CHECK(s.train.size() == 97);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto id : s.holdout) CHECK(all.insert(id).second);
  CHECK(all.size() == 100);
  CHECK(*all.rbegin() == 99);
  const auto again = split_holdout(100, 0.03, 5);
  CHECK(again.holdout == s.holdout);
  CHECK(split_holdout(2000, 0.03, 5).holdout.size() == 60);
  CHECK_THROWS(split_holdout(10, 0.0, 1));
  CHECK_THROWS(split_holdout(10, 1.0, 1));
}
