#include "fadvlp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fadvlp/random.hpp"
#include "fadvlp/vocab.hpp"
#include "json.hpp"

namespace fadvlp {
namespace {

using Json = nlohmann::ordered_json;

struct Rgb {
  float r, g, b;
};

const std::map<std::string, Rgb>& color_table() {
  static const std::map<std::string, Rgb> table = {
      {"red", {0.9f, 0.1f, 0.1f}},    {"blue", {0.1f, 0.2f, 0.9f}},   {"green", {0.1f, 0.75f, 0.2f}},
      {"black", {0.05f, 0.05f, 0.05f}}, {"white", {0.95f, 0.95f, 0.95f}}, {"yellow", {0.95f, 0.9f, 0.1f}},
      {"pink", {0.95f, 0.55f, 0.75f}}, {"gray", {0.5f, 0.5f, 0.5f}},
  };
  return table;
}

const Rgb kCategoryPalette[] = {{0.8f, 0.0f, 0.0f}, {0.0f, 0.8f, 0.0f}, {0.0f, 0.0f, 0.8f},
                                {0.8f, 0.8f, 0.0f}, {0.8f, 0.0f, 0.8f}, {0.0f, 0.8f, 0.8f},
                                {0.8f, 0.4f, 0.0f}, {0.4f, 0.0f, 0.8f}};
const float kSubcategoryLevels[] = {0.15f, 0.5f, 0.85f, 0.32f, 0.68f};

std::size_t index_of(const AttributeAxis& axis, const std::string& value) {
  auto it = std::find(axis.values.begin(), axis.values.end(), value);
  if (it == axis.values.end()) {
    throw std::invalid_argument("unknown " + axis.name + " value '" + value + "'");
  }
  return static_cast<std::size_t>(it - axis.values.begin());
}

const std::string& attr(const Attributes& attrs, const std::string& name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) throw std::invalid_argument("missing attribute '" + name + "'");
  return it->second;
}

void fill(std::vector<float>& img, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1, Rgb c) {
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) {
      float* px = &img[(y * kImageSide + x) * kImageChannels];
      px[0] = c.r;
      px[1] = c.g;
      px[2] = c.b;
    }
}

float pattern_value(std::size_t pattern, std::size_t y, std::size_t x) {
  switch (pattern) {
    case 0:  // solid
      return 0.5f;
    case 1:  // striped
      return (y / 2) % 2 ? 1.0f : 0.0f;
    case 2:  // floral
      return ((x / 4 + y / 4) % 2) ? 0.9f : 0.2f;
    default: {  // dotted
      const bool on = (x % 4 == 1 || x % 4 == 2) && (y % 4 == 1 || y % 4 == 2);
      return on ? 1.0f : 0.0f;
    }
  }
}

}  // namespace

AttributeSchema AttributeSchema::fashion_default() {
  AttributeSchema s;
  const std::vector<std::pair<std::string, std::vector<std::string>>> tree = {
      {"dress", {"gown", "sundress", "shirtdress"}},   {"top", {"blouse", "tee", "tank"}},
      {"skirt", {"wrap", "tulip", "pencil"}},          {"pants", {"jeans", "chinos", "joggers"}},
      {"jacket", {"blazer", "parka", "bomber"}},       {"sweater", {"cardigan", "pullover", "turtleneck"}},
  };
  AttributeAxis category{"category", {}};
  AttributeAxis subcategory{"subcategory", {}};
  for (const auto& [cat, subs] : tree) {
    category.values.push_back(cat);
    for (const auto& sub : subs) {
      subcategory.values.push_back(sub);
      s.subcategory_parent[sub] = cat;
    }
  }
  s.axes = {category,
            subcategory,
            {"color", {"red", "blue", "green", "black", "white", "yellow", "pink", "gray"}},
            {"pattern", {"solid", "striped", "floral", "dotted"}},
            {"sleeve", {"sleeveless", "short-sleeved", "long-sleeved"}},
            {"length", {"cropped", "midi", "maxi"}}};
  s.openers = {"a", "this", "our", "the"};
  s.fillers = {"", "as shown", "to wear anywhere", "that you will love", "for you"};

  auto& lex = s.lexicon;
  for (const auto& v : category.values) lex[v] = PosTag::kNoun;
  for (const auto& v : subcategory.values) lex[v] = PosTag::kNoun;
  for (const auto& v : s.axes[2].values) lex[v] = PosTag::kAdjective;
  lex["solid"] = PosTag::kAdjective;
  lex["floral"] = PosTag::kAdjective;
  lex["striped"] = PosTag::kParticiple;
  lex["dotted"] = PosTag::kParticiple;
  lex["sleeveless"] = PosTag::kAdjective;
  lex["short-sleeved"] = PosTag::kParticiple;
  lex["long-sleeved"] = PosTag::kParticiple;
  lex["cropped"] = PosTag::kParticiple;
  lex["midi"] = PosTag::kAdjective;
  lex["maxi"] = PosTag::kAdjective;
  lex["length"] = PosTag::kNoun;
  for (const char* w : {"a", "this", "our", "the"}) lex[w] = PosTag::kDeterminer;
  for (const char* w : {"it", "you", "that"}) lex[w] = PosTag::kPronoun;
  for (const char* w : {"is", "shown", "wear", "will", "love"}) lex[w] = PosTag::kVerb;
  for (const char* w : {"with", "as", "to", "for"}) lex[w] = PosTag::kAdposition;
  lex["anywhere"] = PosTag::kOther;
  lex["."] = PosTag::kPunct;
  return s;
}

const AttributeAxis& AttributeSchema::axis(const std::string& name) const {
  for (const auto& a : axes)
    if (a.name == name) return a;
  throw std::invalid_argument("schema has no axis '" + name + "'");
}

std::vector<std::string> AttributeSchema::subcategories_of(const std::string& category) const {
  std::vector<std::string> out;
  for (const auto& sub : axis("subcategory").values)
    if (subcategory_parent.at(sub) == category) out.push_back(sub);
  return out;
}

std::vector<std::string> AttributeSchema::grammar_words() const {
  std::set<std::string> words;
  for (const auto& a : axes)
    for (const auto& v : a.values) words.insert(v);
  for (const auto& o : openers) words.insert(o);
  for (const auto& f : fillers)
    for (auto& w : tokenize(f)) words.insert(w);
  for (const char* w : {"it", "is", "with", "a", "length", "."}) words.insert(w);
  return std::vector<std::string>(words.begin(), words.end());
}

LexiconTagger AttributeSchema::tagger() const { return LexiconTagger(lexicon); }

std::size_t AttributeSchema::value_count() const {
  std::size_t n = 0;
  for (const auto& a : axes) n += a.values.size();
  return n;
}

std::vector<std::string> Corpus::categories() const {
  std::set<std::string> s;
  for (const auto& it : items) s.insert(it.category);
  return std::vector<std::string>(s.begin(), s.end());
}

std::vector<std::string> Corpus::subcategories() const {
  std::set<std::string> s;
  for (const auto& it : items) s.insert(it.subcategory);
  return std::vector<std::string>(s.begin(), s.end());
}

Corpus generate_corpus(const AttributeSchema& schema, std::size_t n, std::uint64_t master_seed) {
  if (n == 0) throw std::invalid_argument("generate_corpus: n must be at least 1");
  Corpus corpus;
  corpus.schema = schema;
  std::mt19937_64 rng(master_seed);
  const auto& categories = schema.axis("category").values;
  for (std::size_t i = 0; i < n; ++i) {
    CorpusItem item;
    item.id = i;
    for (const auto& a : schema.axes) {
      if (a.name == "subcategory") {
        const auto subs = schema.subcategories_of(item.attributes.at("category"));
        item.attributes[a.name] = subs[uniform_below(rng, subs.size())];
      } else if (a.name == "category") {
        item.attributes[a.name] = categories[uniform_below(rng, categories.size())];
      } else {
        item.attributes[a.name] = a.values[uniform_below(rng, a.values.size())];
      }
    }
    item.seed = rng();
    item.caption = render_caption(schema, item.attributes, item.seed);
    item.category = item.attributes.at("category");
    item.subcategory = item.attributes.at("subcategory");
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

std::vector<float> render_image(const AttributeSchema& schema, const Attributes& attrs, std::uint64_t seed,
                                double noise) {
  std::vector<float> img(kImageSide * kImageSide * kImageChannels, 0.0f);
  const std::size_t cat = index_of(schema.axis("category"), attr(attrs, "category"));
  const std::string& sub_name = attr(attrs, "subcategory");
  index_of(schema.axis("subcategory"), sub_name);
  const auto siblings = schema.subcategories_of(attr(attrs, "category"));
  auto sub_it = std::find(siblings.begin(), siblings.end(), sub_name);
  if (sub_it == siblings.end()) {
    throw std::invalid_argument("subcategory '" + sub_name + "' does not belong to '" + attr(attrs, "category") + "'");
  }
  const std::size_t sub = static_cast<std::size_t>(sub_it - siblings.begin());
  const std::string& color_name = attr(attrs, "color");
  index_of(schema.axis("color"), color_name);
  auto color_it = color_table().find(color_name);
  if (color_it == color_table().end()) throw std::invalid_argument("no rendering for color '" + color_name + "'");
  const std::size_t pattern = index_of(schema.axis("pattern"), attr(attrs, "pattern"));
  const std::size_t sleeve = index_of(schema.axis("sleeve"), attr(attrs, "sleeve"));
  const std::size_t length = index_of(schema.axis("length"), attr(attrs, "length"));
  if (cat >= std::size(kCategoryPalette) || sub >= std::size(kSubcategoryLevels)) {
    throw std::invalid_argument("schema is larger than the renderer's palette");
  }

  fill(img, 0, 8, 0, 16, kCategoryPalette[cat]);
  const float level = kSubcategoryLevels[sub];
  fill(img, 0, 8, 16, 32, Rgb{level, level, level});
  for (std::size_t y = 8; y < 24; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const float v = pattern_value(pattern, y - 8, x);
      fill(img, y, y + 1, x, x + 1, Rgb{v, v, v});
    }
  fill(img, 8, 24, 8, 24, color_it->second);
  const std::size_t sleeve_rows = sleeve * 8;  // 0, 8 or 16 filled rows
  fill(img, 8, 8 + sleeve_rows, 24, 32, Rgb{1.0f, 1.0f, 1.0f});
  const std::size_t length_cols = (length + 1) * kImageSide / 3;
  fill(img, 24, 32, 0, length_cols, Rgb{1.0f, 1.0f, 1.0f});

  if (noise > 0.0) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (float& v : img) v += static_cast<float>(noise * (2.0 * uniform01(rng) - 1.0));
  }
  return img;
}

std::string render_caption(const AttributeSchema& schema, const Attributes& attrs, std::uint64_t seed) {
  for (const auto& a : schema.axes) index_of(a, attr(attrs, a.name));
  std::mt19937_64 rng(seed);
  const std::string& opener = schema.openers[uniform_below(rng, schema.openers.size())];
  const std::string& filler = schema.fillers[uniform_below(rng, schema.fillers.size())];
  std::string s = opener + " " + attr(attrs, "color") + " " + attr(attrs, "pattern") + " " +
                  attr(attrs, "subcategory") + " " + attr(attrs, "category") + " . it is " +
                  attr(attrs, "sleeve") + " with a " + attr(attrs, "length") + " length";
  if (!filler.empty()) s += " " + filler;
  return s + " .";
}

std::vector<float> item_pixels(const AttributeSchema& schema, const CorpusItem& item) {
  if (!item.attributes.empty()) return render_image(schema, item.attributes, item.seed);
  if (item.pixels.size() == kImageSide * kImageSide * kImageChannels) return item.pixels;
  throw std::invalid_argument("item " + std::to_string(item.id) + " has neither attributes nor pixels");
}

namespace {

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
}

}  // namespace

std::vector<double> oracle_image_features(const AttributeSchema& schema, const Attributes& attrs) {
  std::vector<double> f(schema.value_count(), 0.0);
  std::size_t offset = 0;
  for (const auto& a : schema.axes) {
    f[offset + index_of(a, attr(attrs, a.name))] = 1.0;
    offset += a.values.size();
  }
  normalize(f);
  return f;
}

std::vector<double> oracle_text_features(const AttributeSchema& schema, const std::string& caption) {
  const auto words = schema.grammar_words();
  std::vector<double> f(words.size(), 0.0);
  for (const auto& tok : tokenize(caption)) {
    auto it = std::lower_bound(words.begin(), words.end(), tok);
    if (it != words.end() && *it == tok) f[static_cast<std::size_t>(it - words.begin())] += 1.0;
  }
  normalize(f);
  return f;
}

namespace {

Json item_to_json(const CorpusItem& item) {
  Json j;
  j["id"] = item.id;
  Json attrs = Json::object();
  for (const auto& [k, v] : item.attributes) attrs[k] = v;
  j["attributes"] = attrs;
  j["seed"] = item.seed;
  j["caption"] = item.caption;
  j["category"] = item.category;
  j["subcategory"] = item.subcategory;
  if (!item.image_features.empty()) j["image_features"] = item.image_features;
  if (!item.text_features.empty()) j["text_features"] = item.text_features;
  if (!item.pixels.empty()) j["pixels"] = item.pixels;
  if (!item.tagged_sentences.empty()) {
    Json sentences = Json::array();
    for (const auto& s : item.tagged_sentences) {
      Json tokens = Json::array();
      for (const auto& t : s) tokens.push_back(Json::array({t.text, pos_tag_name(t.tag)}));
      sentences.push_back(tokens);
    }
    j["tagged_sentences"] = sentences;
  }
  return j;
}

CorpusItem item_from_json(const Json& j, const AttributeSchema& schema) {
  static const std::set<std::string> known = {"id",          "attributes",     "seed",          "caption",
                                              "category",    "subcategory",    "image_features", "text_features",
                                              "pixels",      "tagged_sentences"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown field '" + k + "'");
  }
  CorpusItem item;
  item.id = j.at("id").get<std::size_t>();
  if (j.contains("attributes")) {
    for (const auto& [k, v] : j.at("attributes").items()) item.attributes[k] = v.get<std::string>();
  }
  item.seed = j.value("seed", std::uint64_t{0});
  item.caption = j.at("caption").get<std::string>();
  item.category = j.at("category").get<std::string>();
  item.subcategory = j.at("subcategory").get<std::string>();
  if (j.contains("image_features")) item.image_features = j.at("image_features").get<std::vector<double>>();
  if (j.contains("text_features")) item.text_features = j.at("text_features").get<std::vector<double>>();
  if (j.contains("pixels")) item.pixels = j.at("pixels").get<std::vector<float>>();
  if (j.contains("tagged_sentences")) {
    for (const auto& s : j.at("tagged_sentences")) {
      TaggedSentence sentence;
      for (const auto& t : s) {
        if (!t.is_array() || t.size() != 2) throw std::invalid_argument("tagged token must be [text, tag]");
        sentence.push_back({t[0].get<std::string>(), pos_tag_from_name(t[1].get<std::string>())});
      }
      item.tagged_sentences.push_back(std::move(sentence));
    }
  }
  if (!item.attributes.empty()) {
    for (const auto& a : schema.axes) index_of(a, attr(item.attributes, a.name));
    if (item.attributes.size() != schema.axes.size()) throw std::invalid_argument("attributes outside the schema");
  }
  if (split_sentences(item.caption).empty()) throw std::invalid_argument("caption has no sentence");
  if (!item.pixels.empty() && item.pixels.size() != kImageSide * kImageSide * kImageChannels) {
    throw std::invalid_argument("pixels must hold " + std::to_string(kImageSide * kImageSide * kImageChannels) +
                                " values");
  }
  return item;
}

}  // namespace

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& item : corpus.items) {
    out += item_to_json(item).dump();
    out += '\n';
  }
  return out;
}

Corpus corpus_from_jsonl(const std::string& text, const AttributeSchema& schema) {
  Corpus corpus;
  corpus.schema = schema;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      CorpusItem item = item_from_json(Json::parse(line), schema);
      if (item.id != corpus.items.size()) {
        throw std::invalid_argument("expected id " + std::to_string(corpus.items.size()) + ", found " +
                                    std::to_string(item.id));
      }
      corpus.items.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw CorpusFormatError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (corpus.items.empty()) throw CorpusFormatError("corpus is empty");
  return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << corpus_to_jsonl(corpus);
  if (!out) throw std::runtime_error("write failed for " + path);
}

Corpus load_corpus(const std::string& path, const AttributeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return corpus_from_jsonl(buf.str(), schema);
}

HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must be in (0, 1)");
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  std::mt19937_64 rng(seed);
  shuffle_in_place(ids, rng);
  HoldoutSplit split;
  split.holdout.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  split.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace fadvlp
