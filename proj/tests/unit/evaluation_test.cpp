#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "doctest.h"
#include "fadvlp/evaluation.hpp"
#include "json.hpp"
#include "metric_oracles.hpp"

using namespace fadvlp;

namespace {

using fadvlp::testing::Refs;
using fadvlp::testing::Words;
using fadvlp::testing::oracle_bleu;
using fadvlp::testing::oracle_cider;
using fadvlp::testing::oracle_macro_f1;
using fadvlp::testing::oracle_rouge;

using fadvlp::testing::caption_fixture;

Words split(const std::string& s) { return caption_tokens(s); }

}  // namespace

TEST_CASE("recall_at_k counts golds inside the first K") {
  const std::vector<std::vector<std::size_t>> always_first{{7, 1, 2}, {8, 1, 2}};
  CHECK(recall_at_k(always_first, {7, 8}, 1) == 100.0);
  const std::vector<std::vector<std::size_t>> second{{1, 7, 2, 3, 4}, {1, 8, 2, 3, 4}};
  CHECK(recall_at_k(second, {7, 8}, 1) == 0.0);
  CHECK(recall_at_k(second, {7, 8}, 5) == 100.0);

  // Gold ranks 1, 3 and 11.
  std::vector<std::vector<std::size_t>> ranked(3);
  for (auto& r : ranked)
    for (std::size_t i = 100; i < 112; ++i) r.push_back(i);
  ranked[0][0] = 0;
  ranked[1][2] = 1;
  ranked[2][10] = 2;
  CHECK(recall_at_k(ranked, {0, 1, 2}, 10) == doctest::Approx(66.6666666667).epsilon(1e-10));
  CHECK_THROWS_AS(recall_at_k(ranked, {0, 1, 2}, 13), std::invalid_argument);
}

TEST_CASE("classification report: perfect, all-one-class and permutation symmetry") {
  auto perfect = classification_report({0, 1, 2, 1}, {0, 1, 2, 1}, 3, "cr");
  CHECK(perfect.at("accuracy") == 100.0);
  CHECK(perfect.at("macro_f1") == 1.0);

  auto all_a = classification_report({0, 0, 0, 0}, {0, 0, 1, 1}, 2, "cr");
  CHECK(all_a.at("accuracy") == 50.0);
  CHECK(all_a.at("macro_f1") == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    std::vector<std::size_t> pred(30), gold(30), perm(k);
    for (std::size_t i = 0; i < 30; ++i) {
      pred[i] = rng() % k;
      gold[i] = rng() % k;
    }
    for (std::size_t c = 0; c < k; ++c) perm[c] = c;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> pp, pg;
    for (std::size_t i = 0; i < 30; ++i) {
      pp.push_back(perm[pred[i]]);
      pg.push_back(perm[gold[i]]);
    }
    const auto a = classification_report(pred, gold, k, "sr");
    const auto b = classification_report(pp, pg, k, "sr");
    CHECK(a.at("accuracy") == b.at("accuracy"));
    CHECK(a.at("macro_f1") == doctest::Approx(b.at("macro_f1")).epsilon(1e-12));
  }
  CHECK_THROWS_AS(classification_report({}, {}, 2, "cr"), std::invalid_argument);
}

TEST_CASE("macro-F1 matches a confusion-matrix reimplementation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    const std::size_t n = 1 + rng() % 40;
    std::vector<std::size_t> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = rng() % k;
      pred[i] = rng() % 3 == 0 ? gold[i] : rng() % k;
    }
    const double f1 = classification_report(pred, gold, k, "cr").at("macro_f1");
    CHECK(std::abs(f1 - oracle_macro_f1(pred, gold, k)) < 1e-9);
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
  }
}

TEST_CASE("identity captions score BLEU-4 = ROUGE-L = 1") {
  const auto s = caption_metrics({"a red dress with long sleeves .", "is blue and has a floral pattern"},
                                 {{"a red dress with long sleeves ."}, {"is blue and has a floral pattern"}});
  CHECK(s.bleu4 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.rouge_l == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.cider >= 0.0);
  CHECK(s.sum == doctest::Approx(100 * s.bleu4 + 100 * s.rouge_l + 10 * s.cider));
}

TEST_CASE("zero 4-gram overlap gives BLEU-4 = 0") {
  CHECK(corpus_bleu4({split("red dress long sleeves")}, {{split("long sleeves red dress")}}) == 0.0);
  CHECK_THROWS_AS(caption_metrics({}, {}), std::invalid_argument);
}

TEST_CASE("hand-worked two-sentence fixture") {
  const std::vector<Words> hyps{split("the dress is red with long sleeves"), split("a blue shirt")};
  const std::vector<Refs> refs{{split("the dress is red with short sleeves"), split("a red dress")},
                               {split("a blue shirt with stripes")}};
  // Clipped n-gram matches 9/10, 6/8, 4/6, 2/4; hypothesis length 10 vs
  // closest reference lengths 7 + 5.
  const double expected_bleu = std::exp(1.0 - 12.0 / 10.0) * std::pow(0.9 * 0.75 * (4.0 / 6.0) * 0.5, 0.25);
  CHECK(corpus_bleu4(hyps, refs) == doctest::Approx(expected_bleu).epsilon(1e-12));
  // LCS 6 of 7 against the first reference, P = R = 6/7.
  CHECK(rouge_l(hyps[0], refs[0]) == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  // P = 1, R = 3/5.
  const double p = 1.0, r = 0.6, b2 = 1.44;
  CHECK(rouge_l(hyps[1], refs[1]) == doctest::Approx((1 + b2) * p * r / (r + b2 * p)).epsilon(1e-12));
  CHECK(cider_d(hyps, refs) == doctest::Approx(oracle_cider(hyps, refs)).epsilon(1e-12));
}

TEST_CASE("caption metrics match independent reimplementations on 20 fixtures") {
  int nonzero_bleu = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto f = caption_fixture(seed);
    const double bleu = corpus_bleu4(f.hyps, f.refs);
    CHECK(std::abs(bleu - oracle_bleu(f.hyps, f.refs)) < 1e-9);
    nonzero_bleu += bleu > 0.0;
    for (std::size_t i = 0; i < f.hyps.size(); ++i)
      CHECK(std::abs(rouge_l(f.hyps[i], f.refs[i]) - oracle_rouge(f.hyps[i], f.refs[i])) < 1e-9);
    const double cider = cider_d(f.hyps, f.refs);
    CHECK(std::abs(cider - oracle_cider(f.hyps, f.refs)) < 1e-9);
    CHECK(bleu >= 0.0);
    CHECK(bleu <= 1.0);
    CHECK(cider >= 0.0);
  }
  CHECK(nonzero_bleu >= 10);
}

TEST_CASE("relative caption pairs are joined with 'and'") {
  CHECK(join_pair("is red", "has long sleeves") == "is red and has long sleeves");
  const std::string gold = join_pair("is red", "has long sleeves");
  const auto s = caption_metrics({gold}, {{gold}});
  CHECK(s.bleu4 == doctest::Approx(1.0));
}

TEST_CASE("random embeddings sit at chance on the 101-candidate protocol") {
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 600, 21);
  const ItemLabels labels = ItemLabels::from_corpus(corpus);
  const auto images = random_unit_embeddings(corpus.size(), 16, 1);
  const auto texts = random_unit_embeddings(corpus.size(), 16, 2);
  std::vector<std::size_t> queries(corpus.size());
  for (std::size_t i = 0; i < queries.size(); ++i) queries[i] = i;
  CandidateProtocol protocol;
  protocol.seed = 3;
  const auto report = crossmodal_protocol(images, texts, queries, labels, Direction::kImageToText, protocol, "itr");
  // 3000 draws: sd of R@1 is about 0.18 points.
  CHECK(std::abs(report.at("R@1") - 100.0 / 101.0) < 1.0);
  CHECK(std::abs(report.at("R@10") - 1000.0 / 101.0) < 2.5);

  const auto again = crossmodal_protocol(images, texts, queries, labels, Direction::kImageToText, protocol, "itr");
  CHECK(report.to_json() == again.to_json());
}

TEST_CASE("oracle attribute embeddings rank near the top") {
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 400, 8);
  Embeddings e;
  for (const auto& item : corpus.items) {
    const auto f = oracle_image_features(corpus.schema, item.attributes);
    e.dim = f.size();
    for (double x : f) e.rows.push_back(static_cast<float>(x));
  }
  std::vector<std::size_t> queries{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  CandidateProtocol protocol;
  protocol.seed = 9;
  const auto r = crossmodal_protocol(e, e, queries, ItemLabels::from_corpus(corpus), Direction::kTextToImage,
                                     protocol, "tir");
  // Only exact attribute twins can outrank the gold.
  CHECK(r.at("R@10") == 100.0);
  CHECK(r.at("R@1") >= 70.0);
}

TEST_CASE("negative sampling prefers the subcategory, then category, then anything") {
  ItemLabels labels;
  for (int i = 0; i < 10; ++i) {
    labels.category.push_back(i < 6 ? "tops" : "bottoms");
    labels.subcategory.push_back(i < 3 ? "shirt" : (i < 6 ? "blouse" : "skirt"));
  }
  std::mt19937_64 rng(1);
  const auto neg = sample_negatives(0, labels, 6, rng);
  REQUIRE(neg.size() == 6);
  const std::set<std::size_t> first_two(neg.begin(), neg.begin() + 2);
  CHECK(first_two == std::set<std::size_t>{1, 2});
  for (std::size_t i = 2; i < 5; ++i) CHECK(labels.subcategory[neg[i]] == "blouse");
  CHECK(labels.category[neg[5]] == "bottoms");
  CHECK(std::find(neg.begin(), neg.end(), std::size_t{0}) == neg.end());
  CHECK_THROWS_AS(sample_negatives(0, labels, 10, rng), std::invalid_argument);
}

TEST_CASE("IRTF ranking is invariant to positive gallery rescaling and excludes the reference") {
  std::mt19937_64 rng(5);
  const auto gallery = random_unit_embeddings(50, 8, 4);
  std::vector<IrtfQuery> queries;
  for (std::size_t q = 0; q < 12; ++q)
    queries.push_back({q, (q * 7 + 3) % 50, "", q % 2 ? "dress" : "shirt"});
  Embeddings fused;
  fused.dim = 8;
  for (const auto& q : queries) {
    // Mostly the target with some noise; the reference itself is the exact query.
    for (std::size_t d = 0; d < 8; ++d)
      fused.rows.push_back(gallery.row(q.tgt_id)[d] + 0.6f * static_cast<float>(rng() % 1000) / 1000.0f);
  }
  const auto base = irtf_rank(fused, gallery, queries, {1, 10});
  Embeddings scaled = gallery;
  for (float& x : scaled.rows) x *= 3.5f;
  const auto other = irtf_rank(fused, scaled, queries, {1, 10});
  for (const auto& [name, value] : base.metrics) CHECK(other.at(name) == value);
  CHECK(base.at("average.R@10") == doctest::Approx((base.at("dress.R@10") + base.at("shirt.R@10")) / 2));

  // A query equal to its reference embedding still cannot retrieve it.
  Embeddings self;
  self.dim = 8;
  std::vector<IrtfQuery> own{{3, 3, "", "x"}};
  self.rows.assign(gallery.row(3), gallery.row(3) + 8);
  CHECK(irtf_rank(self, gallery, own, {10}).at("average.R@10") == 0.0);
}

TEST_CASE("metrics reports serialize to JSON and CSV") {
  MetricsReport r;
  r.task = "cr";
  r.set("accuracy", 87.5);
  r.set("macro_f1", 0.5);
  r.set("accuracy", 90.0);
  r.protocol = {{"items", 8}};
  r.notes.push_back("n");
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["metrics"]["accuracy"] == 90.0);
  CHECK(j["protocol"]["items"] == 8);
  CHECK(r.to_csv() == "task,metric,value\ncr,accuracy,90\ncr,macro_f1,0.5\n");
  CHECK_THROWS_AS(r.set("bad", std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(r.at("missing"), std::out_of_range);
}

TEST_CASE("alternate relative caption uses the same tokens under another template") {
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 120, 2);
  const auto catalog = make_catalog(corpus, corpus.schema.tagger());
  TripletConfig cfg;
  cfg.seed = 4;
  const auto ds = build_triplet_dataset(catalog, cfg);
  const TripletIndex index(catalog, AttributeVocabulary::build(catalog, ds.threshold));
  REQUIRE(!ds.triplets.empty());
  for (std::size_t i = 0; i < std::min<std::size_t>(10, ds.triplets.size()); ++i) {
    const auto& t = ds.triplets[i];
    const std::string alt = alternate_relative_caption(index, t);
    CHECK(alt != t.relative_caption);
    // Same content words, different template scaffolding.
    const std::set<std::string> scaffold{"modify", "to", "be", "instead", "of", "change", "replace", "with"};
    auto content = [&](const std::string& s) {
      std::multiset<std::string> out;
      for (const auto& tok : tokenize(s))
        if (!scaffold.count(tok)) out.insert(tok);
      return out;
    };
    CHECK(content(alt) == content(t.relative_caption));
  }

  // Several queries per reference, distinct targets.
  const auto queries = build_query_triplets(index, {0, 1, 2, 3}, cfg, 3);
  std::map<std::size_t, std::set<std::size_t>> per_ref;
  for (const auto& q : queries) CHECK(per_ref[q.ref_id].insert(q.tgt_id).second);
  CHECK(queries.size() >= 4);
  CHECK(queries == build_query_triplets(index, {0, 1, 2, 3}, cfg, 3));
}
