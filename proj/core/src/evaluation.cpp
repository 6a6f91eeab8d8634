#include "fadvlp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "fadvlp/random.hpp"
#include "fadvlp/runtime.hpp"
#include "json.hpp"

namespace fadvlp {

using Json = nlohmann::ordered_json;

double MetricsReport::at(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw std::out_of_range("report '" + task + "' has no metric '" + name + "'");
}

void MetricsReport::set(const std::string& name, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("metric '" + name + "' is not finite");
  for (auto& [k, v] : metrics)
    if (k == name) {
      v = value;
      return;
    }
  metrics.emplace_back(name, value);
}

std::string MetricsReport::to_json() const {
  Json j;
  j["task"] = task;
  Json m = Json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  j["metrics"] = m;
  Json p = Json::object();
  for (const auto& [k, v] : protocol) p[k] = v;
  j["protocol"] = p;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::string out = "task,metric,value\n";
  char buf[64];
  for (const auto& [k, v] : metrics) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    out += task + "," + k + "," + buf + "\n";
  }
  return out;
}

double recall_at_k(const std::vector<std::vector<std::size_t>>& ranked, const std::vector<std::size_t>& gold,
                   std::size_t k) {
  if (ranked.size() != gold.size()) throw std::invalid_argument("recall_at_k: one gold id per ranked list");
  if (ranked.empty()) throw std::invalid_argument("recall_at_k: no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < ranked.size(); ++q) {
    if (k > ranked[q].size()) {
      throw std::invalid_argument("recall_at_k: K=" + std::to_string(k) + " exceeds a list of " +
                                  std::to_string(ranked[q].size()));
    }
    hits += std::find(ranked[q].begin(), ranked[q].begin() + static_cast<std::ptrdiff_t>(k), gold[q]) !=
            ranked[q].begin() + static_cast<std::ptrdiff_t>(k);
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranked.size());
}

Embeddings random_unit_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Embeddings e;
  e.dim = dim;
  e.rows.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    std::vector<double> v(dim);
    for (double& x : v) {
      x = standard_normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dim; ++d) e.rows[i * dim + d] = static_cast<float>(v[d] / norm);
  }
  return e;
}

ItemLabels ItemLabels::from_corpus(const Corpus& corpus) {
  ItemLabels l;
  for (const auto& item : corpus.items) {
    l.category.push_back(item.category);
    l.subcategory.push_back(item.subcategory);
  }
  return l;
}

namespace {

double dot(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

std::string format_k(const char* prefix, std::size_t k) { return std::string(prefix) + std::to_string(k); }

}  // namespace

std::vector<std::size_t> sample_negatives(std::size_t query, const ItemLabels& labels, std::size_t count,
                                          std::mt19937_64& rng) {
  const std::size_t n = labels.subcategory.size();
  std::vector<std::size_t> tiers[3];
  for (std::size_t j = 0; j < n; ++j) {
    if (j == query) continue;
    if (labels.subcategory[j] == labels.subcategory[query]) {
      tiers[0].push_back(j);
    } else if (labels.category[j] == labels.category[query]) {
      tiers[1].push_back(j);
    } else {
      tiers[2].push_back(j);
    }
  }
  if (n - 1 < count) {
    throw std::invalid_argument("candidate pool of " + std::to_string(n - 1) + " negatives cannot supply " +
                                std::to_string(count));
  }
  std::vector<std::size_t> out;
  for (auto& tier : tiers) {
    const std::size_t need = count - out.size();
    if (need == 0) break;
    for (std::size_t p : sample_without_replacement(tier.size(), std::min(need, tier.size()), rng))
      out.push_back(tier[p]);
  }
  return out;
}

MetricsReport crossmodal_protocol(const Embeddings& images, const Embeddings& texts,
                                  const std::vector<std::size_t>& query_ids, const ItemLabels& labels,
                                  Direction direction, const CandidateProtocol& protocol, const std::string& task) {
  if (images.dim != texts.dim || images.size() != texts.size()) {
    throw std::invalid_argument("image and text embeddings must cover the same items");
  }
  if (labels.subcategory.size() != images.size()) throw std::invalid_argument("labels must cover every item");
  if (query_ids.empty()) throw std::invalid_argument("no evaluation queries");
  if (protocol.candidates < 2 || protocol.repeats == 0) throw std::invalid_argument("invalid candidate protocol");
  for (std::size_t k : protocol.ks)
    if (k == 0 || k > protocol.candidates) throw std::invalid_argument("K must be in [1, candidates]");
  const Embeddings& q_side = direction == Direction::kImageToText ? images : texts;
  const Embeddings& c_side = direction == Direction::kImageToText ? texts : images;
  std::vector<std::size_t> hits(protocol.ks.size(), 0);
  for (std::size_t r = 0; r < protocol.repeats; ++r) {
    std::mt19937_64 rng(protocol.seed ^ (0x5851f42d4c957f2dULL * (r + 1)));
    std::vector<std::vector<std::size_t>> negatives;
    for (std::size_t q : query_ids) negatives.push_back(sample_negatives(q, labels, protocol.candidates - 1, rng));
    std::vector<std::size_t> ranks(query_ids.size());
    parallel_for(query_ids.size(), [&](std::size_t i) {
      const std::size_t q = query_ids[i];
      const double gold = dot(q_side.row(q), c_side.row(q), q_side.dim);
      std::size_t rank = 1;
      for (std::size_t j : negatives[i]) {
        const double s = dot(q_side.row(q), c_side.row(j), q_side.dim);
        rank += s > gold || (s == gold && j < q);
      }
      ranks[i] = rank;
    });
    for (std::size_t rank : ranks)
      for (std::size_t i = 0; i < protocol.ks.size(); ++i) hits[i] += rank <= protocol.ks[i];
  }
  MetricsReport report;
  report.task = task;
  const double draws = static_cast<double>(protocol.repeats * query_ids.size());
  for (std::size_t i = 0; i < protocol.ks.size(); ++i)
    report.set(format_k("R@", protocol.ks[i]), 100.0 * static_cast<double>(hits[i]) / draws);
  report.protocol = {{"candidates", static_cast<double>(protocol.candidates)},
                     {"repeats", static_cast<double>(protocol.repeats)},
                     {"queries", static_cast<double>(query_ids.size())},
                     {"seed", static_cast<double>(protocol.seed)}};
  report.notes.push_back(direction == Direction::kImageToText ? "image query, caption candidates"
                                                              : "caption query, image candidates");
  report.notes.push_back("negatives: same subcategory, then same category, then any item");
  return report;
}

std::vector<PseudoTriplet> build_query_triplets(const TripletIndex& index, const std::vector<std::size_t>& refs,
                                                const TripletConfig& cfg, std::size_t per_ref) {
  std::vector<PseudoTriplet> out;
  for (std::size_t ref : refs) {
    std::set<std::size_t> targets;
    for (std::size_t k = 0; k < per_ref; ++k) {
      const std::uint64_t seed = k == 0 ? cfg.seed ^ ref : (cfg.seed ^ ref) + 0x9e3779b97f4a7c15ULL * k;
      std::mt19937_64 rng(seed);
      const auto outcome = build_triplet(index, ref, cfg, rng);
      if (outcome.triplet && targets.insert(outcome.triplet->tgt_id).second) out.push_back(*outcome.triplet);
    }
  }
  return out;
}

MetricsReport irtf_rank(const Embeddings& fused, const Embeddings& gallery, const std::vector<IrtfQuery>& queries,
                        const std::vector<std::size_t>& ks, const std::string& task) {
  if (fused.size() != queries.size()) throw std::invalid_argument("one fused embedding per query");
  if (fused.dim != gallery.dim) throw std::invalid_argument("fused and gallery embeddings differ in width");
  if (queries.empty()) throw std::invalid_argument("no IRTF queries");
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::vector<std::size_t>> ranked(queries.size());
  std::vector<std::size_t> gold(queries.size());
  for (const auto& query : queries) {
    if (query.tgt_id >= gallery.size() || query.ref_id >= gallery.size()) {
      throw std::invalid_argument("IRTF query references item outside the gallery");
    }
  }
  parallel_for(queries.size(), [&](std::size_t q) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(gallery.size());
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      if (j == queries[q].ref_id) continue;
      scored.emplace_back(-dot(fused.row(q), gallery.row(j), gallery.dim), j);
    }
    std::sort(scored.begin(), scored.end());
    ranked[q].reserve(scored.size());
    for (const auto& [s, j] : scored) ranked[q].push_back(j);
  });
  for (std::size_t q = 0; q < queries.size(); ++q) {
    gold[q] = queries[q].tgt_id;
    groups[queries[q].group].push_back(q);
  }
  MetricsReport report;
  report.task = task;
  for (std::size_t k : ks) {
    double sum = 0.0;
    for (const auto& [group, members] : groups) {
      std::vector<std::vector<std::size_t>> r;
      std::vector<std::size_t> g;
      for (std::size_t q : members) {
        r.push_back(ranked[q]);
        g.push_back(gold[q]);
      }
      const double value = recall_at_k(r, g, k);
      report.set(group + ".R@" + std::to_string(k), value);
      sum += value;
    }
    report.set("average.R@" + std::to_string(k), sum / static_cast<double>(groups.size()));
  }
  for (std::size_t k : ks) report.set("pooled.R@" + std::to_string(k), recall_at_k(ranked, gold, k));
  report.protocol = {{"queries", static_cast<double>(queries.size())},
                     {"gallery", static_cast<double>(gallery.size())}};
  report.notes.push_back("full-gallery ranking; the reference image is excluded from its own ranking");
  report.notes.push_back("average is the unweighted mean of the per-category columns");
  return report;
}

MetricsReport classification_report(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold,
                                     std::size_t class_count, const std::string& task) {
  if (predicted.size() != gold.size()) throw std::invalid_argument("one prediction per labeled item");
  if (gold.empty()) throw std::invalid_argument("empty labeled set");
  std::vector<double> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] >= class_count || gold[i] >= class_count) throw std::out_of_range("class id out of range");
    if (predicted[i] == gold[i]) {
      ++correct;
      tp[gold[i]] += 1;
    } else {
      fp[predicted[i]] += 1;
      fn[gold[i]] += 1;
    }
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < class_count; ++c) {
    const double p = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double r = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    f1_sum += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  MetricsReport report;
  report.task = task;
  report.set("accuracy", 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size()));
  report.set("macro_f1", f1_sum / static_cast<double>(class_count));
  report.protocol = {{"items", static_cast<double>(gold.size())}, {"classes", static_cast<double>(class_count)}};
  report.notes.push_back("macro-F1 averages every class; classes never predicted nor present score 0");
  return report;
}

std::vector<std::string> caption_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text))
    if (t != "." && t != ",") out.push_back(std::move(t));
  return out;
}

namespace {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, double>;

NgramCounts ngram_counts(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts c;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    c[Ngram(words.begin() + static_cast<std::ptrdiff_t>(i), words.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1;
  return c;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double corpus_bleu4(const std::vector<std::vector<std::string>>& hyps,
                    const std::vector<std::vector<std::vector<std::string>>>& refs) {
  if (hyps.size() != refs.size() || hyps.empty()) throw std::invalid_argument("BLEU needs aligned, non-empty lists");
  double clipped[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) throw std::invalid_argument("BLEU: item without references");
    const auto& h = hyps[i];
    hyp_len += static_cast<double>(h.size());
    std::size_t best = refs[i][0].size();
    for (const auto& r : refs[i]) {
      const auto d = [&](std::size_t len) { return len > h.size() ? len - h.size() : h.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts hc = ngram_counts(h, n);
      NgramCounts max_ref;
      for (const auto& r : refs[i])
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : hc) {
        auto it = max_ref.find(g);
        clipped[n - 1] += it == max_ref.end() ? 0.0 : std::min(c, it->second);
      }
      total[n - 1] += h.size() >= n ? static_cast<double>(h.size() - n + 1) : 0.0;
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (clipped[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_sum += std::log(clipped[n] / total[n]);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double rouge_l(const std::vector<std::string>& hyp, const std::vector<std::vector<std::string>>& refs, double beta) {
  if (refs.empty()) throw std::invalid_argument("ROUGE-L: item without references");
  if (hyp.empty()) return 0.0;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& r : refs) {
    if (r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(hyp, r));
    best_p = std::max(best_p, lcs / static_cast<double>(hyp.size()));
    best_r = std::max(best_r, lcs / static_cast<double>(r.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1 + b2) * best_p * best_r / (best_r + b2 * best_p);
}

double cider_d(const std::vector<std::vector<std::string>>& hyps,
               const std::vector<std::vector<std::vector<std::string>>>& refs, double sigma) {
  if (hyps.size() != refs.size() || hyps.empty()) throw std::invalid_argument("CIDEr needs aligned, non-empty lists");
  // Document frequency over each item's reference set.
  std::map<Ngram, double> df;
  for (const auto& item_refs : refs) {
    std::set<Ngram> seen;
    for (const auto& r : item_refs)
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& [g, c] : ngram_counts(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1;
  }
  const double log_docs = std::log(static_cast<double>(refs.size()));
  struct Vec {
    std::map<Ngram, double> v[4];
    double norm[4] = {0, 0, 0, 0};
    double length = 0;
  };
  auto to_vec = [&](const std::vector<std::string>& words) {
    Vec out;
    for (std::size_t n = 1; n <= 4; ++n) {
      for (const auto& [g, tf] : ngram_counts(words, n)) {
        auto it = df.find(g);
        const double w = tf * (log_docs - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second)));
        out.v[n - 1][g] = w;
        out.norm[n - 1] += w * w;
      }
      out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
    }
    out.length = words.size() >= 2 ? static_cast<double>(words.size() - 1) : 0.0;  // bigram count
    return out;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const Vec h = to_vec(hyps[i]);
    double score[4] = {0, 0, 0, 0};
    for (const auto& r : refs[i]) {
      const Vec rv = to_vec(r);
      const double delta = h.length - rv.length;
      for (int n = 0; n < 4; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : h.v[n]) {
          auto it = rv.v[n].find(g);
          if (it != rv.v[n].end()) val += std::min(w, it->second) * it->second;
        }
        if (h.norm[n] != 0.0 && rv.norm[n] != 0.0) val /= h.norm[n] * rv.norm[n];
        score[n] += val * std::exp(-(delta * delta) / (2 * sigma * sigma));
      }
    }
    const double mean = (score[0] + score[1] + score[2] + score[3]) / 4.0;
    total += mean / static_cast<double>(refs[i].size()) * 10.0;
  }
  return total / static_cast<double>(hyps.size());
}

CaptionScores caption_metrics(const std::vector<std::string>& hypotheses,
                              const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty()) throw std::invalid_argument("no hypotheses to score");
  if (hypotheses.size() != references.size()) throw std::invalid_argument("one reference set per hypothesis");
  std::vector<std::vector<std::string>> h;
  std::vector<std::vector<std::vector<std::string>>> r;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    h.push_back(caption_tokens(hypotheses[i]));
    std::vector<std::vector<std::string>> rs;
    for (const auto& ref : references[i]) rs.push_back(caption_tokens(ref));
    r.push_back(std::move(rs));
  }
  CaptionScores s;
  s.bleu4 = corpus_bleu4(h, r);
  double rl = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) rl += rouge_l(h[i], r[i]);
  s.rouge_l = rl / static_cast<double>(h.size());
  s.cider = cider_d(h, r);
  s.sum = 100.0 * s.bleu4 + 100.0 * s.rouge_l + 10.0 * s.cider;
  return s;
}

MetricsReport caption_report(const CaptionScores& scores, const std::string& task) {
  MetricsReport report;
  report.task = task;
  report.set("BLEU-4", 100.0 * scores.bleu4);
  report.set("ROUGE-L", 100.0 * scores.rouge_l);
  report.set("CIDEr", 10.0 * scores.cider);
  report.set("Sum", scores.sum);
  report.notes.push_back("BLEU-4 and ROUGE-L in percent; CIDEr-D rescaled by 10; Sum = BLEU-4 + ROUGE-L + CIDEr");
  report.notes.push_back("METEOR is not computed and is left out of Sum");
  return report;
}

std::string join_pair(const std::string& first, const std::string& second) { return first + " and " + second; }

namespace {

template <typename Fn>
void in_batches(std::size_t n, std::size_t batch, Fn&& fn) {
  for (std::size_t begin = 0; begin < n; begin += batch) fn(begin, std::min(n, begin + batch));
}

std::vector<std::size_t> iota_ids(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> ids;
  for (std::size_t i = begin; i < end; ++i) ids.push_back(i);
  return ids;
}

void append(Embeddings& e, const Tensor<float>& t) {
  e.dim = t.dim(1);
  e.rows.insert(e.rows.end(), t.data().begin(), t.data().end());
}

}  // namespace

Embeddings image_embeddings(const FadVlpModel<float>& model, const TrainingData& data, std::size_t batch) {
  NoGradScope<float> no_grad;
  Embeddings e;
  in_batches(data.images.size(), batch, [&](std::size_t b, std::size_t end) {
    append(e, model.embed_image(model.encode_images(data.images.batch(iota_ids(b, end))).pooled));
  });
  return e;
}

Embeddings text_embeddings(const FadVlpModel<float>& model, const TrainingData& data, std::size_t batch) {
  NoGradScope<float> no_grad;
  Embeddings e;
  in_batches(data.captions.size(), batch, [&](std::size_t b, std::size_t end) {
    std::vector<std::vector<int>> rows(data.captions.begin() + static_cast<std::ptrdiff_t>(b),
                                       data.captions.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t len = 0;
    for (const auto& r : rows) len = std::max(len, r.size());
    append(e, model.embed_text(model.encode_text(TextBatch::from_sequences(rows, len), Mode::kAlign)));
  });
  return e;
}

Embeddings fused_embeddings(const FadVlpModel<float>& model, const TrainingData& data,
                            const std::vector<IrtfQuery>& queries, std::size_t batch) {
  NoGradScope<float> no_grad;
  Embeddings e;
  in_batches(queries.size(), batch, [&](std::size_t b, std::size_t end) {
    std::vector<std::size_t> refs;
    std::vector<std::vector<int>> rows;
    std::size_t len = 0;
    for (std::size_t q = b; q < end; ++q) {
      refs.push_back(queries[q].ref_id);
      rows.push_back(encode_caption(data.vocab, queries[q].relative_caption, model.config().max_text_len));
      len = std::max(len, rows.back().size());
    }
    const auto enc = model.encode_images(data.images.batch(refs));
    append(e, model.embed_fused(model.fuse(enc, TextBatch::from_sequences(rows, len))));
  });
  return e;
}

std::vector<std::size_t> predict_classes(const FadVlpModel<float>& model, const ClassifierHead& head,
                                         const TrainingData& data, const std::vector<std::size_t>& ids,
                                         std::size_t batch) {
  NoGradScope<float> no_grad;
  std::vector<std::size_t> out;
  in_batches(ids.size(), batch, [&](std::size_t b, std::size_t end) {
    const std::vector<std::size_t> part(ids.begin() + static_cast<std::ptrdiff_t>(b),
                                        ids.begin() + static_cast<std::ptrdiff_t>(end));
    const PairBatch<float> pairs = make_pair_batch(data, part);
    const Tensor<float> logits = classify_logits(model, head, pairs.images, pairs.captions);
    const std::size_t c = logits.dim(1);
    const auto d = logits.data();
    for (std::size_t i = 0; i < part.size(); ++i)
      out.push_back(static_cast<std::size_t>(std::max_element(d.begin() + static_cast<std::ptrdiff_t>(i * c),
                                                              d.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)) -
                                             (d.begin() + static_cast<std::ptrdiff_t>(i * c))));
  });
  return out;
}

std::vector<std::string> generate_captions(const FadVlpModel<float>& model, const TrainingData& data,
                                           const std::vector<std::size_t>& ids, std::size_t batch) {
  std::vector<std::string> out;
  in_batches(ids.size(), batch, [&](std::size_t b, std::size_t end) {
    const std::vector<std::size_t> part(ids.begin() + static_cast<std::ptrdiff_t>(b),
                                        ids.begin() + static_cast<std::ptrdiff_t>(end));
    ImageEncoding<float> enc;
    {
      NoGradScope<float> no_grad;
      enc = model.encode_images(data.images.batch(part));
    }
    DecodeOptions options;
    options.greedy = true;
    options.max_len = model.config().max_text_len - 1;
    for (const auto& seq : model.generate(Mode::kAlign, {enc}, options)) out.push_back(data.vocab.decode(seq));
  });
  return out;
}

std::vector<std::string> generate_relative_captions(const FadVlpModel<float>& model, const TrainingData& data,
                                                    const std::vector<std::pair<std::size_t, std::size_t>>& rows,
                                                    double top_p, std::uint64_t seed, std::size_t batch) {
  std::vector<std::string> out;
  std::size_t chunk = 0;
  in_batches(rows.size(), batch, [&](std::size_t b, std::size_t end) {
    std::vector<std::size_t> refs, tgts;
    for (std::size_t i = b; i < end; ++i) {
      refs.push_back(rows[i].first);
      tgts.push_back(rows[i].second);
    }
    ImageEncoding<float> ref, tgt;
    {
      NoGradScope<float> no_grad;
      ref = model.encode_images(data.images.batch(refs));
      tgt = model.encode_images(data.images.batch(tgts));
    }
    DecodeOptions options;
    options.greedy = false;
    options.top_p = top_p;
    options.seed = seed + 0x9e3779b97f4a7c15ULL * chunk++;
    options.max_len = model.config().max_text_len - 1;
    for (const auto& seq : model.generate(Mode::kRelativeCaption, {ref, tgt}, options))
      out.push_back(data.vocab.decode(seq));
  });
  return out;
}

std::string alternate_relative_caption(const TripletIndex& index, const PseudoTriplet& t) {
  const auto& entries = index.entries();
  const auto rs = first_sentence(entries.at(t.ref_id), t.sentence_index);
  const auto ts = first_sentence(entries.at(t.tgt_id), t.sentence_index);
  if (!rs || !ts) throw std::invalid_argument("triplet sentence index is past the caption");
  const auto [r, g] =
      remove_overlap(filter_attribute_tokens(*rs, index.vocab()), filter_attribute_tokens(*ts, index.vocab()));
  if (r.empty() && g.empty()) throw std::invalid_argument("triplet has no distinguishing tokens");
  return render_template((t.template_id + 2) % kTemplateCount, r, g);
}

}  // namespace fadvlp
