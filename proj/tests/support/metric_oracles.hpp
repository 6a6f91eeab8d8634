#pragma once

// Second implementations of the caption and classification metrics, written
// from the formulas with different data structures, plus random fixtures.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fadvlp::testing {

using Words = std::vector<std::string>;
using Refs = std::vector<Words>;

inline std::string key(const Words& w, std::size_t at, std::size_t n) {
  std::string k;
  for (std::size_t i = at; i < at + n; ++i) k += w[i] + "\x1f";
  return k;
}

inline std::unordered_map<std::string, int> grams(const Words& w, std::size_t n) {
  std::unordered_map<std::string, int> g;
  if (w.size() >= n)
    for (std::size_t i = 0; i + n <= w.size(); ++i) ++g[key(w, i, n)];
  return g;
}

inline double oracle_bleu(const std::vector<Words>& hyps, const std::vector<Refs>& refs) {
  std::vector<long> match(4, 0), count(4, 0);
  long c = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += static_cast<long>(hyps[i].size());
    std::vector<std::pair<long, long>> dist;
    for (const auto& ref : refs[i]) {
      const long len = static_cast<long>(ref.size());
      dist.emplace_back(std::labs(len - static_cast<long>(hyps[i].size())), len);
    }
    r += std::min_element(dist.begin(), dist.end())->second;
    for (std::size_t n = 1; n <= 4; ++n) {
      for (const auto& [g, cnt] : grams(hyps[i], n)) {
        int best = 0;
        for (const auto& ref : refs[i]) {
          auto rg = grams(ref, n);
          if (rg.count(g)) best = std::max(best, rg[g]);
        }
        match[n - 1] += std::min(cnt, best);
        count[n - 1] += cnt;
      }
    }
  }
  double geo = 1.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    geo *= static_cast<double>(match[n]) / static_cast<double>(count[n]);
  }
  geo = std::pow(geo, 0.25);
  if (c >= r) return geo;
  return geo * std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

inline std::size_t lcs_rec(const Words& a, const Words& b, std::size_t i, std::size_t j,
                    std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  auto it = memo.find({i, j});
  if (it != memo.end()) return it->second;
  std::size_t v = a[i] == b[j] ? 1 + lcs_rec(a, b, i + 1, j + 1, memo)
                               : std::max(lcs_rec(a, b, i + 1, j, memo), lcs_rec(a, b, i, j + 1, memo));
  memo[{i, j}] = v;
  return v;
}

inline double oracle_rouge(const Words& hyp, const Refs& refs) {
  double p = 0.0, r = 0.0;
  for (const auto& ref : refs) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    const double l = static_cast<double>(lcs_rec(hyp, ref, 0, 0, memo));
    if (!hyp.empty()) p = std::max(p, l / static_cast<double>(hyp.size()));
    if (!ref.empty()) r = std::max(r, l / static_cast<double>(ref.size()));
  }
  if (p == 0.0 || r == 0.0) return 0.0;
  const double b2 = 1.2 * 1.2;
  return ((1 + b2) * p * r) / (r + b2 * p);
}

inline double oracle_cider(const std::vector<Words>& hyps, const std::vector<Refs>& refs) {
  std::unordered_map<std::string, double> df;
  for (const auto& rs : refs) {
    std::set<std::string> uniq;
    for (const auto& ref : rs)
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& [g, c] : grams(ref, n)) uniq.insert(std::to_string(n) + ":" + g);
    for (const auto& g : uniq) df[g] += 1.0;
  }
  const double big_n = std::log(static_cast<double>(hyps.size()));
  auto tfidf = [&](const Words& w, std::size_t n) {
    std::unordered_map<std::string, double> v;
    for (const auto& [g, c] : grams(w, n)) {
      const std::string k = std::to_string(n) + ":" + g;
      const double d = df.count(k) ? df[k] : 0.0;
      v[k] = c * (big_n - std::log(d < 1.0 ? 1.0 : d));
    }
    return v;
  };
  auto norm = [](const std::unordered_map<std::string, double>& v) {
    double s = 0;
    for (const auto& [k, x] : v) s += x * x;
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    double acc = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hv = tfidf(hyps[i], n);
      for (const auto& ref : refs[i]) {
        const auto rv = tfidf(ref, n);
        double num = 0.0;
        for (const auto& [k, x] : hv) {
          auto it = rv.find(k);
          if (it != rv.end()) num += std::min(x, it->second) * it->second;
        }
        const double den = norm(hv) * norm(rv);
        const double cos = den == 0.0 ? num : num / den;
        const double dl = (static_cast<double>(hyps[i].size()) - static_cast<double>(ref.size()));
        acc += cos * std::exp(-dl * dl / 72.0);
      }
    }
    total += 10.0 * acc / 4.0 / static_cast<double>(refs[i].size());
  }
  return total / static_cast<double>(hyps.size());
}

inline double oracle_macro_f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold, std::size_t k) {
  std::vector<std::vector<int>> cm(k, std::vector<int>(k, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[gold[i]][pred[i]];
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    int tp = cm[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm[o][c];
      fn += cm[c][o];
    }
    s += 2 * tp + fp + fn == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return s / static_cast<double>(k);
}

const Words kLexicon{"red", "blue", "dress", "with", "long", "sleeves", "a", "is"};

inline Words random_words(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
  Words w(min_len + rng() % (max_len - min_len + 1));
  for (auto& x : w) x = kLexicon[rng() % kLexicon.size()];
  return w;
}

// A copy of base with a few substitutions, insertions or deletions.
inline Words mutate(const Words& base, std::mt19937_64& rng) {
  Words w = base;
  const std::size_t edits = rng() % 3;
  for (std::size_t e = 0; e < edits; ++e) {
    const std::size_t op = rng() % 3;
    const std::size_t at = w.empty() ? 0 : rng() % w.size();
    if (op == 0 && !w.empty()) {
      w[at] = kLexicon[rng() % kLexicon.size()];
    } else if (op == 1 || w.size() < 2) {
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(at), kLexicon[rng() % kLexicon.size()]);
    } else {
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(at));
    }
  }
  return w;
}

struct CaptionFixture {
  std::vector<Words> hyps;
  std::vector<Refs> refs;
};

inline CaptionFixture caption_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CaptionFixture f;
  const std::size_t items = 2 + rng() % 4;
  for (std::size_t i = 0; i < items; ++i) {
    Words hyp = random_words(rng, 4, 10);
    Refs refs;
    const std::size_t nref = 1 + rng() % 3;
    for (std::size_t r = 0; r < nref; ++r) refs.push_back(rng() % 4 == 0 ? random_words(rng, 3, 9) : mutate(hyp, rng));
    f.hyps.push_back(hyp);
    f.refs.push_back(refs);
  }
  return f;
}

}  // namespace fadvlp::testing
