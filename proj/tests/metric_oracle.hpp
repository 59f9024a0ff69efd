#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "catrinet/metrics.hpp"

namespace oracle {

using catrinet::metrics::EvalPair;
using catrinet::metrics::Tokens;

// Brute-force reference implementations. N-grams are flattened to
// space-joined strings and counted by linear scans.

inline std::vector<std::string> grams(const Tokens& t, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::string s;
    for (std::size_t k = 0; k < n; ++k) s += t[i + k] + " ";
    out.push_back(s);
  }
  return out;
}

inline std::size_t occurrences(const std::vector<std::string>& list, const std::string& g) {
  return static_cast<std::size_t>(std::count(list.begin(), list.end(), g));
}

inline double bleu(const std::vector<EvalPair>& pairs, std::size_t max_n) {
  double c = 0.0, r = 0.0;
  std::vector<double> match(max_n + 1, 0.0), cand(max_n + 1, 0.0);
  for (const EvalPair& p : pairs) {
    c += static_cast<double>(p.hypothesis.size());
    std::vector<double> lens;
    for (const Tokens& ref : p.references) lens.push_back(static_cast<double>(ref.size()));
    std::sort(lens.begin(), lens.end());
    double best = lens[0];
    for (double l : lens)
      if (std::abs(l - static_cast<double>(p.hypothesis.size())) <
          std::abs(best - static_cast<double>(p.hypothesis.size())))
        best = l;
    r += best;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = grams(p.hypothesis, n);
      std::vector<std::string> distinct = h;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      for (const std::string& g : distinct) {
        std::size_t cap = 0;
        for (const Tokens& ref : p.references) cap = std::max(cap, occurrences(grams(ref, n), g));
        match[n] += static_cast<double>(std::min(occurrences(h, g), cap));
      }
      cand[n] += static_cast<double>(h.size());
    }
  }
  if (c == 0.0) return 0.0;
  double prod = 1.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double m = match[n] == 0.0 ? 1e-9 : match[n];
    const double d = cand[n] == 0.0 ? 1.0 : cand[n];
    prod *= std::pow(m / d, 1.0 / static_cast<double>(max_n));
  }
  return (c < r ? std::exp(1.0 - r / c) : 1.0) * prod;
}

inline bool is_subsequence(const Tokens& sub, const Tokens& of) {
  std::size_t j = 0;
  for (const auto& t : of)
    if (j < sub.size() && sub[j] == t) ++j;
  return j == sub.size();
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double rouge_l(const std::vector<EvalPair>& pairs) {
  const double b2 = 1.44;
  double total = 0.0;
  for (const EvalPair& p : pairs) {
    double best = 0.0;
    for (const Tokens& ref : p.references) {
      const double l = static_cast<double>(lcs(p.hypothesis, ref));
      if (l == 0.0) continue;
      const double rec = l / static_cast<double>(ref.size());
      const double prec = l / static_cast<double>(p.hypothesis.size());
      best = std::max(best, (1 + b2) * rec * prec / (rec + b2 * prec));
    }
    total += best;
  }
  return total / static_cast<double>(pairs.size());
}

inline double cider(const std::vector<EvalPair>& pairs) {
  const double n_docs = static_cast<double>(pairs.size());
  double total = 0.0;
  for (const EvalPair& p : pairs) {
    double pair_sum = 0.0;
    for (const Tokens& ref : p.references) {
      double per_n = 0.0;
      for (std::size_t n = 1; n <= 4; ++n) {
        const auto h = grams(p.hypothesis, n), rg = grams(ref, n);
        std::vector<std::string> vocab = h;
        vocab.insert(vocab.end(), rg.begin(), rg.end());
        std::sort(vocab.begin(), vocab.end());
        vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
        double dot = 0.0, nh = 0.0, nr = 0.0;
        for (const std::string& g : vocab) {
          double df = 0.0;
          for (const EvalPair& q : pairs) {
            bool in = false;
            for (const Tokens& qr : q.references) in = in || occurrences(grams(qr, n), g) > 0;
            df += in ? 1.0 : 0.0;
          }
          const double idf = std::log(n_docs / std::max(1.0, df));
          const double a = static_cast<double>(occurrences(h, g)) * idf;
          const double b = static_cast<double>(occurrences(rg, g)) * idf;
          dot += a * b;
          nh += a * a;
          nr += b * b;
        }
        if (nh > 0.0 && nr > 0.0) per_n += dot / std::sqrt(nh * nr);
      }
      const double delta = static_cast<double>(p.hypothesis.size()) - static_cast<double>(ref.size());
      pair_sum += std::exp(-delta * delta / 72.0) * per_n / 4.0;
    }
    total += 10.0 * pair_sum / static_cast<double>(p.references.size());
  }
  return total / n_docs;
}

inline Tokens random_tokens(std::mt19937_64& rng, std::size_t lo, std::size_t hi, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> len(lo, hi), word(0, vocab - 1);
  Tokens t(len(rng));
  for (auto& w : t) w = "w" + std::to_string(word(rng));
  return t;
}

inline std::vector<EvalPair> random_corpus(std::mt19937_64& rng, std::size_t pairs) {
  std::uniform_int_distribution<std::size_t> nref(1, 3);
  std::vector<EvalPair> out;
  for (std::size_t i = 0; i < pairs; ++i) {
    EvalPair p{"p" + std::to_string(i), random_tokens(rng, 1, 8, 5), {}};
    for (std::size_t r = nref(rng); r > 0; --r) p.references.push_back(random_tokens(rng, 1, 8, 5));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace oracle
