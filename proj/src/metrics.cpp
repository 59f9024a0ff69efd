#include "catrinet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "catrinet/errors.hpp"
#include "catrinet/vocabulary.hpp"

namespace catrinet::metrics {

using nlohmann::json;

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                 tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

constexpr double kBleuEps = 1e-9;

}  // namespace

double bleu(std::span<const EvalPair> pairs, std::size_t max_n) {
  if (max_n < 1) throw ContractError("bleu: max_n must be at least 1");
  if (pairs.empty()) throw ContractError("bleu: empty hypothesis set");

  std::vector<double> clipped(max_n, 0.0), total(max_n, 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.references.empty()) throw ContractError("bleu: pair " + p.id + " has no reference");
    const double c = static_cast<double>(p.hypothesis.size());
    hyp_len += c;
    double best = static_cast<double>(p.references.front().size());
    for (const Tokens& r : p.references) {
      const double len = static_cast<double>(r.size());
      const double d = std::abs(len - c), bd = std::abs(best - c);
      if (d < bd || (d == bd && len < best)) best = len;
    }
    ref_len += best;

    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts hyp = ngrams(p.hypothesis, n);
      NgramCounts max_ref;
      for (const Tokens& r : p.references) {
        for (const auto& [g, count] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], count);
      }
      for (const auto& [g, count] : hyp) {
        const auto it = max_ref.find(g);
        clipped[n - 1] += static_cast<double>(std::min(count, it == max_ref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    const double num = clipped[n] > 0.0 ? clipped[n] : kBleuEps;
    const double den = total[n] > 0.0 ? total[n] : 1.0;
    log_sum += std::log(num / den);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& hypothesis, std::span<const Tokens> references, double beta) {
  const double b2 = beta * beta;
  double best = 0.0;
  for (const Tokens& ref : references) {
    const std::size_t lcs = lcs_length(hypothesis, ref);
    if (lcs == 0) continue;
    const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    const double p = static_cast<double>(lcs) / static_cast<double>(hypothesis.size());
    best = std::max(best, (1.0 + b2) * r * p / (r + b2 * p));
  }
  return best;
}

double rouge_l(std::span<const EvalPair> pairs, double beta) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const EvalPair& p : pairs) sum += rouge_l_pair(p.hypothesis, p.references, beta);
  return sum / static_cast<double>(pairs.size());
}

namespace {

using TfIdf = std::map<Tokens, double>;

TfIdf tfidf(const NgramCounts& counts, const std::map<Tokens, std::size_t>& df, double log_n) {
  TfIdf v;
  for (const auto& [g, count] : counts) {
    const auto it = df.find(g);
    const double d = it == df.end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
    v[g] = static_cast<double>(count) * (log_n - std::log(d));
  }
  return v;
}

double norm(const TfIdf& v) {
  double s = 0.0;
  for (const auto& [g, x] : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const TfIdf& a, const TfIdf& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [g, x] : a) {
    const auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  return dot / (na * nb);
}

}  // namespace

double cider(std::span<const EvalPair> pairs, std::size_t max_n, double sigma) {
  if (pairs.empty()) return 0.0;
  if (max_n < 1) throw ContractError("cider: max_n must be at least 1");
  const double log_n = std::log(static_cast<double>(pairs.size()));

  // Document frequency: number of pairs whose reference set contains the n-gram.
  std::vector<std::map<Tokens, std::size_t>> df(max_n);
  for (const EvalPair& p : pairs) {
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::set<Tokens> seen;
      for (const Tokens& r : p.references) {
        for (const auto& [g, count] : ngrams(r, n)) seen.insert(g);
      }
      for (const Tokens& g : seen) ++df[n - 1][g];
    }
  }

  double total = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.references.empty()) throw ContractError("cider: pair " + p.id + " has no reference");
    std::vector<TfIdf> hyp(max_n);
    for (std::size_t n = 1; n <= max_n; ++n) hyp[n - 1] = tfidf(ngrams(p.hypothesis, n), df[n - 1], log_n);
    double pair_score = 0.0;
    for (const Tokens& r : p.references) {
      const double delta = static_cast<double>(p.hypothesis.size()) - static_cast<double>(r.size());
      const double penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
      double per_n = 0.0;
      for (std::size_t n = 1; n <= max_n; ++n) {
        per_n += cosine(hyp[n - 1], tfidf(ngrams(r, n), df[n - 1], log_n));
      }
      pair_score += penalty * per_n / static_cast<double>(max_n);
    }
    total += 10.0 * pair_score / static_cast<double>(p.references.size());
  }
  return total / static_cast<double>(pairs.size());
}

double z_for_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  if (std::abs(level - 0.95) < 1e-12) return 1.96;
  // Invert the standard normal CDF by bisection on erf.
  const double target = level;
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::erf(mid / std::sqrt(2.0)) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double ci_halfwidth(double sd, std::size_t n, double level) {
  if (n < 2) throw InsufficientDataError("confidence interval needs n >= 2, got " + std::to_string(n));
  if (sd < 0.0) throw ContractError("standard deviation must be non-negative");
  return z_for_level(level) * sd / std::sqrt(static_cast<double>(n));
}

HeadStats summarize(std::span<const double> samples, std::size_t head, SdKind kind, double level) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw InsufficientDataError("head " + std::to_string(head) + " has " + std::to_string(n) +
                                " samples, need at least 2");
  }
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double denom = kind == SdKind::population ? static_cast<double>(n) : static_cast<double>(n - 1);
  HeadStats s;
  s.head = head;
  s.mean = mean;
  s.sd = std::sqrt(ss / denom);
  s.n = n;
  s.ci_halfwidth = ci_halfwidth(s.sd, n, level);
  return s;
}

std::vector<HeadStats> head_stats(const std::vector<std::vector<double>>& per_head, SdKind kind,
                                  double level) {
  if (per_head.empty()) throw InsufficientDataError("no heads in head log");
  std::vector<HeadStats> out;
  for (std::size_t j = 0; j < per_head.size(); ++j) out.push_back(summarize(per_head[j], j, kind, level));
  return out;
}

json MetricsReport::to_json() const {
  json raw = {{"bleu1", bleu[0]}, {"bleu2", bleu[1]}, {"bleu3", bleu[2]},
              {"bleu4", bleu[3]}, {"rougeL", rouge_l}, {"cider", cider}};
  json scaled = json::object();
  for (const auto& [k, v] : raw.items()) scaled[k] = v.get<double>() * 100.0;
  raw["pairs"] = pairs;
  raw["scaled"] = scaled;
  return raw;
}

MetricsReport evaluate(std::span<const EvalPair> pairs) {
  MetricsReport r;
  for (std::size_t n = 1; n <= 4; ++n) r.bleu[n - 1] = bleu(pairs, n);
  r.rouge_l = rouge_l(pairs);
  r.cider = cider(pairs);
  r.pairs = pairs.size();
  return r;
}

std::vector<EvalPair> align(
    const std::vector<std::pair<std::string, std::string>>& hypotheses,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& references) {
  std::map<std::string, const std::string*> hyp;
  std::map<std::string, const std::vector<std::string>*> ref;
  std::vector<std::string> problems;
  for (const auto& [id, text] : hypotheses) {
    if (!hyp.emplace(id, &text).second) problems.push_back("duplicate generated id " + id);
  }
  for (const auto& [id, refs] : references) {
    if (!ref.emplace(id, &refs).second) problems.push_back("duplicate reference id " + id);
  }
  for (const auto& [id, _] : hyp)
    if (!ref.count(id)) problems.push_back("generated id without reference: " + id);
  for (const auto& [id, _] : ref)
    if (!hyp.count(id)) problems.push_back("reference id without generation: " + id);
  if (hyp.empty() || ref.empty()) problems.push_back("no ids in common");
  if (!problems.empty()) {
    std::string msg = "id alignment failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw AlignmentError(msg);
  }
  std::vector<EvalPair> out;
  for (const auto& [id, text] : hyp) {
    EvalPair p;
    p.id = id;
    p.hypothesis = tokenize(*text);
    for (const auto& r : *ref.at(id)) p.references.push_back(tokenize(r));
    if (p.references.empty()) throw ValidationError("reference row " + id + " has no refs");
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_row(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_hypotheses(const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for_each_row(path, [&](const json& row) {
    out.emplace_back(row.at("id").get<std::string>(), row.at("text").get<std::string>());
  });
  return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_references(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for_each_row(path, [&](const json& row) {
    out.emplace_back(row.at("id").get<std::string>(),
                     row.at("refs").get<std::vector<std::string>>());
  });
  return out;
}

MetricsReport corpus_eval(const std::filesystem::path& generated,
                          const std::filesystem::path& references) {
  const std::vector<EvalPair> pairs = align(read_hypotheses(generated), read_references(references));
  return evaluate(pairs);
}

}  // namespace catrinet::metrics
