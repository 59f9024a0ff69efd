#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace catrinet::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  std::string id;
  Tokens hypothesis;
  std::vector<Tokens> references;  // at least one
};

/// Corpus BLEU with n-gram orders 1..max_n, uniform weights. Zero clipped
/// counts are replaced by 1e-9 before taking logs. Reference length per pair
/// is the closest reference length (shorter wins ties).
double bleu(std::span<const EvalPair> pairs, std::size_t max_n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// LCS F-measure of one hypothesis against its best reference.
double rouge_l_pair(const Tokens& hypothesis, std::span<const Tokens> references,
                    double beta = 1.2);
/// Mean of `rouge_l_pair` over the corpus; 0 for an empty corpus.
double rouge_l(std::span<const EvalPair> pairs, double beta = 1.2);

/// Consensus score. Document frequencies come from the references of every
/// pair, so the value depends on the whole corpus.
double cider(std::span<const EvalPair> pairs, std::size_t max_n = 4, double sigma = 6.0);

struct HeadStats {
  std::size_t head = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_halfwidth = 0.0;
  std::size_t n = 0;
};

enum class SdKind { population, sample };

/// Two-sided normal quantile for a confidence level; 0.95 maps to 1.96.
double z_for_level(double level);
double ci_halfwidth(double sd, std::size_t n, double level = 0.95);

/// Mean, SD and CI half-width for one head's samples. Needs n >= 2.
HeadStats summarize(std::span<const double> samples, std::size_t head,
                    SdKind kind = SdKind::population, double level = 0.95);
/// `per_head[j]` holds the logged samples of head j.
std::vector<HeadStats> head_stats(const std::vector<std::vector<double>>& per_head,
                                  SdKind kind = SdKind::population, double level = 0.95);

struct MetricsReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t pairs = 0;

  /// {bleu1..bleu4, rougeL, cider, pairs, scaled: {same keys x100}}
  nlohmann::json to_json() const;
};

MetricsReport evaluate(std::span<const EvalPair> pairs);

/// Pairs hypotheses with references by id, sorted by id. Ids present on one
/// side only raise AlignmentError listing them.
std::vector<EvalPair> align(const std::vector<std::pair<std::string, std::string>>& hypotheses,
                            const std::vector<std::pair<std::string, std::vector<std::string>>>&
                                references);

std::vector<std::pair<std::string, std::string>> read_hypotheses(
    const std::filesystem::path& path);
std::vector<std::pair<std::string, std::vector<std::string>>> read_references(
    const std::filesystem::path& path);

MetricsReport corpus_eval(const std::filesystem::path& generated,
                          const std::filesystem::path& references);

}  // namespace catrinet::metrics
