#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "catrinet/image.hpp"
#include "catrinet/vocabulary.hpp"

namespace catrinet::corpus {

struct Sample {
  std::string id;
  ImageGrid image;
  std::string report;
  std::vector<int> tags;  // C binary entries
};

/// Seeded synthetic chest-film-like corpus. Tag 0 marks a normal study and
/// tags 1..C-1 one finding class each.
struct CorpusSpec {
  std::size_t num_samples = 640;
  double abnormal_fraction = 0.2;
  std::size_t num_tags = 6;
  std::size_t image_size = 32;
  double noise = 0.03;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Finding keyword for class `c` in 1..5 (e.g. "nodule").
const std::string& finding_keyword(std::size_t c);
/// Largest tag count the template bank supports.
inline constexpr std::size_t kMaxTags = 6;

std::vector<Sample> generate(const CorpusSpec& spec);

Vocabulary build_vocab(const std::vector<Sample>& samples, std::size_t min_count = 1);

struct LoadResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

/// Parses dataset JSONL. Row problems are collected across the whole file
/// and reported together with line numbers. `expected_tags` = 0 takes the
/// tag count from the first valid row.
LoadResult load_jsonl(const std::filesystem::path& path, std::size_t expected_tags = 0);
void write_jsonl(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::string to_jsonl_row(const Sample& sample);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Seeded shuffle then contiguous split. Ratios must sum to 1.
Split split(const std::vector<Sample>& samples, const std::vector<double>& ratios,
            std::uint64_t seed);

/// Token-id view of a sample as the model consumes it.
struct EncodedSample {
  std::string id;
  const ImageGrid* image = nullptr;
  std::vector<int> input_ids;   // BOS w1 .. wn
  std::vector<int> target_ids;  // w1 .. wn EOS
  std::vector<int> report_ids;  // w1 .. wn
  std::vector<double> tags;
};

/// Reports longer than max_len - 1 words are truncated so the target fits.
EncodedSample encode_sample(const Sample& sample, const Vocabulary& vocab, std::size_t max_len);

}  // namespace catrinet::corpus
