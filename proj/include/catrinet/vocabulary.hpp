#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace catrinet {

/// Lowercase, split on whitespace, strip trailing punctuation, drop empties.
std::vector<std::string> tokenize(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kSpecials = 4;

  Vocabulary();
  /// Specials followed by `tokens` in the given order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  /// Tokens counted over `reports`; ids by descending frequency then
  /// lexicographic order. Tokens seen fewer than `min_count` times are left
  /// out and encode to UNK.
  static Vocabulary build(const std::vector<std::string>& reports, std::size_t min_count = 1);

  std::size_t size() const noexcept { return id_to_token_.size(); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(std::string_view text) const;
  /// Drops specials, stops at EOS.
  std::vector<std::string> decode_tokens(const std::vector<int>& ids) const;
  std::string decode(const std::vector<int>& ids) const;

  /// Non-special tokens in id order.
  std::vector<std::string> tokens() const;

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace catrinet
