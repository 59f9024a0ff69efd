#include "catrinet/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "catrinet/errors.hpp"

namespace catrinet {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && std::ispunct(static_cast<unsigned char>(cur.back()))) cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& t : tokens) {
    if (token_to_id_.count(t) || t.empty() || t.front() == '<') {
      throw ValidationError("vocabulary token '" + t + "' is duplicated or reserved");
    }
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(t);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& reports, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : reports)
    for (auto& t : tokenize(r)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [t, c] : counts)
    if (c >= min_count) ranked.emplace_back(t, c);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [t, c] : ranked) tokens.push_back(t);
  return Vocabulary(tokens);
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) return id_to_token_[kUnk];
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode_tokens(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    out.push_back(token(i));
  }
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  return join_tokens(decode_tokens(ids));
}

std::vector<std::string> Vocabulary::tokens() const {
  return {id_to_token_.begin() + kSpecials, id_to_token_.end()};
}

}  // namespace catrinet
