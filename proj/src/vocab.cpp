#include "mtse/vocab.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mtse/errors.hpp"

namespace mtse {

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<s>", "</s>", "<unk>"};
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    index_[tokens_[i]] = static_cast<std::int64_t>(i);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  if (tokens.size() < kReserved || tokens[0] != "<pad>" || tokens[1] != "<s>" ||
      tokens[2] != "</s>" || tokens[3] != "<unk>")
    fail(errc::format, "vocabulary list must start with the reserved tokens");
  for (std::size_t i = kReserved; i < tokens.size(); ++i) add(tokens[i]);
}

std::int64_t Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int64_t>(tokens_.size());
  tokens_.push_back(token);
  index_[token] = id;
  return id;
}

std::int64_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || id >= size())
    fail(errc::input, "vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::encode(
    const std::vector<std::string>& words) const {
  std::vector<std::int64_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(
    const std::vector<std::int64_t>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (auto i : ids) words.push_back(token(i));
  return words;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& lines,
                       std::int64_t max_size, std::int64_t min_count) {
  if (max_size <= Vocabulary::kReserved)
    fail(errc::input, "build_vocab: max_size must exceed the 4 reserved slots");
  if (lines.empty()) fail(errc::input, "build_vocab: empty corpus");
  std::map<std::string, std::int64_t> counts;
  for (const auto& line : lines)
    for (const auto& tok : line) counts[tok] += 1;
  std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(),
                                                          counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, count] : items) {
    if (count < min_count) break;
    if (vocab.size() >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace mtse
