#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtse {

// Token <-> id bijection with fixed reserved ids. Unknown lookups map to unk.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kBos = 1;
  static constexpr std::int64_t kEos = 2;
  static constexpr std::int64_t kUnk = 3;
  static constexpr std::int64_t kReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);  // incl. specials

  // Append a non-reserved token; returns its id (existing id if present).
  std::int64_t add(const std::string& token);

  std::int64_t id(const std::string& token) const;  // unk when absent
  bool contains(const std::string& token) const;
  const std::string& token(std::int64_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::int64_t> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<std::int64_t>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

// Frequency-ordered vocabulary: tokens sorted by (count desc, token asc),
// dropped below min_count, truncated to max_size including the 4 specials.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& lines,
                       std::int64_t max_size, std::int64_t min_count = 1);

std::vector<std::string> tokenize(const std::string& line);

}  // namespace mtse
