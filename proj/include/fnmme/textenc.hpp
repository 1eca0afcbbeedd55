#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fnmme::textenc {

using TokenIndex = std::uint32_t;

inline constexpr TokenIndex kUnkIndex = 0;
inline constexpr std::string_view kUnkToken = "<unk>";

/// NFC-normalizes and lowercases `text`, splits on Unicode whitespace, and
/// emits every ASCII punctuation character as its own token.
std::vector<std::string> tokenize(std::string_view text);

/// Word dictionary with index 0 reserved for unknown words.
class Vocabulary {
 public:
  Vocabulary();
  /// Builds from words in index order; words[0] must be the UNK token.
  explicit Vocabulary(std::vector<std::string> words, std::size_t max_size);

  TokenIndex index_of(std::string_view word) const;
  const std::string& word(TokenIndex index) const { return words_.at(index); }
  std::size_t size() const { return words_.size(); }
  std::size_t max_size() const { return max_size_; }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocabulary& other) const {
    return words_ == other.words_ && max_size_ == other.max_size_;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenIndex> index_;
  std::size_t max_size_ = 0;
};

/// Keeps the `max_size` most frequent tokens (ties broken lexicographically).
Vocabulary build_vocab(std::span<const std::string> captions, std::size_t max_size);

std::vector<TokenIndex> encode(std::span<const std::string> tokens, const Vocabulary& vocab);

}  // namespace fnmme::textenc
