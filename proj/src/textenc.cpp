#include "fnmme/textenc.hpp"

#include <algorithm>
#include <map>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "fnmme/errors.hpp"

namespace fnmme::textenc {

namespace {

bool is_ascii_punct(UChar32 c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
         (c >= 0x7B && c <= 0x7E);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = U_SUCCESS(status) ? nfc->normalize(source, status) : source;
  if (U_FAILURE(status)) normalized = source;
  normalized.toLower(icu::Locale::getRoot());

  std::vector<std::string> tokens;
  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string utf8;
    current.toUTF8String(utf8);
    tokens.push_back(std::move(utf8));
    current.remove();
  };

  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 c = normalized.char32At(i);
    i = normalized.moveIndex32(i, 1);
    if (u_isUWhiteSpace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.append(c);
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() : Vocabulary({std::string(kUnkToken)}, 0) {}

Vocabulary::Vocabulary(std::vector<std::string> words, std::size_t max_size)
    : words_(std::move(words)), max_size_(max_size) {
  if (words_.empty() || words_.front() != kUnkToken) {
    throw ValidationError("vocabulary must start with the UNK token");
  }
  if (words_.size() > max_size_ + 1) {
    throw ValidationError("vocabulary holds " + std::to_string(words_.size() - 1) +
                          " words but its capacity is " + std::to_string(max_size_));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenIndex>(i)).second) {
      throw ValidationError("vocabulary word '" + words_[i] + "' appears twice");
    }
  }
}

TokenIndex Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkIndex : it->second;
}

Vocabulary build_vocab(std::span<const std::string> captions, std::size_t max_size) {
  if (max_size < 1) throw ValidationError("vocabulary max_size must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : captions) {
    for (auto& token : tokenize(caption)) ++counts[std::move(token)];
  }
  if (counts.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is ordered by word, so a stable sort on frequency keeps ties lexicographic.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words{std::string(kUnkToken)};
  for (std::size_t i = 0; i < ranked.size() && words.size() <= max_size; ++i) {
    words.push_back(std::move(ranked[i].first));
  }
  return Vocabulary(std::move(words), max_size);
}

std::vector<TokenIndex> encode(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<TokenIndex> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.index_of(t));
  return out;
}

}  // namespace fnmme::textenc
