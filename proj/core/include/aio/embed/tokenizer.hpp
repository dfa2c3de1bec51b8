#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

/// Word vocabulary. Ids 0..2 are reserved for [PAD], [CLS] and [UNK]; words
/// take dense ids from 3 in insertion order.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kCls = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::size_t kFirstWord = 3;

  Vocab() = default;
  explicit Vocab(std::vector<std::string> words);

  /// One token per line; line k (0-based) holds the word with id k + 3.
  static Vocab load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  std::size_t id(std::string_view word) const;
  const std::string& word(std::size_t id) const;
  std::size_t size() const { return kFirstWord + words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TokenizedPrompt {
  std::vector<std::size_t> ids;
  std::vector<unsigned char> mask;
};

/// Lowercases, drops punctuation, splits on whitespace.
std::vector<std::string> normalize_words(std::string_view text);

/// [CLS] followed by word ids, truncated or [PAD]-filled to exactly `length`.
TokenizedPrompt tokenize(std::string_view text, const Vocab& vocab, std::size_t length);

/// Words of the real non-[CLS] tokens joined by single spaces.
std::string detokenize(const TokenizedPrompt& tp, const Vocab& vocab);

}  // namespace aio::inline AIO_ABI
