#include "aio/embed/tokenizer.hpp"

#include <cctype>
#include <fstream>

#include "aio/numcore/errors.hpp"

namespace aio::inline AIO_ABI {

namespace {
const std::string kReservedNames[] = {"[PAD]", "[CLS]", "[UNK]"};
}

Vocab::Vocab(std::vector<std::string> words) {
  for (auto& w : words) {
    auto norm = normalize_words(w);
    if (norm.size() != 1 || norm.front() != w) throw VocabError("vocab entry '" + w + "' is not a normalized word");
    if (index_.count(w)) throw VocabError("duplicate vocab entry '" + w + "'");
    index_.emplace(w, kFirstWord + words_.size());
    words_.push_back(std::move(w));
  }
}

Vocab Vocab::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open vocab file " + file.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw VocabError("empty line " + std::to_string(words.size() + 1) + " in " + file.string());
    words.push_back(line);
  }
  return Vocab(std::move(words));
}

void Vocab::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write vocab file " + file.string());
  for (const auto& w : words_) out << w << '\n';
}

std::size_t Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(std::size_t id) const {
  if (id < kFirstWord) return kReservedNames[id];
  if (id - kFirstWord >= words_.size()) throw VocabError("token id " + std::to_string(id) + " out of range");
  return words_[id - kFirstWord];
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenizedPrompt tokenize(std::string_view text, const Vocab& vocab, std::size_t length) {
  if (length < 2) throw ContractError("prompt length must be at least 2, got " + std::to_string(length));
  TokenizedPrompt tp;
  tp.ids.assign(length, Vocab::kPad);
  tp.mask.assign(length, 0);
  tp.ids[0] = Vocab::kCls;
  tp.mask[0] = 1;
  const auto words = normalize_words(text);
  for (std::size_t i = 0; i < words.size() && i + 1 < length; ++i) {
    tp.ids[i + 1] = vocab.id(words[i]);
    tp.mask[i + 1] = 1;
  }
  return tp;
}

std::string detokenize(const TokenizedPrompt& tp, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tp.ids.size(); ++i) {
    if (!tp.mask[i] || tp.ids[i] == Vocab::kCls || tp.ids[i] == Vocab::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(tp.ids[i]);
  }
  return out;
}

}  // namespace aio::inline AIO_ABI
