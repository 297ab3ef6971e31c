#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "trink/errors.hpp"

namespace trink {

// Character vocabulary. Index 0 is PAD and index 1 is UNK; ordinary
// characters follow in sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() : Vocabulary(default_charset()) {}

  explicit Vocabulary(std::string_view chars, bool unk_enabled = true) : unk_enabled_(unk_enabled) {
    index_.fill(-1);
    std::string sorted(chars);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.empty()) throw VocabularyError("vocabulary needs at least one character");
    for (char c : sorted) {
      if (c == '\n' || c == '\r') throw VocabularyError("newline cannot be a vocabulary entry");
      index_[static_cast<unsigned char>(c)] = static_cast<int>(chars_.size()) + 2;
      chars_.push_back(c);
    }
  }

  static std::string default_charset() {
    std::string s = " ";
    for (char c = 'a'; c <= 'z'; ++c) s += c;
    for (char c = 'A'; c <= 'Z'; ++c) s += c;
    for (char c = '0'; c <= '9'; ++c) s += c;
    s += ".,;:!?'\"-()";
    return s;
  }

  // |V| including PAD and UNK.
  std::size_t size() const { return chars_.size() + 2; }
  bool unk_enabled() const { return unk_enabled_; }
  const std::string& chars() const { return chars_; }

  bool contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

  int index(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    if (i >= 0) return i;
    if (unk_enabled_) return kUnk;
    throw VocabularyError(std::string("character '") + c + "' is not in the vocabulary");
  }

  // Inverse lookup; PAD and UNK map to '\0'.
  char character(int id) const {
    if (id < 2 || static_cast<std::size_t>(id) >= size()) return '\0';
    return chars_[static_cast<std::size_t>(id - 2)];
  }

  // One character per line, sorted.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write vocabulary " + path);
    for (char c : chars_) out << c << '\n';
  }

  static Vocabulary load(const std::string& path, bool unk_enabled = true) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary " + path);
    std::string line, chars;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.size() != 1) throw ParseError(path, n, "expected exactly one character per line");
      chars += line[0];
    }
    return Vocabulary(chars, unk_enabled);
  }

 private:
  std::string chars_;
  std::array<int, 256> index_{};
  bool unk_enabled_ = true;
};

struct TextSequence {
  std::string chars;
  std::vector<int> ids;
  std::size_t length() const { return ids.size(); }
};

inline TextSequence encode_text(std::string_view text, const Vocabulary& vocab) {
  if (text.empty()) throw VocabularyError("text must contain at least one character");
  TextSequence out;
  out.chars = std::string(text);
  out.ids.reserve(text.size());
  for (char c : text) out.ids.push_back(vocab.index(c));
  return out;
}

}  // namespace trink
