#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "trink/errors.hpp"

namespace trink {

// Levenshtein distance with unit insert/delete/substitute costs.
template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  const std::size_t n = std::size(b);
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  std::size_t i = 0;
  for (const auto& x : a) {
    ++i;
    cur[0] = i;
    std::size_t j = 0;
    for (const auto& y : b) {
      ++j;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x == y ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// Whitespace-run tokenization; punctuation is kept attached.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Character error rate, normalized by reference length.
inline double cer(std::string_view hyp, std::string_view ref) {
  if (ref.empty()) throw ContractError("cer: reference must be nonempty");
  return double(edit_distance(hyp, ref)) / double(ref.size());
}

// Word error rate, normalized by the number of reference words.
inline double wer(std::string_view hyp, std::string_view ref) {
  const auto r = split_words(ref);
  if (r.empty()) throw ContractError("wer: reference must contain at least one word");
  return double(edit_distance(split_words(hyp), r)) / double(r.size());
}

}  // namespace trink
