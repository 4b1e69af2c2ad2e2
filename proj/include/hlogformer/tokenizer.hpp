#pragma once

// Word-level tokenizer: ASCII-lowercased, split on whitespace, ASCII
// punctuation kept as single-character tokens.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hlogformer/errors.hpp"

namespace hlog {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kMask = 2;
inline constexpr int kSum = 3;
inline constexpr int kNumSpecials = 4;

inline constexpr std::string_view kSpecialForms[kNumSpecials] = {"⟨PAD⟩", "⟨UNK⟩", "⟨MASK⟩",
                                                                  "⟨SUM⟩"};

/// Splits text into normalized tokens. Raw text spelling a reserved special
/// form is escaped with a leading backslash so it can never map to a
/// special id. (ASCII lowercasing already rules this out for the current
/// forms; the escape keeps the guarantee independent of their spelling.)
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    for (auto form : kSpecialForms)
      if (cur == form) cur.insert(cur.begin(), '\\');
    out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

/// Tokens joined by single spaces.
inline std::string normalize(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

class Vocab {
 public:
  Vocab() {
    for (auto form : kSpecialForms) id_to_token_.emplace_back(form);
  }

  std::size_t size() const noexcept { return id_to_token_.size(); }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size())
      throw data_error("token id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(size()));
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  /// Appends a regular token and returns its id; existing tokens keep theirs.
  int add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : tokenize(text)) ids.push_back(id(t));
    return ids;
  }

  std::string decode(std::span<const int> ids) const {
    std::string out;
    for (int i : ids) {
      if (!out.empty()) out += ' ';
      out += token(i);
    }
    return out;
  }

  /// One token per line; line number is the id.
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot write vocabulary " + path);
    for (const auto& t : id_to_token_) f << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot read vocabulary " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return from_lines(lines);
  }

  static Vocab from_lines(const std::vector<std::string>& lines) {
    if (lines.size() < kNumSpecials) throw data_error("vocabulary is missing special tokens");
    for (int i = 0; i < kNumSpecials; ++i)
      if (lines[i] != kSpecialForms[i]) throw data_error("vocabulary special token mismatch");
    Vocab v;
    for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
      if (v.add(lines[i]) != static_cast<int>(i))
        throw data_error("duplicate vocabulary token '" + lines[i] + "'");
    }
    return v;
  }

  bool operator==(const Vocab& o) const { return id_to_token_ == o.id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Specials first, then tokens with frequency >= min_freq by descending
/// frequency, ties in byte-wise lexicographic order.
inline Vocab build_vocab(std::span<const std::string> corpus, std::size_t min_freq) {
  if (corpus.empty()) throw EmptyCorpus();
  std::map<std::string, std::size_t> freq;
  for (const auto& text : corpus)
    for (auto& t : tokenize(text)) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : items)
    if (n >= min_freq) v.add(tok);
  return v;
}

}  // namespace hlog
