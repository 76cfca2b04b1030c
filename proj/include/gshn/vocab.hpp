#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gshn {

// Toy whitespace tokenizer vocabulary. Specials occupy the first five ids.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;
  static constexpr int kNumSpecials = 5;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  std::size_t size() const { return tokens.size(); }

  int id(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? kUnk : it->second;
  }

  static Vocabulary build(const std::vector<std::string>& corpus_words) {
    Vocabulary v;
    v.tokens = {"[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]"};
    std::set<std::string> uniq(corpus_words.begin(), corpus_words.end());
    for (const auto& w : uniq) v.tokens.push_back(w);
    for (std::size_t i = 0; i < v.tokens.size(); ++i)
      v.index[v.tokens[i]] = static_cast<int>(i);
    return v;
  }

  static Vocabulary from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    if (v.tokens.size() < kNumSpecials || v.tokens[0] != "[PAD]" ||
        v.tokens[1] != "[MASK]" || v.tokens[2] != "[CLS]" ||
        v.tokens[3] != "[SEP]" || v.tokens[4] != "[UNK]")
      throw std::invalid_argument("Vocabulary: specials missing or reordered");
    for (std::size_t i = 0; i < v.tokens.size(); ++i)
      v.index[v.tokens[i]] = static_cast<int>(i);
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Vocabulary: cannot write " + path);
    for (const auto& t : tokens) out << t << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Vocabulary: cannot read " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) toks.push_back(line);
    return from_tokens(std::move(toks));
  }
};

inline std::vector<std::string> split_lower(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    words.push_back(w);
  }
  return words;
}

// Lowercase whitespace split; CLS prepended, SEP appended, UNK for unknowns.
inline std::vector<int> tokenize(const std::string& text,
                                 const Vocabulary& vocab) {
  std::vector<int> ids = {Vocabulary::kCls};
  for (const auto& w : split_lower(text)) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kSep);
  return ids;
}

}  // namespace gshn
