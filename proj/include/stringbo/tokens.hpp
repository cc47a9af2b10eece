#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stringbo {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One alphabet element. Usually a single character; codons and grammar
/// terminals such as "sin(" are single tokens too.
using Token = std::string;

/// A string is a sequence of tokens; kernel lengths count tokens.
using Str = std::vector<Token>;

/// Concatenation of the tokens, for display and file output.
inline std::string join(const Str& s) {
  std::string out;
  for (const auto& t : s) out += t;
  return out;
}

/// Splits text into one token per UTF-8 code point.
inline Str chars(std::string_view text) {
  Str out;
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t n = 1;
    if (lead >= 0xF0) n = 4;
    else if (lead >= 0xE0) n = 3;
    else if (lead >= 0xC0) n = 2;
    n = std::min(n, text.size() - i);
    out.emplace_back(text.substr(i, n));
    i += n;
  }
  return out;
}

/// Ordered set of distinct tokens.
class Alphabet {
 public:
  Alphabet() = default;

  explicit Alphabet(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw Error("alphabet must be nonempty");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw Error("alphabet tokens must be nonempty");
      if (!index_.emplace(tokens_[i], i).second)
        throw Error("duplicate alphabet token '" + tokens_[i] + "'");
      longest_ = std::max(longest_, tokens_[i].size());
    }
  }

  /// Alphabet of the individual characters of `text`, in first-seen order.
  static Alphabet from_chars(std::string_view text) {
    std::vector<Token> tokens;
    for (auto& t : chars(text))
      if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
    return Alphabet(std::move(tokens));
  }

  std::size_t size() const { return tokens_.size(); }
  const Token& operator[](std::size_t i) const { return tokens_[i]; }
  const std::vector<Token>& tokens() const { return tokens_; }
  bool contains(const Token& t) const { return index_.count(t) != 0; }

  std::size_t index_of(const Token& t) const {
    auto it = index_.find(t);
    if (it == index_.end()) throw Error("token '" + t + "' not in alphabet");
    return it->second;
  }

  /// Greedy longest-match tokenization; throws on text the alphabet can't cover.
  Str tokenize(std::string_view text) const {
    Str out;
    std::size_t i = 0;
    while (i < text.size()) {
      bool matched = false;
      for (std::size_t len = std::min(longest_, text.size() - i); len > 0; --len) {
        std::string piece(text.substr(i, len));
        if (contains(piece)) {
          out.push_back(std::move(piece));
          i += len;
          matched = true;
          break;
        }
      }
      if (!matched)
        throw Error("cannot tokenize '" + std::string(text) + "' at offset " + std::to_string(i));
    }
    return out;
  }

 private:
  std::vector<Token> tokens_;
  std::unordered_map<Token, std::size_t> index_;
  std::size_t longest_ = 0;
};

}  // namespace stringbo
