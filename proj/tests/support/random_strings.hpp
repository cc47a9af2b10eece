#pragma once

#include <string>
#include <vector>

#include "stringbo/rng.hpp"
#include "stringbo/tokens.hpp"

namespace stringbo::testing {

inline Str random_str(Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t alphabet) {
  Str s(rng.between(min_len, max_len));
  for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.index(alphabet)));
  return s;
}

inline Str str(const std::string& text) { return chars(text); }

}  // namespace stringbo::testing
