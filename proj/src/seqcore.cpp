#include "levemb/seqcore.hpp"

#include <algorithm>
#include <numeric>

namespace levemb {

Alphabet::Alphabet(std::string_view content, char pad_symbol) {
  symbols_.assign(content.begin(), content.end());
  symbols_.push_back(pad_symbol);
  if (symbols_.size() < 2) throw UsageError("alphabet needs at least one content symbol");
  if (symbols_.size() > 255) throw UsageError("alphabet too large");
  lookup_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto slot = static_cast<unsigned char>(symbols_[i]);
    if (lookup_[slot] != -1) {
      throw UsageError(std::string("duplicate alphabet symbol '") + symbols_[i] + "'");
    }
    lookup_[slot] = static_cast<std::int16_t>(i);
  }
}

const Alphabet& Alphabet::dna() {
  static const Alphabet alphabet("ATGCN");
  return alphabet;
}

char Alphabet::symbol(Code code) const {
  if (code >= symbols_.size()) {
    throw DataError("code " + std::to_string(code) + " outside alphabet of size " +
                    std::to_string(symbols_.size()));
  }
  return symbols_[code];
}

Code Alphabet::code_of(char c) const {
  const auto idx = lookup_[static_cast<unsigned char>(c)];
  if (idx < 0 || static_cast<Code>(idx) == pad_index()) {
    throw DataError(std::string("unknown sequence character '") + c + "'");
  }
  return static_cast<Code>(idx);
}

Sequence make_sequence(std::vector<Code> codes) {
  Sequence s;
  s.length = codes.size();
  s.codes = std::move(codes);
  return s;
}

void validate(const Sequence& s, const Alphabet& alphabet) {
  if (s.length > s.codes.size()) throw DataError("sequence length exceeds its code count");
  for (std::size_t i = 0; i < s.codes.size(); ++i) {
    const Code c = s.codes[i];
    if (c >= alphabet.size()) {
      throw DataError("code " + std::to_string(c) + " out of range at position " +
                      std::to_string(i));
    }
    const bool is_pad = c == alphabet.pad_index();
    if (is_pad != (i >= s.length)) {
      throw DataError("padding must occupy exactly the suffix after position " +
                      std::to_string(s.length));
    }
  }
}

Sequence parse_sequence(std::string_view text, const Alphabet& alphabet) {
  std::vector<Code> codes;
  codes.reserve(text.size());
  for (char c : text) codes.push_back(alphabet.code_of(c));
  return make_sequence(std::move(codes));
}

std::string to_string(const Sequence& s, const Alphabet& alphabet) {
  std::string out;
  out.reserve(s.length);
  for (Code c : s.content()) out.push_back(alphabet.symbol(c));
  return out;
}

int levenshtein(std::span<const Code> a, std::span<const Code> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // b is the shorter side; rows have |b|+1 cells.
  const std::size_t m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    const Code ai = a[i - 1];
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ai != b[j - 1] ? 1 : 0);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

int levenshtein(const Sequence& a, const Sequence& b) {
  return levenshtein(a.content(), b.content());
}

std::optional<int> levenshtein_banded(std::span<const Code> a, std::span<const Code> b,
                                      int band) {
  if (band < 0) return std::nullopt;
  if (a.size() < b.size()) std::swap(a, b);
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  const auto m = static_cast<std::ptrdiff_t>(b.size());
  const std::ptrdiff_t w = band;
  if (n - m > w) return std::nullopt;

  const int inf = band + 1;
  std::vector<int> prev(static_cast<std::size_t>(m + 1), inf);
  std::vector<int> cur(static_cast<std::size_t>(m + 1), inf);
  for (std::ptrdiff_t j = 0; j <= std::min(m, w); ++j) prev[j] = static_cast<int>(j);

  for (std::ptrdiff_t i = 1; i <= n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - w);
    const std::ptrdiff_t hi = std::min(m, i + w);
    if (lo > 0) cur[lo - 1] = inf;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      if (j == 0) {
        cur[0] = static_cast<int>(i);
        continue;
      }
      int best = prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      if (j < i + w) best = std::min(best, prev[j] + 1);
      if (j > lo) best = std::min(best, cur[j - 1] + 1);
      cur[j] = std::min(best, inf);
    }
    if (hi < m) cur[hi + 1] = inf;
    std::swap(prev, cur);
  }
  const int d = prev[m];
  if (d > band) return std::nullopt;
  return d;
}

std::optional<int> levenshtein_banded(const Sequence& a, const Sequence& b, int band) {
  return levenshtein_banded(a.content(), b.content(), band);
}

Sequence pad(const Sequence& s, std::size_t target_len, const Alphabet& alphabet) {
  if (s.length > target_len) {
    throw DataError("sequence of length " + std::to_string(s.length) +
                    " does not fit padded length " + std::to_string(target_len));
  }
  Sequence out;
  out.length = s.length;
  out.codes.assign(s.codes.begin(), s.codes.begin() + static_cast<std::ptrdiff_t>(s.length));
  out.codes.resize(target_len, alphabet.pad_index());
  return out;
}

std::size_t longest_homopolymer(const Sequence& s) {
  std::size_t best = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < s.length; ++i) {
    run = (i > 0 && s.codes[i] == s.codes[i - 1]) ? run + 1 : 1;
    best = std::max(best, run);
  }
  return best;
}

}  // namespace levemb
