#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "levemb/errors.hpp"
#include "levemb/tensor.hpp"

namespace levemb {

using Code = std::uint8_t;

// Ordered symbol set with a reserved padding symbol in the last slot.
class Alphabet {
 public:
  // `content` lists the real symbols; `pad_symbol` is appended after them.
  explicit Alphabet(std::string_view content, char pad_symbol = '.');

  // {A, T, G, C, N} plus padding.
  static const Alphabet& dna();

  std::size_t size() const noexcept { return symbols_.size(); }
  std::size_t content_size() const noexcept { return symbols_.size() - 1; }
  Code pad_index() const noexcept { return static_cast<Code>(symbols_.size() - 1); }
  char pad_symbol() const noexcept { return symbols_.back(); }
  const std::string& symbols() const noexcept { return symbols_; }
  std::string_view content_symbols() const noexcept {
    return std::string_view(symbols_).substr(0, content_size());
  }

  char symbol(Code code) const;
  // Throws DataError for characters outside the content symbols.
  Code code_of(char c) const;

  bool operator==(const Alphabet& other) const { return symbols_ == other.symbols_; }

 private:
  std::string symbols_;
  std::array<std::int16_t, 256> lookup_{};
};

// Index-encoded symbol string. `codes` may carry a padding suffix; `length`
// counts the non-padding prefix.
struct Sequence {
  std::vector<Code> codes;
  std::size_t length = 0;

  std::span<const Code> content() const noexcept { return {codes.data(), length}; }
  std::size_t padded_length() const noexcept { return codes.size(); }

  bool operator==(const Sequence&) const = default;
};

Sequence make_sequence(std::vector<Code> codes);

// Throws DataError if a code is out of range or padding is not a suffix.
void validate(const Sequence& s, const Alphabet& alphabet);

Sequence parse_sequence(std::string_view text, const Alphabet& alphabet = Alphabet::dna());
std::string to_string(const Sequence& s, const Alphabet& alphabet = Alphabet::dna());

// Exact edit distance over the content symbols (two-row Wagner-Fischer).
int levenshtein(std::span<const Code> a, std::span<const Code> b);
int levenshtein(const Sequence& a, const Sequence& b);

// Edit distance restricted to the diagonal band |i - j| <= band. Returns
// std::nullopt (the overflow marker) whenever the true distance exceeds band.
std::optional<int> levenshtein_banded(std::span<const Code> a, std::span<const Code> b,
                                      int band);
std::optional<int> levenshtein_banded(const Sequence& a, const Sequence& b, int band);

// Suffix-pads to target_len. Throws DataError if the content is longer.
Sequence pad(const Sequence& s, std::size_t target_len, const Alphabet& alphabet);

// Writes the (alphabet_size, padded_len) one-hot block of `s` into `out`.
template <typename T>
void one_hot_into(const Sequence& s, std::size_t alphabet_size, std::span<T> out) {
  const std::size_t len = s.codes.size();
  if (out.size() != alphabet_size * len) {
    throw ShapeError("one-hot buffer has " + std::to_string(out.size()) + " slots, need " +
                     std::to_string(alphabet_size * len));
  }
  std::fill(out.begin(), out.end(), T{0});
  for (std::size_t j = 0; j < len; ++j) {
    const Code c = s.codes[j];
    if (c >= alphabet_size) {
      throw DataError("code " + std::to_string(c) + " out of range at position " +
                      std::to_string(j));
    }
    out[c * len + j] = T{1};
  }
}

template <typename T = float>
BasicTensor<T> one_hot(const Sequence& s, const Alphabet& alphabet) {
  if (s.codes.empty()) throw ShapeError("cannot one-hot encode an empty sequence");
  BasicTensor<T> out({alphabet.size(), s.codes.size()});
  one_hot_into<T>(s, alphabet.size(), out.data());
  return out;
}

// Length of the longest run of one repeated symbol in the content.
std::size_t longest_homopolymer(const Sequence& s);

}  // namespace levemb
