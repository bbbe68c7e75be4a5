#include "actpred/bits.hpp"

#include <bit>
#include <cstdlib>
#include <string>

#include "actpred/parallel.hpp"

namespace actpred {

BitVector::BitVector(std::size_t size, bool value)
    : size_(size), words_((size + 63) / 64, value ? ~std::uint64_t{0} : 0) {
  if (value && (size & 63)) words_.back() &= (std::uint64_t{1} << (size & 63)) - 1;
}

void BitVector::set(std::size_t i, bool value) {
  const std::uint64_t mask = std::uint64_t{1} << (i & 63);
  if (value)
    words_[i >> 6] |= mask;
  else
    words_[i >> 6] &= ~mask;
}

std::size_t BitVector::count() const {
  std::size_t total = 0;
  for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::uint64_t BitVector::window64(std::ptrdiff_t start) const {
  const auto n = static_cast<std::ptrdiff_t>(size_);
  if (start >= n || start <= -64) return 0;
  auto word_at = [&](std::ptrdiff_t index) -> std::uint64_t {
    if (index < 0 || index >= static_cast<std::ptrdiff_t>(words_.size())) return 0;
    return words_[static_cast<std::size_t>(index)];
  };
  // Floor division keeps negative starts aligned.
  const std::ptrdiff_t word = start >= 0 ? start / 64 : -((-start + 63) / 64);
  const int offset = static_cast<int>(start - word * 64);
  std::uint64_t out = word_at(word) >> offset;
  if (offset != 0) out |= word_at(word + 1) << (64 - offset);
  // Words are zero past size_, so no tail masking is needed.
  return out;
}

std::size_t count_shifted_and(const BitVector& a, const BitVector& b, const BitVector& c,
                              const BitVector& d, std::ptrdiff_t shift) {
  std::size_t total = 0;
  const auto words = a.words();
  const auto cw = c.words();
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::uint64_t left = words[w] & (w < cw.size() ? cw[w] : 0);
    if (left == 0) continue;
    const auto start = static_cast<std::ptrdiff_t>(w * 64) + shift;
    total += static_cast<std::size_t>(std::popcount(left & b.window64(start) & d.window64(start)));
  }
  return total;
}

int default_thread_count() {
  if (const char* env = std::getenv("ACTPRED_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace actpred
