#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace actpred {

/// Packed bit sequence; bit t lives in word t/64 at position t%64.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t size, bool value = false);

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  bool operator[](std::size_t i) const { return test(i); }
  void set(std::size_t i, bool value = true);

  std::size_t count() const;
  std::span<const std::uint64_t> words() const { return words_; }

  /// Bits [start, start + 64) as one word; positions outside [0, size) read 0.
  std::uint64_t window64(std::ptrdiff_t start) const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Number of t in [0, n) with a(t) & b(t + shift) & c(t) & d(t + shift),
/// where n = a.size() and out-of-range reads are 0.
std::size_t count_shifted_and(const BitVector& a, const BitVector& b, const BitVector& c,
                              const BitVector& d, std::ptrdiff_t shift);

}  // namespace actpred
