#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "apm/errors.hpp"

namespace apm {

// Fixed-length bitset with an explicit byte layout: bit i lives in byte i/8
// at bit position i%8 (LSB-first). The byte vector is the wire format used by
// checkpoint files.
class DynBitset {
 public:
  DynBitset() = default;
  explicit DynBitset(std::size_t n) : n_(n), bytes_((n + 7) / 8, 0) {}

  static DynBitset from_bytes(std::vector<std::uint8_t> bytes, std::size_t n) {
    if (bytes.size() != (n + 7) / 8)
      throw Error("bitset: byte buffer length does not match bit count");
    DynBitset b;
    b.n_ = n;
    b.bytes_ = std::move(bytes);
    return b;
  }

  std::size_t size() const { return n_; }

  bool test(std::size_t i) const {
    return (bytes_[i >> 3] >> (i & 7)) & 1u;
  }

  void set(std::size_t i, bool value = true) {
    if (value)
      bytes_[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    else
      bytes_[i >> 3] &= static_cast<std::uint8_t>(~(1u << (i & 7)));
  }

  std::size_t popcount() const {
    std::size_t c = 0;
    for (std::uint8_t b : bytes_) c += std::popcount(b);
    return c;
  }

  // Trailing bits past size() must stay zero for the wire format.
  bool trailing_bits_clear() const {
    for (std::size_t i = n_; i < bytes_.size() * 8; ++i)
      if ((bytes_[i >> 3] >> (i & 7)) & 1u) return false;
    return true;
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  bool operator==(const DynBitset& o) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bytes_;
};

}  // namespace apm
