#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <string_view>

namespace qube {

/// 128-bit digest used for structural identity. Wide enough that the
/// engine treats collisions as "practically never", but every consumer that
/// merges nodes still confirms equality structurally before acting.
struct HashDigest {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend constexpr bool operator==(const HashDigest&, const HashDigest&) = default;
  friend constexpr auto operator<=>(const HashDigest&, const HashDigest&) = default;

  std::string hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s(32, '0');
    for (int i = 0; i < 16; ++i) {
      const std::uint64_t w = i < 8 ? hi : lo;
      const int shift = 56 - 8 * (i % 8);
      const unsigned byte = static_cast<unsigned>((w >> shift) & 0xff);
      s[2 * i] = kHex[byte >> 4];
      s[2 * i + 1] = kHex[byte & 0xf];
    }
    return s;
  }
};

struct HashDigestHasher {
  std::size_t operator()(const HashDigest& d) const {
    // The digest is already well mixed; fold the halves.
    return static_cast<std::size_t>(d.hi ^ (d.lo * 0x9e3779b97f4a7c15ULL));
  }
};

namespace detail {

inline constexpr std::uint64_t rotl64(std::uint64_t x, int r) {
  return (x << r) | (x >> (64 - r));
}

inline constexpr std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

// Byte-wise little-endian load keeps digests identical across hosts.
inline std::uint64_t load_le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

/// MurmurHash3 x64 128 over a byte buffer. Deterministic across platforms
/// (explicit little-endian loads, no alignment assumptions).
inline HashDigest murmur3_x64_128(const void* data, std::size_t len,
                                  std::uint64_t seed = 0) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  const std::size_t nblocks = len / 16;

  std::uint64_t h1 = seed;
  std::uint64_t h2 = seed;
  constexpr std::uint64_t c1 = 0x87c37b91114253d5ULL;
  constexpr std::uint64_t c2 = 0x4cf5ad432745937fULL;

  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint64_t k1 = detail::load_le64(bytes + i * 16);
    std::uint64_t k2 = detail::load_le64(bytes + i * 16 + 8);

    k1 *= c1; k1 = detail::rotl64(k1, 31); k1 *= c2; h1 ^= k1;
    h1 = detail::rotl64(h1, 27); h1 += h2; h1 = h1 * 5 + 0x52dce729;

    k2 *= c2; k2 = detail::rotl64(k2, 33); k2 *= c1; h2 ^= k2;
    h2 = detail::rotl64(h2, 31); h2 += h1; h2 = h2 * 5 + 0x38495ab5;
  }

  const unsigned char* tail = bytes + nblocks * 16;
  std::uint64_t k1 = 0;
  std::uint64_t k2 = 0;
  switch (len & 15) {
    case 15: k2 ^= static_cast<std::uint64_t>(tail[14]) << 48; [[fallthrough]];
    case 14: k2 ^= static_cast<std::uint64_t>(tail[13]) << 40; [[fallthrough]];
    case 13: k2 ^= static_cast<std::uint64_t>(tail[12]) << 32; [[fallthrough]];
    case 12: k2 ^= static_cast<std::uint64_t>(tail[11]) << 24; [[fallthrough]];
    case 11: k2 ^= static_cast<std::uint64_t>(tail[10]) << 16; [[fallthrough]];
    case 10: k2 ^= static_cast<std::uint64_t>(tail[9]) << 8; [[fallthrough]];
    case 9:
      k2 ^= static_cast<std::uint64_t>(tail[8]);
      k2 *= c2; k2 = detail::rotl64(k2, 33); k2 *= c1; h2 ^= k2;
      [[fallthrough]];
    case 8: k1 ^= static_cast<std::uint64_t>(tail[7]) << 56; [[fallthrough]];
    case 7: k1 ^= static_cast<std::uint64_t>(tail[6]) << 48; [[fallthrough]];
    case 6: k1 ^= static_cast<std::uint64_t>(tail[5]) << 40; [[fallthrough]];
    case 5: k1 ^= static_cast<std::uint64_t>(tail[4]) << 32; [[fallthrough]];
    case 4: k1 ^= static_cast<std::uint64_t>(tail[3]) << 24; [[fallthrough]];
    case 3: k1 ^= static_cast<std::uint64_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k1 ^= static_cast<std::uint64_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k1 ^= static_cast<std::uint64_t>(tail[0]);
      k1 *= c1; k1 = detail::rotl64(k1, 31); k1 *= c2; h1 ^= k1;
      break;
    case 0:
      break;
  }

  h1 ^= static_cast<std::uint64_t>(len);
  h2 ^= static_cast<std::uint64_t>(len);
  h1 += h2;
  h2 += h1;
  h1 = detail::fmix64(h1);
  h2 = detail::fmix64(h2);
  h1 += h2;
  h2 += h1;
  return HashDigest{h1, h2};
}

inline HashDigest murmur3_x64_128(std::string_view s, std::uint64_t seed = 0) {
  return murmur3_x64_128(s.data(), s.size(), seed);
}

// Without this overload a string literal would bind to (const void*, len)
// with the seed consumed as the length.
inline HashDigest murmur3_x64_128(const char* s, std::uint64_t seed = 0) {
  return murmur3_x64_128(std::string_view(s), seed);
}

/// Builds the canonical byte stream a node digest is computed over.
/// All integers are written little-endian with explicit widths, so the
/// resulting digests are stable across platforms and runs.
class HashWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

  void bytes(std::string_view s) { buf_.append(s.data(), s.size()); }

  /// Length-prefixed string; the prefix keeps concatenated fields unambiguous.
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }

  void digest(const HashDigest& d) {
    u64(d.hi);
    u64(d.lo);
  }

  HashDigest finish(std::uint64_t seed = 0) const {
    return murmur3_x64_128(buf_.data(), buf_.size(), seed);
  }

  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

}  // namespace qube
