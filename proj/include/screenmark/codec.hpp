#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace screenmark::codec {

inline constexpr int kPayloadBits = 32;
inline constexpr int kParityBits = 18;
inline constexpr int kCodewordBits = kPayloadBits + kParityBits;  // 50
inline constexpr int kCorrectable = 3;

// Full-length BCH(63,45) parameters; the (50,32) code is obtained by treating
// the 13 leading information positions as zero.
inline constexpr int kFieldBits = 6;
inline constexpr int kFullLength = 63;
inline constexpr int kFullInfo = 45;

/// 32 identity bits; bit 0 is the most significant bit of `value()`.
class Payload {
 public:
  Payload() = default;
  explicit Payload(uint32_t value);
  static Payload from_bits(std::span<const uint8_t> bits);
  static Payload from_hex(std::string_view hex);

  uint32_t value() const { return value_; }
  uint8_t bit(int i) const { return static_cast<uint8_t>((value_ >> (31 - i)) & 1u); }
  std::vector<uint8_t> bits() const;
  std::string hex() const;

  friend bool operator==(const Payload&, const Payload&) = default;

 private:
  uint32_t value_ = 0;
};

/// A 50-bit message m. Bits are stored MSB first: payload bits 0..31 then
/// parity bits 32..49.
class Codeword {
 public:
  Codeword() = default;
  static Codeword from_bits(std::span<const uint8_t> bits);
  static Codeword from_value(uint64_t value);
  static Codeword from_hex(std::string_view hex);

  uint64_t value() const { return value_; }
  uint8_t bit(int i) const { return static_cast<uint8_t>((value_ >> (kCodewordBits - 1 - i)) & 1u); }
  void flip(int i) { value_ ^= uint64_t{1} << (kCodewordBits - 1 - i); }
  std::vector<uint8_t> bits() const;
  /// 13 hex digits, the two pad bits on top are zero.
  std::string hex() const;

  Codeword operator^(const Codeword& o) const { return from_value(value_ ^ o.value_); }
  friend bool operator==(const Codeword&, const Codeword&) = default;

 private:
  uint64_t value_ = 0;
};

int hamming_distance(const Codeword& a, const Codeword& b);

struct DecodeResult {
  Payload payload;
  int corrections = 0;
};

/// Generator polynomial of BCH(63,45), bit k = coefficient of x^k (degree 18).
uint32_t generator_polynomial();

Codeword bch_encode(const Payload& payload);
Codeword bch_encode_bits(std::span<const uint8_t> payload_bits);

/// Bounded-distance decoding (t = 3). Returns nullopt when no codeword lies
/// within distance 3. Words further than 3 from the sent codeword may decode
/// to a different payload.
std::optional<DecodeResult> bch_decode(const Codeword& word);
std::optional<DecodeResult> bch_decode_bits(std::span<const uint8_t> word_bits);

struct IdentityFields {
  uint32_t org_unit = 0;     // 8 bits
  uint32_t user_id = 0;      // 12 bits
  uint32_t device_id = 0;    // 8 bits
  uint32_t time_bucket = 0;  // 4 bits

  friend bool operator==(const IdentityFields&, const IdentityFields&) = default;
};

/// Big-endian field order org_unit | user_id | device_id | time_bucket.
Payload pack_identity(const IdentityFields& fields);
IdentityFields unpack_identity(const Payload& payload);

}  // namespace screenmark::codec
