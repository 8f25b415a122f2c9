#include "screenmark/codec.hpp"

#include <bit>
#include <charconv>
#include <stdexcept>

namespace screenmark::codec {

namespace {

constexpr uint64_t kCodewordMask = (uint64_t{1} << kCodewordBits) - 1;

// GF(2^6) with primitive polynomial x^6 + x + 1.
struct Gf64 {
  static constexpr int kOrder = 63;
  std::array<uint8_t, 64> exp{};   // alpha^i, i in [0, 63)
  std::array<int, 64> log{};       // log[0] unused

  Gf64() {
    unsigned v = 1;
    for (int i = 0; i < kOrder; ++i) {
      exp[i] = static_cast<uint8_t>(v);
      log[v] = i;
      v <<= 1;
      if (v & 0x40u) v ^= 0x43u;
    }
  }
  uint8_t mul(uint8_t a, uint8_t b) const {
    if (a == 0 || b == 0) return 0;
    return exp[(log[a] + log[b]) % kOrder];
  }
  uint8_t inv(uint8_t a) const { return exp[(kOrder - log[a]) % kOrder]; }
  uint8_t pow_alpha(int e) const { return exp[((e % kOrder) + kOrder) % kOrder]; }
};

const Gf64& field() {
  static const Gf64 gf;
  return gf;
}

// Product of the minimal polynomials of alpha, alpha^3, alpha^5.
uint32_t compute_generator() {
  const Gf64& gf = field();
  // Polynomial over GF(64) accumulating prod (x - alpha^e) over the union of
  // cyclotomic cosets of 1, 3 and 5. Coefficients end up in GF(2).
  std::array<bool, 63> in_coset{};
  for (int root : {1, 3, 5}) {
    int e = root;
    do {
      in_coset[e] = true;
      e = (e * 2) % 63;
    } while (e != root);
  }
  std::vector<uint8_t> poly{1};
  for (int e = 0; e < 63; ++e) {
    if (!in_coset[e]) continue;
    std::vector<uint8_t> next(poly.size() + 1, 0);
    const uint8_t r = gf.pow_alpha(e);
    for (size_t k = 0; k < poly.size(); ++k) {
      next[k + 1] ^= poly[k];
      next[k] ^= gf.mul(poly[k], r);
    }
    poly = std::move(next);
  }
  uint32_t g = 0;
  for (size_t k = 0; k < poly.size(); ++k) {
    if (poly[k] > 1) throw std::logic_error("BCH generator has non-binary coefficient");
    if (poly[k]) g |= 1u << k;
  }
  return g;
}

uint32_t remainder(uint64_t dividend) {
  const uint64_t g = generator_polynomial();
  for (int k = 63; k >= kParityBits; --k) {
    if (dividend & (uint64_t{1} << k)) dividend ^= g << (k - kParityBits);
  }
  return static_cast<uint32_t>(dividend);
}

uint64_t parse_hex(std::string_view hex, size_t max_digits, const char* what) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.empty() || hex.size() > max_digits) {
    throw std::invalid_argument(std::string("bad ") + what + " hex string '" + std::string(hex) + "'");
  }
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (ec != std::errc{} || ptr != hex.data() + hex.size()) {
    throw std::invalid_argument(std::string("bad ") + what + " hex string '" + std::string(hex) + "'");
  }
  return value;
}

std::string to_hex(uint64_t value, int digits) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out(static_cast<size_t>(digits), '0');
  for (int i = digits - 1; i >= 0; --i, value >>= 4) out[static_cast<size_t>(i)] = kDigits[value & 0xF];
  return out;
}

}  // namespace

Payload::Payload(uint32_t value) : value_(value) {}

Payload Payload::from_bits(std::span<const uint8_t> bits) {
  if (bits.size() != kPayloadBits) {
    throw std::invalid_argument("payload must have 32 bits, got " + std::to_string(bits.size()));
  }
  uint32_t v = 0;
  for (uint8_t b : bits) v = (v << 1) | (b & 1u);
  return Payload(v);
}

Payload Payload::from_hex(std::string_view hex) {
  return Payload(static_cast<uint32_t>(parse_hex(hex, 8, "payload")));
}

std::vector<uint8_t> Payload::bits() const {
  std::vector<uint8_t> out(kPayloadBits);
  for (int i = 0; i < kPayloadBits; ++i) out[static_cast<size_t>(i)] = bit(i);
  return out;
}

std::string Payload::hex() const { return to_hex(value_, 8); }

Codeword Codeword::from_bits(std::span<const uint8_t> bits) {
  if (bits.size() != kCodewordBits) {
    throw std::invalid_argument("codeword must have 50 bits, got " + std::to_string(bits.size()));
  }
  uint64_t v = 0;
  for (uint8_t b : bits) v = (v << 1) | (b & 1u);
  return from_value(v);
}

Codeword Codeword::from_value(uint64_t value) {
  if (value & ~kCodewordMask) throw std::invalid_argument("codeword value exceeds 50 bits");
  Codeword c;
  c.value_ = value;
  return c;
}

Codeword Codeword::from_hex(std::string_view hex) { return from_value(parse_hex(hex, 13, "codeword")); }

std::vector<uint8_t> Codeword::bits() const {
  std::vector<uint8_t> out(kCodewordBits);
  for (int i = 0; i < kCodewordBits; ++i) out[static_cast<size_t>(i)] = bit(i);
  return out;
}

std::string Codeword::hex() const { return to_hex(value_, 13); }

int hamming_distance(const Codeword& a, const Codeword& b) { return std::popcount(a.value() ^ b.value()); }

uint32_t generator_polynomial() {
  static const uint32_t g = compute_generator();
  return g;
}

Codeword bch_encode(const Payload& payload) {
  const uint64_t shifted = uint64_t{payload.value()} << kParityBits;
  return Codeword::from_value(shifted | remainder(shifted));
}

Codeword bch_encode_bits(std::span<const uint8_t> payload_bits) {
  return bch_encode(Payload::from_bits(payload_bits));
}

std::optional<DecodeResult> bch_decode(const Codeword& word) {
  const Gf64& gf = field();
  const uint64_t r = word.value();

  // Syndromes S_1..S_6, S_j = r(alpha^j).
  std::array<uint8_t, 2 * kCorrectable> syn{};
  bool all_zero = true;
  for (int j = 1; j <= 2 * kCorrectable; ++j) {
    uint8_t s = 0;
    for (int k = 0; k < kCodewordBits; ++k) {
      if (r & (uint64_t{1} << k)) s ^= gf.pow_alpha(j * k);
    }
    syn[static_cast<size_t>(j - 1)] = s;
    all_zero = all_zero && s == 0;
  }
  if (all_zero) return DecodeResult{Payload(static_cast<uint32_t>(r >> kParityBits)), 0};

  // Berlekamp-Massey for the error locator Lambda(x).
  std::array<uint8_t, 2 * kCorrectable + 1> lambda{1}, prev{1}, tmp{};
  int length = 0;
  int shift = 1;
  uint8_t prev_disc = 1;
  for (int n = 0; n < 2 * kCorrectable; ++n) {
    uint8_t d = syn[static_cast<size_t>(n)];
    for (int i = 1; i <= length; ++i) d ^= gf.mul(lambda[static_cast<size_t>(i)], syn[static_cast<size_t>(n - i)]);
    if (d == 0) {
      ++shift;
      continue;
    }
    const uint8_t coef = gf.mul(d, gf.inv(prev_disc));
    tmp = lambda;
    for (size_t i = 0; i + static_cast<size_t>(shift) < lambda.size(); ++i) {
      lambda[i + static_cast<size_t>(shift)] ^= gf.mul(coef, prev[i]);
    }
    if (2 * length <= n) {
      length = n + 1 - length;
      prev = tmp;
      prev_disc = d;
      shift = 1;
    } else {
      ++shift;
    }
  }
  if (length > kCorrectable) return std::nullopt;
  for (size_t i = static_cast<size_t>(length) + 1; i < lambda.size(); ++i) {
    if (lambda[i] != 0) return std::nullopt;
  }

  // Chien search restricted to the 50 transmitted positions.
  uint64_t error = 0;
  int roots = 0;
  for (int k = 0; k < kCodewordBits; ++k) {
    uint8_t v = 0;
    for (int i = 0; i <= length; ++i) v ^= gf.mul(lambda[static_cast<size_t>(i)], gf.pow_alpha(-k * i));
    if (v == 0) {
      error |= uint64_t{1} << k;
      ++roots;
    }
  }
  if (roots != length) return std::nullopt;

  const uint64_t corrected = r ^ error;
  if (remainder(corrected) != 0) return std::nullopt;
  return DecodeResult{Payload(static_cast<uint32_t>(corrected >> kParityBits)), roots};
}

std::optional<DecodeResult> bch_decode_bits(std::span<const uint8_t> word_bits) {
  return bch_decode(Codeword::from_bits(word_bits));
}

Payload pack_identity(const IdentityFields& f) {
  auto check = [](uint32_t v, uint32_t limit, const char* name) {
    if (v >= limit) {
      throw std::out_of_range(std::string(name) + " = " + std::to_string(v) + " exceeds " + std::to_string(limit - 1));
    }
  };
  check(f.org_unit, 1u << 8, "org_unit");
  check(f.user_id, 1u << 12, "user_id");
  check(f.device_id, 1u << 8, "device_id");
  check(f.time_bucket, 1u << 4, "time_bucket");
  return Payload((f.org_unit << 24) | (f.user_id << 12) | (f.device_id << 4) | f.time_bucket);
}

IdentityFields unpack_identity(const Payload& p) {
  const uint32_t v = p.value();
  return IdentityFields{v >> 24, (v >> 12) & 0xFFFu, (v >> 4) & 0xFFu, v & 0xFu};
}

}  // namespace screenmark::codec
