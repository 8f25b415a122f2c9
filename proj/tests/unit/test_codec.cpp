#include "doctest.h"
#include "screenmark/codec.hpp"

#include <algorithm>
#include <map>
#include <random>

using namespace screenmark::codec;

namespace {

// Oracle: BCH(63,45) generator from the standard table (octal 1701317),
// independent of the coset construction in the implementation.
std::vector<uint8_t> table_generator() {
  const std::string octal = "1701317";
  std::vector<uint8_t> bits;  // highest degree first
  for (char c : octal) {
    int d = c - '0';
    bits.push_back((d >> 2) & 1);
    bits.push_back((d >> 1) & 1);
    bits.push_back(d & 1);
  }
  bits.erase(bits.begin(), std::find(bits.begin(), bits.end(), 1));
  return bits;
}

// Schoolbook GF(2) long division on bit vectors (highest degree first).
std::vector<uint8_t> long_division_remainder(std::vector<uint8_t> dividend, const std::vector<uint8_t>& divisor) {
  for (size_t i = 0; i + divisor.size() <= dividend.size(); ++i) {
    if (!dividend[i]) continue;
    for (size_t j = 0; j < divisor.size(); ++j) dividend[i + j] ^= divisor[j];
  }
  return {dividend.end() - static_cast<long>(divisor.size() - 1), dividend.end()};
}

std::vector<uint8_t> oracle_parity(const Payload& p) {
  std::vector<uint8_t> dividend = p.bits();
  dividend.resize(kPayloadBits + kParityBits, 0);
  return long_division_remainder(dividend, table_generator());
}

// Brute-force bounded-distance decoder: syndrome table for all error
// patterns of weight <= 3.
struct TableDecoder {
  std::map<std::vector<uint8_t>, std::vector<int>> table;
  TableDecoder() {
    const auto g = table_generator();
    auto add = [&](std::vector<int> pos) {
      std::vector<uint8_t> e(kCodewordBits, 0);
      for (int p : pos) e[static_cast<size_t>(p)] = 1;
      auto [it, inserted] = table.emplace(long_division_remainder(e, g), pos);
      REQUIRE_MESSAGE(inserted, "two weight<=3 patterns share a syndrome: distance < 7");
    };
    add({});
    for (int a = 0; a < kCodewordBits; ++a) {
      add({a});
      for (int b = a + 1; b < kCodewordBits; ++b) {
        add({a, b});
        for (int c = b + 1; c < kCodewordBits; ++c) add({a, b, c});
      }
    }
  }
  std::optional<DecodeResult> decode(const Codeword& w) const {
    auto it = table.find(long_division_remainder(w.bits(), table_generator()));
    if (it == table.end()) return std::nullopt;
    Codeword fixed = w;
    for (int p : it->second) fixed.flip(p);
    return DecodeResult{Payload(static_cast<uint32_t>(fixed.value() >> kParityBits)),
                        static_cast<int>(it->second.size())};
  }
};

const TableDecoder& table_decoder() {
  static const TableDecoder t;
  return t;
}

}  // namespace

TEST_CASE("generator polynomial matches the BCH(63,45) table entry") {
  const auto g = table_generator();
  REQUIRE(g.size() == 19);
  uint32_t expected = 0;
  for (uint8_t b : g) expected = (expected << 1) | b;
  CHECK(generator_polynomial() == expected);
}

TEST_CASE("all-zero payload encodes to the all-zero codeword") {
  CHECK(bch_encode(Payload(0)).value() == 0);
}

TEST_CASE("payload 0x00000001 parity matches long division") {
  const Payload p(1);
  const Codeword c = bch_encode(p);
  const auto parity = oracle_parity(p);
  for (int i = 0; i < kParityBits; ++i) CHECK(c.bit(kPayloadBits + i) == parity[static_cast<size_t>(i)]);
  for (int i = 0; i < kPayloadBits; ++i) CHECK(c.bit(i) == p.bit(i));
}

TEST_CASE("encoder is systematic and matches the oracle on random payloads") {
  std::mt19937 rng(11);
  for (int t = 0; t < 200; ++t) {
    const Payload p(static_cast<uint32_t>(rng()));
    const Codeword c = bch_encode(p);
    const auto parity = oracle_parity(p);
    for (int i = 0; i < kPayloadBits; ++i) REQUIRE(c.bit(i) == p.bit(i));
    for (int i = 0; i < kParityBits; ++i) REQUIRE(c.bit(kPayloadBits + i) == parity[static_cast<size_t>(i)]);
  }
}

TEST_CASE("linearity: encode(a) ^ encode(b) == encode(a ^ b)") {
  std::mt19937 rng(5);
  for (int t = 0; t < 500; ++t) {
    const uint32_t a = static_cast<uint32_t>(rng()), b = static_cast<uint32_t>(rng());
    CHECK((bch_encode(Payload(a)) ^ bch_encode(Payload(b))) == bch_encode(Payload(a ^ b)));
  }
}

TEST_CASE("decoding agrees with the brute-force table decoder") {
  const TableDecoder& oracle = table_decoder();
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> pos(0, kCodewordBits - 1);
  int miscorrections = 0, failures = 0;
  for (int t = 0; t < 400; ++t) {
    const Payload p(static_cast<uint32_t>(rng()));
    Codeword w = bch_encode(p);
    const int flips = t % 8;
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < flips) {
      int k = pos(rng);
      if (std::find(chosen.begin(), chosen.end(), k) == chosen.end()) chosen.push_back(k);
    }
    for (int k : chosen) w.flip(k);
    const auto got = bch_decode(w);
    const auto want = oracle.decode(w);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(got->payload == want->payload);
      CHECK(got->corrections == want->corrections);
    }
    if (flips <= kCorrectable) {
      REQUIRE(got.has_value());
      CHECK(got->payload == p);
      CHECK(got->corrections == flips);
    } else if (!got) {
      ++failures;
    } else if (!(got->payload == p)) {
      ++miscorrections;
    }
  }
  MESSAGE("beyond t: failures=" << failures << " miscorrections=" << miscorrections);
}

TEST_CASE("seven flipped bits never decode back to the original payload") {
  std::mt19937 rng(21);
  for (int t = 0; t < 100; ++t) {
    const Payload p(static_cast<uint32_t>(rng()));
    Codeword w = bch_encode(p);
    std::vector<int> idx(kCodewordBits);
    for (int i = 0; i < kCodewordBits; ++i) idx[static_cast<size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < 7; ++i) w.flip(idx[static_cast<size_t>(i)]);
    const auto got = bch_decode(w);
    CHECK((!got || !(got->payload == p)));
  }
}

TEST_CASE("hex serialization") {
  CHECK(Payload::from_hex("DEADBEEF").value() == 0xDEADBEEFu);
  CHECK(Payload(0xDEADBEEFu).hex() == "DEADBEEF");
  const Codeword c = bch_encode(Payload(0xFFFFFFFFu));
  CHECK(c.hex().size() == 13);
  CHECK(c.hex()[0] <= '3');
  CHECK(Codeword::from_hex(c.hex()) == c);
  CHECK_THROWS_AS(Payload::from_hex("GG"), std::invalid_argument);
  CHECK_THROWS_AS(Payload::from_hex("123456789"), std::invalid_argument);
  CHECK_THROWS_AS(Codeword::from_value(uint64_t{1} << 50), std::invalid_argument);
}

TEST_CASE("wrong bit-vector lengths are rejected") {
  std::vector<uint8_t> bits31(31, 0), bits49(49, 0);
  CHECK_THROWS_AS(bch_encode_bits(bits31), std::invalid_argument);
  CHECK_THROWS_AS(bch_decode_bits(bits49), std::invalid_argument);
}

TEST_CASE("identity packing") {
  CHECK(pack_identity({}).value() == 0);
  const IdentityFields ones{1, 1, 1, 1};
  CHECK(unpack_identity(pack_identity(ones)) == ones);
  CHECK(pack_identity(ones).value() == 0x01001011u);
  CHECK_THROWS_AS(pack_identity({0, 4096, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(pack_identity({256, 0, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(pack_identity({0, 0, 0, 16}), std::out_of_range);

  std::mt19937 rng(9);
  for (int t = 0; t < 1000; ++t) {
    const Payload p(static_cast<uint32_t>(rng()));
    CHECK(pack_identity(unpack_identity(p)) == p);
  }
}
