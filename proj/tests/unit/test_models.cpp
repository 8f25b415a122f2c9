#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "screenmark/codec.hpp"
#include "screenmark/models.hpp"
#include "test_util.hpp"

using namespace screenmark;

TEST_SUITE("models") {

TEST_CASE("shift target layout") {
  const GrayImage t = make_shift_target(24, 2);
  CHECK(t.at(12, 12) == 1.0);
  CHECK(t.at(10, 14) == 1.0);
  CHECK(t.at(9, 12) == 0.0);
  CHECK(t.at(0, 0) == -1.0);
  CHECK(t.at(23, 0) == -1.0);
  CHECK(t.at(1, 22) == -1.0);
  CHECK(t.at(2, 0) == 0.0);
  const auto pos = std::count(t.px.begin(), t.px.end(), 1.0), neg = std::count(t.px.begin(), t.px.end(), -1.0);
  CHECK(pos == 25);
  CHECK(neg == 16);
  CHECK_THROWS_AS(make_shift_target(16, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_shift_target(16, 0), std::invalid_argument);
}

TEST_CASE("wrap_shift reduces into the half-open window") {
  CHECK(wrap_shift(0, 0, 64) == ShiftEstimate{0, 0});
  CHECK(wrap_shift(32, -32, 64) == ShiftEstimate{32, 32});
  CHECK(wrap_shift(33, 63, 64) == ShiftEstimate{-31, -1});
  CHECK(wrap_shift(-65, 130, 64) == ShiftEstimate{-1, 2});
}

TEST_CASE("locate_shift recovers every shift of the exact target") {
  const int s = 24, c = 2;
  const GrayImage t = make_shift_target(s, c);
  for (int dy = -(s - 1) / 2; dy <= s / 2; ++dy)
    for (int dx = -(s - 1) / 2; dx <= s / 2; ++dx) CHECK(locate_shift(cyclic_shift(t, dx, dy), c) == ShiftEstimate{dx, dy});
}

TEST_CASE("locate_shift on constant input is zero") {
  CHECK(locate_shift(GrayImage(16, 16, 0.3), 1) == ShiftEstimate{0, 0});
  CHECK(locate_shift(GrayImage(16, 16), 1) == ShiftEstimate{0, 0});
}

TEST_CASE("locate_shift tolerates noise") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.3);
  const GrayImage t = make_shift_target(64, 3);
  for (int k = 0; k < 10; ++k) {
    const int dx = static_cast<int>(rng() % 64) - 31, dy = static_cast<int>(rng() % 64) - 31;
    GrayImage o = cyclic_shift(t, dx, dy);
    for (double& v : o.px) v += n(rng);
    CHECK(locate_shift(o, 3) == ShiftEstimate{dx, dy});
  }
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp = testutil::tiny_hyper();
  CHECK_NOTHROW(hp.validate());
  hp.tile_size = 18;  // not divisible by 2^depth
  CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
  hp = testutil::tiny_hyper();
  hp.decoder_head = "mlp";
  CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
  CHECK(default_center_half(120) == 5);
  CHECK(default_center_half(64) == 3);
}

TEST_CASE("encoder output is an S x S tile in [0,1]") {
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(), 1);
  const GrayImage t = encoder_forward(codec::bch_encode(codec::Payload(0xCAFEF00D)), b);
  CHECK(t.width == 16);
  CHECK(t.height == 16);
  for (double v : t.px) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(shift_decoder_forward(t, b).width == 16);
  const auto p = message_decoder_forward(standardize(t), b);
  CHECK(p.size() == 50);
  for (double v : p) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("shift decoder is shift-equivariant") {
  // All layers are circular and the pooling factor divides the shift.
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(), 2);
  const GrayImage x = testutil::random_image(16, 16, 7);
  const GrayImage a = shift_decoder_forward(cyclic_shift(x, 4, -8), b);
  const GrayImage c = cyclic_shift(shift_decoder_forward(x, b), 4, -8);
  for (size_t i = 0; i < a.px.size(); ++i) CHECK(std::abs(a.px[i] - c.px[i]) < 1e-5);
}

TEST_CASE("random bundles are seeded") {
  CHECK(parameters_equal(ModelBundle::random(testutil::tiny_hyper(), 5), ModelBundle::random(testutil::tiny_hyper(), 5)));
  CHECK_FALSE(parameters_equal(ModelBundle::random(testutil::tiny_hyper(), 5), ModelBundle::random(testutil::tiny_hyper(), 6)));
}

TEST_CASE("bundle archive round trip") {
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(), 3);
  const std::string bytes = serialize_bundle(b);
  const ModelBundle r = deserialize_bundle(bytes);
  CHECK(r.hyper() == b.hyper());
  CHECK(parameters_equal(r, b));
  CHECK(serialize_bundle(r) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "screenmark_bundle_test.smb";
  save_bundle(b, path);
  CHECK(parameters_equal(load_bundle(path), b));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_bundle(path), BundleError);
}

TEST_CASE("truncated or corrupted archives are rejected") {
  const std::string bytes = serialize_bundle(ModelBundle::random(testutil::tiny_hyper(), 4));
  for (size_t cut : {size_t{0}, size_t{3}, size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_bundle(bytes.substr(0, cut)), BundleError);
  }
  std::string bad = bytes;
  bad[0] ^= 0x55;
  CHECK_THROWS_AS(deserialize_bundle(bad), BundleError);
  CHECK_THROWS_AS(deserialize_bundle(bytes + "x"), BundleError);
}

TEST_CASE("archives whose hyperparameters disagree with the tensors are rejected") {
  std::string bytes = serialize_bundle(ModelBundle::random(testutil::tiny_hyper(), 4));
  bool edited = false;
  for (const std::string key : {"\"unet_base_width\":4", "\"unet_base_width\": 4"}) {
    if (auto pos = bytes.find(key); pos != std::string::npos) {
      bytes[pos + key.size() - 1] = '2';
      edited = true;
    }
  }
  REQUIRE(edited);
  CHECK_THROWS_AS(deserialize_bundle(bytes), BundleError);
}

}  // TEST_SUITE
