#include <cmath>
#include <limits>

#include "doctest.h"
#include "screenmark/overlay.hpp"
#include "test_util.hpp"

using namespace screenmark;

TEST_SUITE("overlay") {

TEST_CASE("tiling invariant") {
  const GrayImage tile = testutil::random_image(12, 12, 1);
  const GrayImage o = tile_overlay(tile, 50, 31);
  CHECK(o.width == 50);
  CHECK(o.height == 31);
  for (int y = 0; y < 31; ++y)
    for (int x = 0; x < 50; ++x) CHECK(o.at(x, y) == tile.at(x % 12, y % 12));
  CHECK_THROWS_AS(tile_overlay(tile, 11, 40), std::invalid_argument);
}

TEST_CASE("composite at alpha 0 is the identity and at alpha 1 the overlay") {
  const RgbImage screen = testutil::random_rgb(20, 10, 2);
  const GrayImage o = testutil::random_image(20, 10, 3);
  CHECK(composite(screen, o, 0.0) == screen);
  const RgbImage full = composite(screen, o, 1.0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) CHECK(full.at(x, y, 1) == static_cast<uint8_t>(std::lround(255 * o.at(x, y))));
}

TEST_CASE("composite rounds half away from zero") {
  RgbImage screen(1, 1, 100);
  GrayImage o(1, 1, 0.0);
  // 0.5 * 100 + 0.5 * 0 = 50 exactly; 0.25 * 101 = 25.25; 0.5 * 101 = 50.5 -> 51.
  CHECK(composite(screen, o, 0.5).px[0] == 50);
  RgbImage odd(1, 1, 101);
  CHECK(composite(odd, o, 0.5).px[0] == 51);
  CHECK(composite(odd, o, 0.75).px[0] == 25);
}

TEST_CASE("composite rejects bad arguments") {
  const RgbImage screen(4, 4, 0);
  CHECK_THROWS_AS(composite(screen, GrayImage(4, 4), 1.5), std::invalid_argument);
  CHECK_THROWS_AS(composite(screen, GrayImage(4, 4), -0.1), std::invalid_argument);
  CHECK_THROWS_AS(composite(screen, GrayImage(5, 4), 0.5), std::invalid_argument);
}

TEST_CASE("composite moves toward the overlay as alpha grows") {
  const RgbImage screen = testutil::random_rgb(16, 16, 4);
  const GrayImage o = testutil::random_image(16, 16, 5);
  const RgbImage a = composite(screen, o, 0.2), b = composite(screen, o, 0.4);
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double target = 255 * o.px[i / 3];
    CHECK(std::abs(b.px[i] - target) <= std::abs(a.px[i] - target) + 1.0);
  }
}

TEST_CASE("PSNR hand values") {
  RgbImage a(2, 2, 10), b(2, 2, 10);
  CHECK(psnr(a, b) == std::numeric_limits<double>::infinity());
  b.px[0] = 20;  // MSE = 100 / 12
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(255.0 * 255.0 * 12 / 100)));
  CHECK_THROWS_AS(psnr(a, RgbImage(3, 2)), std::invalid_argument);
}

TEST_CASE("PSNR doubling identity after quantization") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const RgbImage screen = testutil::random_rgb(96, 64, 10 + seed);
    const GrayImage o = tile_overlay(testutil::random_image(32, 32, 20 + seed), 96, 64);
    for (double n : {3.0, 4.0, 5.0}) {
      const double d = psnr(screen, composite(screen, o, n / 255)) - psnr(screen, composite(screen, o, 2 * n / 255));
      CHECK(d == doctest::Approx(6.02).epsilon(0.1));
    }
  }
}

TEST_CASE("SSIM") {
  const RgbImage a = testutil::random_rgb(32, 32, 6);
  CHECK(ssim(a, a) == 1.0);
  RgbImage b = a;
  for (auto& v : b.px) v = static_cast<uint8_t>(255 - v);
  CHECK(ssim(a, b) < 0.0);
  const RgbImage small = testutil::random_rgb(5, 5, 7);
  CHECK(ssim(small, small) == 1.0);
  RgbImage flat(32, 32, 128), flat2(32, 32, 129);
  CHECK(ssim(flat, flat2) > 0.99);
  const QualityMetrics q = quality_metrics(a, a);
  CHECK(q.to_json().find("\"inf\"") != std::string::npos);
}

}  // TEST_SUITE
