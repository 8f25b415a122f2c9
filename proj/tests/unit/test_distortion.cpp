#include <cmath>
#include <random>

#include "doctest.h"
#include "screenmark/training.hpp"
#include "test_util.hpp"

using namespace screenmark;

namespace {

double inner(const GrayImage& a, const GrayImage& b) {
  double s = 0;
  for (size_t i = 0; i < a.px.size(); ++i) s += a.px[i] * b.px[i];
  return s;
}

}  // namespace

TEST_SUITE("distortion") {

TEST_CASE("identity configuration returns the input") {
  std::mt19937_64 rng(1);
  const GrayImage t = testutil::random_image(16, 16, 2);
  const DistortionResult r = distortion_layer(t, DistortionConfig::identity(), rng);
  CHECK(r.distorted == t);
  CHECK(r.true_shift == ShiftEstimate{0, 0});
}

TEST_CASE("shift-only configuration is a cyclic shift by the reported amount") {
  DistortionConfig cfg = DistortionConfig::identity();
  cfg.shift_range = -1;
  std::mt19937_64 rng(7);
  const GrayImage t = testutil::random_image(16, 16, 3);
  int nonzero = 0;
  for (int k = 0; k < 20; ++k) {
    const DistortionResult r = distortion_layer(t, cfg, rng);
    CHECK(r.distorted == cyclic_shift(t, r.true_shift.dx, r.true_shift.dy));
    CHECK(r.true_shift == wrap_shift(r.true_shift.dx, r.true_shift.dy, 16));
    nonzero += r.true_shift.dx != 0 || r.true_shift.dy != 0;
  }
  CHECK(nonzero > 15);
}

TEST_CASE("noise-only statistics") {
  DistortionConfig cfg = DistortionConfig::identity();
  cfg.noise_std = 0.02;
  std::mt19937_64 rng(11);
  const GrayImage t = testutil::random_image(120, 120, 4);
  const GrayImage out = distortion_layer(t, cfg, rng).distorted;
  GrayImage diff(120, 120);
  for (size_t i = 0; i < t.px.size(); ++i) diff.px[i] = out.px[i] - t.px[i];
  CHECK(std::abs(mean(diff)) < 0.002);
  CHECK(stddev(diff) == doctest::Approx(0.02).epsilon(0.1));
}

TEST_CASE("blur preserves the mean and smooths") {
  DistortionConfig cfg = DistortionConfig::identity();
  cfg.blur_variance = 1.0;
  std::mt19937_64 rng(2);
  const GrayImage t = testutil::random_image(32, 32, 5);
  const GrayImage out = distortion_layer(t, cfg, rng).distorted;
  CHECK(mean(out) == doctest::Approx(mean(t)).epsilon(1e-12));
  CHECK(loss_smoothness(out) < 0.6 * loss_smoothness(t));
}

TEST_CASE("default layer is seeded") {
  const GrayImage t = testutil::random_image(16, 16, 6);
  std::mt19937_64 a(99), b(99);
  const auto ra = distortion_layer(t, DistortionConfig{}, a), rb = distortion_layer(t, DistortionConfig{}, b);
  CHECK(ra.distorted == rb.distorted);
  CHECK(ra.true_shift == rb.true_shift);
}

TEST_CASE("backward pass is the adjoint of the linear part") {
  DistortionConfig cfg;
  cfg.noise_std = 0.0;
  cfg.scale_min = 0.9;
  cfg.scale_max = 1.1;
  cfg.rotation_min_deg = -5;
  cfg.rotation_max_deg = 5;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const GrayImage x = testutil::random_image(16, 16, seed + 10, -1, 1);
    const DistortionResult r = distortion_layer(x, cfg, rng);
    CHECK(r.trace.resampled);
    const GrayImage g = testutil::random_image(16, 16, seed + 20, -1, 1);
    CHECK(inner(r.distorted, g) == doctest::Approx(inner(x, distortion_backward(g, r.trace))).epsilon(1e-10));
  }
}

TEST_CASE("resampling with unit scale and no rotation is the identity map") {
  DistortionConfig cfg = DistortionConfig::identity();
  cfg.scale_min = 0.999999999;
  cfg.scale_max = 1.0;
  std::mt19937_64 rng(3);
  const GrayImage t = testutil::random_image(16, 16, 7);
  const GrayImage out = distortion_layer(t, cfg, rng).distorted;
  for (size_t i = 0; i < t.px.size(); ++i) CHECK(out.px[i] == doctest::Approx(t.px[i]).epsilon(1e-6));
}

TEST_CASE("standardize backward matches finite differences") {
  const GrayImage x = testutil::random_image(8, 8, 8);
  const GrayImage w = testutil::random_image(8, 8, 9, -1, 1);
  const GrayImage g = standardize_backward(x, w);
  auto f = [&](const GrayImage& v) { return inner(standardize(v), w); };
  for (size_t i = 0; i < x.px.size(); i += 5) {
    CHECK(testutil::numeric_derivative(f, x, i) == doctest::Approx(g.px[i]).epsilon(1e-5));
  }
}

TEST_CASE("invalid configurations are rejected") {
  DistortionConfig cfg;
  cfg.noise_std = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DistortionConfig{};
  cfg.scale_min = 1.1;
  cfg.scale_max = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DistortionConfig{};
  cfg.blur_variance = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE
