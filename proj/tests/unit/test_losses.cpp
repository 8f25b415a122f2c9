#include <cmath>
#include <random>

#include "doctest.h"
#include "screenmark/training.hpp"
#include "test_util.hpp"

using namespace screenmark;

TEST_SUITE("losses") {

TEST_CASE("smoothness of a constant tile is zero") {
  CHECK(loss_smoothness(GrayImage(8, 8, 0.37)) == 0.0);
  GrayImage g;
  CHECK(loss_smoothness_grad(GrayImage(8, 8, 0.37), g) == 0.0);
  for (double v : g.px) CHECK(v == 0.0);
}

TEST_CASE("smoothness of a 2x2 checkerboard is 2/3") {
  // Of the nine wrapped neighbors, the four edge neighbors differ by 1.
  GrayImage t(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) t.at(x, y) = (x + y) % 2;
  CHECK(loss_smoothness(t) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("smoothness scales linearly with contrast") {
  const GrayImage t = testutil::random_image(8, 8, 3);
  GrayImage t2 = t;
  for (double& v : t2.px) v *= 3;
  CHECK(loss_smoothness(t2) == doctest::Approx(3 * loss_smoothness(t)).epsilon(1e-12));
}

TEST_CASE("shift loss vanishes on the shifted target") {
  const GrayImage target = make_shift_target(16, 2);
  for (auto [dx, dy] : {std::pair{0, 0}, {3, -5}, {-8, 8}, {7, 1}}) {
    const GrayImage out = cyclic_shift(target, dx, dy);
    CHECK(loss_shift(out, target, {dx, dy}) == 0.0);
  }
  CHECK(loss_shift(target, target, {1, 0}) > 0.0);
}

TEST_CASE("shift loss hand value") {
  // Output zero everywhere: RMS of the target itself.
  const GrayImage target = make_shift_target(16, 2);
  double s = 0;
  for (double v : target.px) s += v * v;
  CHECK(loss_shift(GrayImage(16, 16), target, {0, 0}) == doctest::Approx(std::sqrt(s / 256)).epsilon(1e-12));
}

TEST_CASE("message loss hand values") {
  const std::vector<uint8_t> m = {1, 0, 1, 0};
  CHECK(std::abs(loss_message(m, std::vector<double>(4, 0.5)) - std::log(2.0)) < 1e-9);
  const std::vector<double> p = {0.9, 0.2, 0.6, 0.5};
  const double expect = -(std::log(0.9) + std::log(0.8) + std::log(0.6) + std::log(0.5)) / 4;
  CHECK(std::abs(loss_message(m, p) - expect) < 1e-9);
}

TEST_CASE("message loss clamps certainties") {
  const std::vector<uint8_t> m = {1, 0};
  const double l = loss_message(m, std::vector<double>{0.0, 1.0});
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(-std::log(kProbEpsilon)).epsilon(1e-9));
}

TEST_CASE("message loss rejects length mismatch") {
  const std::vector<uint8_t> m = {1, 0, 1};
  CHECK_THROWS_AS(loss_message(m, std::vector<double>(2, 0.5)), std::invalid_argument);
}

TEST_CASE("total loss is the weighted sum") {
  LossWeights w;
  CHECK(total_loss(1, 2, 3, w) == doctest::Approx(1.5 + 2.0 + 6.0));
}

TEST_CASE("smoothness gradient matches finite differences") {
  const GrayImage t = testutil::random_image(8, 8, 11);
  GrayImage g;
  loss_smoothness_grad(t, g);
  for (size_t i = 0; i < t.px.size(); ++i) {
    const double num = testutil::numeric_derivative([](const GrayImage& x) { return loss_smoothness(x); }, t, i);
    CHECK(std::abs(num - g.px[i]) <= 1e-4 * std::max(1e-3, std::abs(num)) + 1e-9);
  }
}

TEST_CASE("shift gradient matches finite differences") {
  const GrayImage target = make_shift_target(8, 1);
  const GrayImage out = testutil::random_image(8, 8, 12, -1, 1);
  const ShiftEstimate s{2, -3};
  GrayImage g;
  loss_shift_grad(out, target, s, g);
  for (size_t i = 0; i < out.px.size(); ++i) {
    const double num =
        testutil::numeric_derivative([&](const GrayImage& x) { return loss_shift(x, target, s); }, out, i);
    CHECK(std::abs(num - g.px[i]) <= 1e-4 * std::max(1e-3, std::abs(num)) + 1e-9);
  }
}

TEST_CASE("message gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::vector<uint8_t> m(50);
  std::vector<double> p(50);
  for (size_t i = 0; i < m.size(); ++i) {
    m[i] = rng() & 1;
    p[i] = 0.05 + 0.9 * std::uniform_real_distribution<double>()(rng);
  }
  std::vector<double> g;
  loss_message_grad(m, p, g);
  for (size_t i = 0; i < p.size(); ++i) {
    auto q = p;
    const double h = 1e-6;
    q[i] = p[i] + h;
    const double up = loss_message(m, q);
    q[i] = p[i] - h;
    const double num = (up - loss_message(m, q)) / (2 * h);
    CHECK(std::abs(num - g[i]) <= 1e-4 * std::abs(num));
  }
}

}  // TEST_SUITE
