#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "screenmark/extraction.hpp"
#include "screenmark/training.hpp"
#include "test_util.hpp"

using namespace screenmark;

namespace {

// Oracle: sort the clipped window and take the middle (mean of the two middle
// values for even counts).
GrayImage brute_background(const GrayImage& img, int a, double t) {
  const int r = a / 2;
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      std::vector<double> v;
      for (int yy = std::max(0, y - r); yy <= std::min(img.height - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(img.width - 1, x + r); ++xx) v.push_back(img.at(xx, yy));
      std::sort(v.begin(), v.end());
      const size_t n = v.size();
      const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      const double d = img.at(x, y) - med;
      out.at(x, y) = std::abs(d) <= t ? d : 0.0;
    }
  return out;
}

GrayImage smooth_block(int p, std::mt19937_64& rng, double lo, double hi) {
  GrayImage b(p, p);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : b.px) v = u(rng);
  b = gaussian_blur_cyclic(b, 3.0);
  const auto [mn, mx] = std::minmax_element(b.px.begin(), b.px.end());
  const double a = *mn, s = *mx - *mn;
  for (double& v : b.px) v = lo + (hi - lo) * (v - a) / s;
  return b;
}

GrayImage tiled(const GrayImage& block, int w, int h, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, noise);
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = block.at(x % block.width, y % block.height) + (noise > 0 ? n(rng) : 0.0);
  return out;
}

}  // namespace

TEST_SUITE("extraction") {

TEST_CASE("grayscale uses BT.601 weights") {
  RgbImage img(2, 1);
  img.at(0, 0, 0) = 255;
  img.at(1, 0, 0) = img.at(1, 0, 1) = img.at(1, 0, 2) = 51;
  const GrayImage g = to_grayscale(img);
  CHECK(g.at(0, 0) == doctest::Approx(0.299));
  CHECK(g.at(1, 0) == doctest::Approx(0.2));
}

TEST_CASE("corner parsing and formatting") {
  const QuadCorners q = QuadCorners::parse("10,20; 300,25;310.5,200;5,210");
  CHECK(q.pts[2].x == 310.5);
  CHECK(QuadCorners::parse(q.to_string()) == q);
  for (const char* bad : {"", "1,2;3,4;5,6", "1,2;3,4;5,6;7", "a,b;c,d;e,f;g,h", "1,2;3,4;5,6;7,8;9,10"}) {
    CHECK_THROWS_AS(QuadCorners::parse(bad), std::invalid_argument);
  }
  const QuadCorners f = QuadCorners::full_frame(640, 480);
  CHECK(f.pts[0] == Point{0, 0});
  CHECK(f.pts[2] == Point{639, 479});
}

TEST_CASE("degenerate quads are rejected") {
  CHECK_NOTHROW(QuadCorners::parse("0,0;100,0;100,100;0,100").validate());
  CHECK_THROWS_AS(QuadCorners::parse("0,0;50,0;100,0;150,0").validate(), std::invalid_argument);
  CHECK_THROWS_AS(QuadCorners::parse("0,0;100,100;100,0;0,100").validate(), std::invalid_argument);
  CHECK_THROWS_AS(QuadCorners::parse("0,0;0,0;100,100;0,100").validate(), std::invalid_argument);
}

TEST_CASE("homography maps the four correspondences") {
  const std::array<Point, 4> src = {Point{0, 0}, {99, 0}, {99, 79}, {0, 79}};
  const std::array<Point, 4> dst = {Point{12, 7}, {130, 20}, {120, 110}, {3, 95}};
  const Homography h = homography_from_points(src, dst);
  for (int i = 0; i < 4; ++i) {
    const Point p = apply_homography(h, src[i]);
    CHECK(p.x == doctest::Approx(dst[i].x).epsilon(1e-9));
    CHECK(p.y == doctest::Approx(dst[i].y).epsilon(1e-9));
  }
}

TEST_CASE("full-frame warp is the identity") {
  const GrayImage g = testutil::random_image(40, 30, 1);
  const GrayImage w = warp_perspective(g, QuadCorners::full_frame(40, 30), 40, 30);
  for (size_t i = 0; i < g.px.size(); ++i) CHECK(w.px[i] == doctest::Approx(g.px[i]).epsilon(1e-9));
  const RgbImage c = testutil::random_rgb(40, 30, 2);
  CHECK(warp_perspective(c, QuadCorners::full_frame(40, 30), 40, 30) == c);
}

TEST_CASE("warp of an axis-aligned sub-rectangle is a crop") {
  const GrayImage g = testutil::random_image(40, 30, 3);
  const GrayImage w = warp_perspective(g, QuadCorners::parse("5,4;24,4;24,19;5,19"), 20, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) CHECK(w.at(x, y) == doctest::Approx(g.at(x + 5, y + 4)).epsilon(1e-9));
}

TEST_CASE("background detection matches the brute-force median") {
  for (auto [w, h, a] : {std::tuple{23, 17, 5}, {12, 30, 7}, {9, 9, 15}, {31, 8, 3}}) {
    GrayImage img = testutil::random_image(w, h, w * h);
    for (size_t i = 0; i < img.px.size(); i += 3) img.px[i] = std::round(img.px[i] * 8) / 8;  // ties
    const GrayImage fast = detect_background(img, a, 0.3), slow = brute_background(img, a, 0.3);
    for (size_t i = 0; i < img.px.size(); ++i) CHECK(fast.px[i] == doctest::Approx(slow.px[i]).epsilon(1e-12));
  }
}

TEST_CASE("background residual of a faint pattern on white") {
  std::mt19937_64 rng(3);
  GrayImage img(60, 60);
  for (double& v : img.px) v = 1.0 - 8.0 / 255 + (rng() & 1 ? 4.0 / 255 : -4.0 / 255);
  const GrayImage ib = detect_background(img, 15, 16.0 / 255);
  int nonzero = 0;
  for (double v : ib.px) {
    CHECK(std::abs(v) <= 16.0 / 255 + 1e-12);
    nonzero += v != 0.0;
  }
  // The median is one of the two levels; roughly the other half survives.
  CHECK(nonzero > 1200);
  // Dark text far from the median is excluded.
  img.at(30, 30) = 0.1;
  CHECK(detect_background(img, 15, 16.0 / 255).at(30, 30) == 0.0);
  // t = 0 keeps only exact median pixels.
  for (double v : detect_background(img, 15, 0.0).px) CHECK(v == 0.0);
}

TEST_CASE("period averaging is exact on noiseless tilings") {
  std::mt19937_64 rng(4);
  const GrayImage block = smooth_block(13, rng, 0.2, 0.6);
  const GrayImage img = tiled(block, 13 * 4 + 5, 13 * 3 + 2, 0.0, rng);
  const GrayImage avg = average_with_period(img, 13);
  for (size_t i = 0; i < avg.px.size(); ++i) CHECK(avg.px[i] == doctest::Approx(block.px[i]).epsilon(1e-9));
  CHECK_THROWS_AS(average_with_period(img, 0), std::invalid_argument);
}

TEST_CASE("period averaging of noise shrinks the variance by the block count") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.1);
  GrayImage img(400, 400);
  for (double& v : img.px) v = n(rng);
  const GrayImage avg = average_with_period(img, 50);  // 64 blocks
  const double var = stddev(avg) * stddev(avg);
  CHECK(var == doctest::Approx(0.01 / 64).epsilon(0.2));
}

TEST_CASE("period score behaviour") {
  GrayImage ramp(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ramp.at(x, y) = std::sin(2 * M_PI * x / 64.0);
  CHECK(score_period(ramp, 2.0) == doctest::Approx(stddev(ramp)).epsilon(0.02));
  const GrayImage noise = testutil::random_image(64, 64, 6, -1, 1);
  CHECK(score_period(noise, 2.0) < 0.3 * stddev(noise));
}

TEST_CASE("period search finds constructed periods") {
  std::mt19937_64 rng(7);
  ExtractionParams params;
  int hits = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int p = std::uniform_int_distribution<int>(40, 120)(rng);
    const GrayImage block = smooth_block(p, rng, 60.0 / 255, 150.0 / 255);
    const GrayImage img = tiled(block, 5 * p + 7, 5 * p + 3, 4.0 / 255, rng);
    const PeriodSearch r = find_period(img, params);
    hits += r.period == p;
    CHECK_FALSE(r.low_confidence);
  }
  CHECK(hits >= 11);
}

TEST_CASE("period search returns the fundamental, not a harmonic") {
  std::mt19937_64 rng(8);
  const GrayImage block = smooth_block(48, rng, 0.2, 0.6);
  const GrayImage img = tiled(block, 48 * 8, 48 * 6, 2.0 / 255, rng);
  const PeriodSearch r = find_period(img, ExtractionParams{});
  CHECK(r.period == 48);
  // 96 and 144 also align perfectly and score as high.
  auto score_at = [&](int p) {
    for (auto [q, s] : r.curve)
      if (q == p) return s;
    return -1.0;
  };
  CHECK(score_at(96) >= 0.9 * score_at(48));
}

TEST_CASE("period search on pure noise is flagged") {
  const GrayImage noise = testutil::random_image(300, 300, 9, -0.05, 0.05);
  const PeriodSearch r = find_period(noise, ExtractionParams{});
  CHECK(r.low_confidence);
  CHECK(r.curve.size() == 150 - 40 + 1);
  CHECK(find_period(GrayImage(200, 200), ExtractionParams{}).low_confidence);
}

TEST_CASE("extraction parameter JSON") {
  const ExtractionParams p = ExtractionParams::from_json(R"({"a": 31, "t": 0.1, "p0": 50, "p1": 300, "gauss_sigma": 1.5})");
  CHECK(p.median_window == 31);
  CHECK(p.threshold == 0.1);
  CHECK(p.period_min == 50);
  CHECK(p.period_max == 300);
  CHECK(p.gauss_sigma == 1.5);
  CHECK(ExtractionParams::from_json(p.to_json()).to_json() == p.to_json());
  ExtractionParams base;
  base.median_window = 63;
  CHECK(ExtractionParams::from_json(R"({"t": 0.02})", base).median_window == 63);
  CHECK(ExtractionParams::from_json("{\"t\": 0}").threshold == 0.0);
  for (const char* bad : {R"({"a": 14})", R"({"t": 1.0})", R"({"t": -0.1})", R"({"p0": 100, "p1": 50})", R"({"zz": 1})",
                          "[1,2]", "{", R"({"a": "x"})"}) {
    CHECK_THROWS_AS(ExtractionParams::from_json(bad), std::invalid_argument);
  }
}

TEST_CASE("tile extraction standardizes and resamples") {
  std::mt19937_64 rng(10);
  const GrayImage block = smooth_block(40, rng, 0.0, 1.0);
  const GrayImage img = tiled(block, 200, 160, 0.0, rng);
  const GrayImage t = extract_tile(img, 40, 40);
  CHECK(std::abs(mean(t)) < 1e-12);
  CHECK(stddev(t) == doctest::Approx(1.0));
  CHECK(correlation(t, block) == doctest::Approx(1.0));
  CHECK(extract_tile(img, 40, 16).width == 16);
}

TEST_CASE("pipeline is shift-equivariant on periodic inputs") {
  // Translating the periodic residual changes the located shift but not the bits.
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(16), 3);
  std::mt19937_64 rng(11);
  const GrayImage block = smooth_block(16, rng, -0.02, 0.02);
  const GrayImage base = extract_tile(tiled(block, 96, 96, 0.0, rng), 16, 16);
  const TileDecoding ref = decode_tile(base, b);
  for (auto [dx, dy] : {std::pair{4, 8}, {-8, 4}, {0, 12}}) {
    const TileDecoding d = decode_tile(cyclic_shift(base, dx, dy), b);
    const ShiftEstimate expect = wrap_shift(ref.shift.dx + dx, ref.shift.dy + dy, 16);
    CHECK(d.shift == expect);
    CHECK(d.bits == ref.bits);
  }
}

TEST_CASE("extract_watermark on degenerate inputs completes with warnings") {
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(16), 4);
  RgbImage white(120, 100, 255);
  ExtractionParams params;
  params.threshold = 0.0;
  const ExtractionReport r = extract_watermark(white, std::nullopt, params, b);
  CHECK(r.period.low_confidence);
  CHECK(r.steps == std::vector<std::string>{"rectify", "grayscale", "background", "period", "tile", "shift", "decode", "bch"});
  CHECK(r.bits.size() == 50);
  CHECK_FALSE(r.warnings.empty());
  const auto j = nlohmann::json::parse(r.to_json(false));
  CHECK_FALSE(j.contains("timings_ms"));
  CHECK(nlohmann::json::parse(r.to_json(true)).contains("timings_ms"));
  CHECK(j["bits_binary"].get<std::string>().size() == 50);
  CHECK(j["period"]["curve"].size() == r.period.curve.size());
}

TEST_CASE("extraction with full-frame corners equals extraction without corners") {
  const ModelBundle b = ModelBundle::random(testutil::tiny_hyper(16), 5);
  const RgbImage photo = testutil::random_rgb(100, 90, 6);
  const ExtractionParams params;
  const ExtractionReport a = extract_watermark(photo, std::nullopt, params, b);
  const ExtractionReport c = extract_watermark(photo, QuadCorners::full_frame(100, 90), params, b);
  CHECK(a.to_json(false) == c.to_json(false));
  CHECK(intermediate_png(a, "i_b.png") == intermediate_png(c, "i_b.png"));
  CHECK_FALSE(intermediate_png(a, "nope.png").has_value());
  const auto [w, h] = rectified_size(QuadCorners::parse("0,0;99,0;99,49;0,49"), 0, 0);
  CHECK(w == 100);
  CHECK(h == 50);
}

}  // TEST_SUITE
