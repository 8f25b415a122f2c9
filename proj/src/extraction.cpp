#include "screenmark/extraction.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "screenmark/image_io.hpp"
#include "screenmark/training.hpp"

namespace screenmark {

using nlohmann::json;

GrayImage to_grayscale(const RgbImage& photo) {
  GrayImage out(photo.width, photo.height);
  for (size_t i = 0; i < out.px.size(); ++i) {
    out.px[i] = (0.299 * photo.px[i * 3] + 0.587 * photo.px[i * 3 + 1] + 0.114 * photo.px[i * 3 + 2]) / 255.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corners and homographies

QuadCorners QuadCorners::parse(const std::string& text) {
  QuadCorners q;
  std::stringstream ss(text);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ';')) {
    if (i >= 4) throw std::invalid_argument("corners: expected exactly 4 points in '" + text + "'");
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("corners: point '" + item + "' is not 'x,y'");
    try {
      size_t used = 0;
      const std::string xs = item.substr(0, comma), ys = item.substr(comma + 1);
      q.pts[i].x = std::stod(xs, &used);
      if (used != xs.size()) throw std::invalid_argument("trailing characters");
      q.pts[i].y = std::stod(ys, &used);
      if (used != ys.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument("corners: cannot parse point '" + item + "'");
    }
    if (!std::isfinite(q.pts[i].x) || !std::isfinite(q.pts[i].y)) throw std::invalid_argument("corners: non-finite value");
    ++i;
  }
  if (i != 4) throw std::invalid_argument("corners: expected 4 points as 'x1,y1;x2,y2;x3,y3;x4,y4'");
  return q;
}

QuadCorners QuadCorners::full_frame(int width, int height) {
  const double r = width - 1, b = height - 1;
  return {{{{0, 0}, {r, 0}, {r, b}, {0, b}}}};
}

std::string QuadCorners::to_string() const {
  std::ostringstream os;
  os.precision(10);
  for (int i = 0; i < 4; ++i) os << (i ? ";" : "") << pts[i].x << ',' << pts[i].y;
  return os.str();
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

void QuadCorners::validate() const {
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max({scale, std::abs(p.x), std::abs(p.y), 1.0});
  const double eps = 1e-9 * scale * scale;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (std::abs(cross(pts[i], pts[j], pts[k])) <= eps) throw std::invalid_argument("corners: three points are collinear");
      }
    }
  }
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]);
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) throw std::invalid_argument("corners: quadrilateral is not convex (expected TL, TR, BR, BL order)");
  }
}

Homography homography_from_points(const std::array<Point, 4>& src, const std::array<Point, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -x * u; r0[7] = -y * u; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -x * v; r1[7] = -y * v; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-12) throw std::invalid_argument("homography: degenerate point configuration");
    std::swap(a[col], a[piv]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Homography h{};
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

Point apply_homography(const Homography& h, Point p) {
  const double w = h[6] * p.x + h[7] * p.y + h[8];
  return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
}

namespace {

Homography rect_to_quad(const QuadCorners& corners, int out_w, int out_h) {
  if (out_w < 2 || out_h < 2) throw std::invalid_argument("warp_perspective: output must be at least 2x2");
  corners.validate();
  return homography_from_points(QuadCorners::full_frame(out_w, out_h).pts, corners.pts);
}

// Bilinear sample of channel `c` of an interleaved image with `ch` channels;
// returns false outside the source.
template <typename T>
bool sample(const T* px, int w, int h, int ch, int c, Point p, double& out) {
  constexpr double kTol = 1e-9;
  if (!(p.x >= -kTol && p.y >= -kTol && p.x <= w - 1 + kTol && p.y <= h - 1 + kTol)) return false;
  const double x = std::clamp(p.x, 0.0, static_cast<double>(w - 1));
  const double y = std::clamp(p.y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(x), w - 1), y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int xx, int yy) { return static_cast<double>(px[(static_cast<size_t>(yy) * w + xx) * ch + c]); };
  out = (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
  return true;
}

}  // namespace

GrayImage warp_perspective(const GrayImage& photo, const QuadCorners& corners, int out_w, int out_h) {
  const Homography h = rect_to_quad(corners, out_w, out_h);
  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double v = 0.0;
      if (!sample(photo.px.data(), photo.width, photo.height, 1, 0, apply_homography(h, {double(x), double(y)}), v)) v = 0.0;
      out.at(x, y) = v;
    }
  }
  return out;
}

RgbImage warp_perspective(const RgbImage& photo, const QuadCorners& corners, int out_w, int out_h) {
  const Homography h = rect_to_quad(corners, out_w, out_h);
  RgbImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point p = apply_homography(h, {double(x), double(y)});
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        if (sample(photo.px.data(), photo.width, photo.height, 3, c, p, v)) {
          out.at(x, y, c) = static_cast<uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Background residual

namespace {

class Fenwick {
 public:
  explicit Fenwick(size_t n) : tree_(n + 1, 0) {}
  void add(size_t i, int d) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += d;
  }
  // Smallest index whose prefix count exceeds k.
  size_t kth(int k) const {
    size_t pos = 0;
    size_t step = std::bit_floor(tree_.size() - 1);
    for (; step; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= k) {
        pos += step;
        k -= tree_[pos];
      }
    }
    return pos;
  }

 private:
  std::vector<int> tree_;
};

}  // namespace

GrayImage detect_background(const GrayImage& img, int window, double threshold) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("detect_background: window must be odd and positive");
  const int w = img.width, h = img.height, r = window / 2;
  GrayImage out(w, h);
  if (img.empty()) return out;

  // Rank-transform so a Fenwick tree over ranks answers window medians.
  std::vector<double> values = img.px;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<uint32_t> rank(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    rank[i] = static_cast<uint32_t>(std::lower_bound(values.begin(), values.end(), img.px[i]) - values.begin());
  }

  Fenwick tree(values.size());
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
    auto column = [&](int x, int d) {
      for (int yy = y0; yy <= y1; ++yy) tree.add(rank[static_cast<size_t>(yy) * w + x], d);
    };
    for (int x = 0; x <= std::min(r, w - 1); ++x) column(x, 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
      const int count = (x1 - x0 + 1) * (y1 - y0 + 1);
      double median = values[tree.kth(count / 2)];
      if (count % 2 == 0) median = 0.5 * (median + values[tree.kth(count / 2 - 1)]);
      const double d = img.at(x, y) - median;
      out.at(x, y) = std::abs(d) <= threshold ? d : 0.0;
      if (x - r >= 0) column(x - r, -1);
      if (x + r + 1 < w) column(x + r + 1, 1);
    }
    for (int x = std::max(0, w - r); x < w; ++x) column(x, -1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Period search

GrayImage average_with_period(const GrayImage& ib, int p) {
  if (p < 1 || p > std::min(ib.width, ib.height)) {
    throw std::invalid_argument("average_with_period: period " + std::to_string(p) + " out of range for a " +
                                std::to_string(ib.width) + "x" + std::to_string(ib.height) + " image");
  }
  const int kx = ib.width / p, ky = ib.height / p;
  GrayImage out(p, p);
  for (int by = 0; by < ky; ++by) {
    for (int y = 0; y < p; ++y) {
      const double* src = ib.px.data() + static_cast<size_t>(by * p + y) * ib.width;
      double* dst = out.px.data() + static_cast<size_t>(y) * p;
      for (int bx = 0; bx < kx; ++bx) {
        const double* s = src + static_cast<size_t>(bx) * p;
        for (int x = 0; x < p; ++x) dst[x] += s[x];
      }
    }
  }
  const double inv = 1.0 / (static_cast<double>(kx) * ky);
  for (double& v : out.px) v *= inv;
  return out;
}

double score_period(const GrayImage& ip, double gauss_sigma) { return stddev(gaussian_blur_cyclic(ip, gauss_sigma)); }

void ExtractionParams::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("extraction params: " + m); };
  if (median_window < 3 || median_window % 2 == 0) fail("median_window must be an odd integer >= 3");
  if (!(threshold >= 0.0 && threshold < 1.0)) fail("threshold must be in [0, 1)");
  if (period_min < 2 || period_min >= period_max) fail("period range must satisfy 2 <= p0 < p1");
  if (!(gauss_sigma >= 0.0)) fail("gauss_sigma must be >= 0");
  if (rect_width < 0 || rect_height < 0 || rect_width == 1 || rect_height == 1) fail("rectified size must be 0 (auto) or >= 2");
}

ExtractionParams ExtractionParams::from_json(const std::string& text, ExtractionParams p) {
  json j;
  try {
    j = json::parse(text.empty() ? std::string("{}") : text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("extraction params are not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("extraction params must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "median_window" || k == "a") {
        p.median_window = v.get<int>();
      } else if (k == "threshold" || k == "t") {
        p.threshold = v.get<double>();
      } else if (k == "period_min" || k == "p0") {
        p.period_min = v.get<int>();
      } else if (k == "period_max" || k == "p1") {
        p.period_max = v.get<int>();
      } else if (k == "gauss_sigma") {
        p.gauss_sigma = v.get<double>();
      } else if (k == "rect_width") {
        p.rect_width = v.get<int>();
      } else if (k == "rect_height") {
        p.rect_height = v.get<int>();
      } else {
        throw std::invalid_argument("extraction params: unknown key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("extraction params: ") + e.what());
  }
  p.validate();
  return p;
}

ExtractionParams ExtractionParams::from_json(const std::string& text) { return from_json(text, ExtractionParams{}); }

std::string ExtractionParams::to_json() const {
  return json{{"median_window", median_window}, {"threshold", threshold},     {"period_min", period_min},
              {"period_max", period_max},       {"gauss_sigma", gauss_sigma}, {"rect_width", rect_width},
              {"rect_height", rect_height}}
      .dump();
}

PeriodSearch find_period(const GrayImage& ib, const ExtractionParams& params) {
  const int hi = std::min(params.period_max, std::min(ib.width, ib.height) / 2);
  if (params.period_min > hi) {
    throw std::invalid_argument("find_period: empty period range [" + std::to_string(params.period_min) + ", " +
                                std::to_string(hi) + "] for a " + std::to_string(ib.width) + "x" +
                                std::to_string(ib.height) + " image");
  }
  // Signal part of each score: the block-to-block spread of the filtered
  // residual estimates how much variance averaging n blocks leaves behind,
  // and that share is removed before comparing periods. Without it the
  // score of 2p, 3p, ... is inflated by the larger leftover noise of fewer
  // blocks and can outrank the fundamental.
  const GrayImage filtered = gaussian_blur_clamped(ib, params.gauss_sigma);
  auto leftover_variance = [&](int p) {
    const int kx = filtered.width / p, ky = filtered.height / p, n = kx * ky;
    std::vector<double> sum(static_cast<size_t>(p) * p, 0.0), sq(sum.size(), 0.0);
    for (int by = 0; by < ky; ++by)
      for (int y = 0; y < p; ++y) {
        const double* row = filtered.px.data() + static_cast<size_t>(by * p + y) * filtered.width;
        for (int x = 0; x < kx * p; ++x) {
          sum[static_cast<size_t>(y) * p + x % p] += row[x];
          sq[static_cast<size_t>(y) * p + x % p] += row[x] * row[x];
        }
      }
    double spread = 0.0;
    for (size_t i = 0; i < sum.size(); ++i) spread += (sq[i] - sum[i] * sum[i] / n) / (n - 1);
    return spread / static_cast<double>(sum.size()) / n;
  };

  PeriodSearch r;
  for (int p = params.period_min; p <= hi; ++p) {
    const double score = score_period(average_with_period(ib, p), params.gauss_sigma);
    r.curve.emplace_back(p, score);
    r.signal.push_back(std::sqrt(std::max(0.0, score * score - leftover_variance(p))));
  }
  double best = 0.0;
  for (double s : r.signal) best = std::max(best, s);
  r.period = r.curve.front().first;
  for (size_t i = 0; i < r.signal.size(); ++i) {
    const double s = r.signal[i];
    const bool left = i == 0 || s >= r.signal[i - 1];
    const bool right = i + 1 == r.signal.size() || s >= r.signal[i + 1];
    if (best > 0.0 && left && right && s >= 0.9 * best) {
      r.period = r.curve[i].first;
      break;
    }
  }
  // Confidence compares scores after removing the 1/sqrt(blocks) decay that
  // averaging gives any aperiodic residual, so pure noise reads as flat.
  std::vector<double> z;
  double z_best = 0.0;
  for (const auto& [p, s] : r.curve) {
    z.push_back(s * std::sqrt(static_cast<double>(ib.width / p) * (ib.height / p)));
    z_best = std::max(z_best, z.back());
  }
  std::nth_element(z.begin(), z.begin() + static_cast<long>(z.size() / 2), z.end());
  const double z_median = z[z.size() / 2];
  r.low_confidence = !(best > 0.0) || (z_median > 0.0 && z_best / z_median < 1.5);
  return r;
}

GrayImage extract_tile(const GrayImage& ib, int period, int tile_size) {
  const GrayImage ip = average_with_period(ib, period);
  return standardize(period == tile_size ? ip : resize_bilinear_cyclic(ip, tile_size, tile_size));
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

std::pair<int, int> rectified_size(const QuadCorners& corners, int rect_width, int rect_height) {
  const auto& q = corners.pts;
  auto dist = [](Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); };
  int w = rect_width, h = rect_height;
  if (w == 0) w = static_cast<int>(std::lround(std::max(dist(q[0], q[1]), dist(q[3], q[2])))) + 1;
  if (h == 0) h = static_cast<int>(std::lround(std::max(dist(q[0], q[3]), dist(q[1], q[2])))) + 1;
  return {w, h};
}

ExtractionReport extract_watermark(const RgbImage& photo, const std::optional<QuadCorners>& corners,
                                   const ExtractionParams& params, const ModelBundle& bundle) {
  params.validate();
  const int s = bundle.hyper().tile_size;
  ExtractionReport rep;
  Stopwatch clock;
  auto step = [&](const std::string& name) {
    rep.steps.push_back(name);
    rep.timings.push_back({name, clock.lap()});
  };

  const GrayImage gray = to_grayscale(photo);
  if (corners) {
    const auto [out_w, out_h] = rectified_size(*corners, params.rect_width, params.rect_height);
    if (*corners == QuadCorners::full_frame(photo.width, photo.height) && out_w == photo.width && out_h == photo.height) {
      rep.rectified = gray;
    } else {
      rep.rectified = warp_perspective(gray, *corners, out_w, out_h);
    }
  } else {
    rep.rectified = gray;
  }
  step("rectify");
  step("grayscale");
  if (std::min(rep.rectified.width, rep.rectified.height) < 2 * s) {
    rep.warnings.push_back("rectified image is smaller than two tiles per axis; extraction may be unreliable");
  }

  rep.background = detect_background(rep.rectified, params.median_window, params.threshold);
  step("background");
  const auto nonzero = std::count_if(rep.background.px.begin(), rep.background.px.end(), [](double v) { return v != 0.0; });
  if (nonzero == 0) rep.warnings.push_back("background residual is empty (threshold too small or no flat background)");

  rep.period = find_period(rep.background, params);
  step("period");
  if (rep.period.low_confidence) {
    rep.warnings.push_back("low-confidence period estimate: the score curve has no clear peak");
  }

  rep.tile = extract_tile(rep.background, rep.period.period, s);
  step("tile");

  TileDecoding d = decode_tile(rep.tile, bundle);
  rep.shift_map = std::move(d.shift_map);
  rep.shift = d.shift;
  rep.aligned = std::move(d.aligned);
  step("shift");
  rep.probs = std::move(d.probs);
  rep.bits = std::move(d.bits);
  step("decode");

  if (static_cast<int>(rep.bits.size()) == codec::kCodewordBits) {
    rep.bch = codec::bch_decode_bits(rep.bits);
    if (!rep.bch) rep.warnings.push_back("BCH decoding failed: more than 3 bit errors");
  } else {
    rep.warnings.push_back("model message length is not " + std::to_string(codec::kCodewordBits) + " bits; BCH skipped");
  }
  step("bch");
  return rep;
}

std::string ExtractionReport::to_json(bool include_timings) const {
  json j;
  j["steps"] = steps;
  j["rectified"] = {{"width", rectified.width}, {"height", rectified.height}};
  const auto nonzero = std::count_if(background.px.begin(), background.px.end(), [](double v) { return v != 0.0; });
  j["background"] = {{"nonzero_fraction", background.empty() ? 0.0 : static_cast<double>(nonzero) / background.px.size()}};
  json curve = json::array();
  for (size_t i = 0; i < period.curve.size(); ++i)
    curve.push_back({{"p", period.curve[i].first}, {"score", period.curve[i].second}, {"signal", period.signal[i]}});
  j["period"] = {{"p", period.period}, {"low_confidence", period.low_confidence}, {"curve", curve}};
  j["shift"] = {{"dx", shift.dx}, {"dy", shift.dy}};
  j["probs"] = probs;
  std::string bit_string;
  for (uint8_t b : bits) bit_string += b ? '1' : '0';
  j["bits_binary"] = bit_string;
  if (static_cast<int>(bits.size()) == codec::kCodewordBits) j["bits"] = codec::Codeword::from_bits(bits).hex();
  if (bch) {
    j["bch"] = {{"status", "ok"}, {"payload", bch->payload.hex()}, {"corrections", bch->corrections}};
  } else {
    j["bch"] = {{"status", "failure"}};
  }
  j["warnings"] = warnings;
  if (include_timings) {
    json t = json::object();
    for (const auto& st : timings) t[st.step] = st.ms;
    j["timings_ms"] = t;
  }
  return j.dump(2);
}

std::optional<std::string> intermediate_png(const ExtractionReport& r, const std::string& name) {
  if (name == "rectified.png") return encode_png(r.rectified);
  if (name == "i_b.png") return encode_png_normalized(r.background);
  if (name == "i_w_raw.png") return encode_png_normalized(r.tile);
  if (name == "shift_map.png") return encode_png_normalized(r.shift_map);
  if (name == "i_w_aligned.png") return encode_png_normalized(r.aligned);
  return std::nullopt;
}

void dump_intermediates(const ExtractionReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const char* name : {"rectified.png", "i_b.png", "i_w_raw.png", "shift_map.png", "i_w_aligned.png"}) {
    if (auto png = intermediate_png(r, name)) write_file(dir / name, *png);
  }
  json curve = json::array();
  for (size_t i = 0; i < r.period.curve.size(); ++i)
    curve.push_back({{"p", r.period.curve[i].first}, {"score", r.period.curve[i].second}, {"signal", r.period.signal[i]}});
  write_file(dir / "score_curve.json", curve.dump(2));
}

}  // namespace screenmark
