#include "screenmark/capture_sim.hpp"

#include <array>
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "screenmark/codec.hpp"
#include "screenmark/image_io.hpp"
#include "screenmark/overlay.hpp"

namespace screenmark {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario

void CaptureScenario::validate() const {
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw std::invalid_argument(std::string("capture scenario: ") + what + " range must satisfy min <= max");
  };
  range(brightness_min, brightness_max, "brightness");
  range(contrast_min, contrast_max, "contrast");
  range(yaw_min_deg, yaw_max_deg, "yaw");
  range(pitch_min_deg, pitch_max_deg, "pitch");
  range(corner_jitter_min, corner_jitter_max, "corner_jitter");
  if (!(gamma > 0)) throw std::invalid_argument("capture scenario: gamma must be positive");
  if (contrast_min < 0) throw std::invalid_argument("capture scenario: contrast must be nonnegative");
  if (std::max(std::abs(yaw_min_deg), std::abs(yaw_max_deg)) >= 80 ||
      std::max(std::abs(pitch_min_deg), std::abs(pitch_max_deg)) >= 80) {
    throw std::invalid_argument("capture scenario: viewing angles must stay below 80 degrees");
  }
  if (corner_jitter_min < 0 || corner_jitter_max >= 0.25) throw std::invalid_argument("capture scenario: corner_jitter must be in [0, 0.25)");
  if (!(margin >= 0 && margin < 0.25)) throw std::invalid_argument("capture scenario: margin must be in [0, 0.25)");
  if (!(resample_factor > 0.05 && resample_factor <= 4.0)) throw std::invalid_argument("capture scenario: resample_factor must be in (0.05, 4]");
  if (!(defocus_sigma >= 0)) throw std::invalid_argument("capture scenario: defocus_sigma must be >= 0");
  if (!(sensor_noise_std >= 0)) throw std::invalid_argument("capture scenario: sensor_noise_std must be >= 0");
  if (jpeg_quality < 0 || jpeg_quality > 100) throw std::invalid_argument("capture scenario: jpeg_quality must be 1..100, or 0 to disable");
  if (moire && !(moire->amplitude >= 0)) throw std::invalid_argument("capture scenario: moire amplitude must be >= 0");
}

bool CaptureScenario::is_identity() const {
  return gamma == 2.2 && brightness_min == 0 && brightness_max == 0 && contrast_min == 1 && contrast_max == 1 &&
         yaw_min_deg == 0 && yaw_max_deg == 0 && pitch_min_deg == 0 && pitch_max_deg == 0 && corner_jitter_max == 0 &&
         margin == 0 && resample_factor == 1 && defocus_sigma == 0 && sensor_noise_std == 0 &&
         (!moire || moire->amplitude == 0) && jpeg_quality == 0;
}

namespace {

void read_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_number()) {
    lo = hi = v.get<double>();
    return;
  }
  const auto r = v.get<std::vector<double>>();
  if (r.size() != 2) throw std::invalid_argument(std::string("capture scenario: ") + key + " must be a number or [min, max]");
  lo = r[0];
  hi = r[1];
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

CaptureScenario scenario_from(const json& j) {
  static const char* kKeys[] = {"label", "gamma", "brightness", "contrast", "yaw_deg", "pitch_deg", "corner_jitter",
                                "margin", "resample_factor", "defocus_sigma", "sensor_noise_std", "moire",
                                "jpeg_quality", "seed"};
  if (!j.is_object()) throw std::invalid_argument("capture scenario must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* a) { return k == a; }) == std::end(kKeys)) {
      throw std::invalid_argument("capture scenario: unknown key '" + k + "'");
    }
  }
  CaptureScenario s;
  try {
    read(j, "label", s.label);
    read(j, "gamma", s.gamma);
    read_range(j, "brightness", s.brightness_min, s.brightness_max);
    read_range(j, "contrast", s.contrast_min, s.contrast_max);
    read_range(j, "yaw_deg", s.yaw_min_deg, s.yaw_max_deg);
    read_range(j, "pitch_deg", s.pitch_min_deg, s.pitch_max_deg);
    read_range(j, "corner_jitter", s.corner_jitter_min, s.corner_jitter_max);
    read(j, "margin", s.margin);
    read(j, "resample_factor", s.resample_factor);
    read(j, "defocus_sigma", s.defocus_sigma);
    read(j, "sensor_noise_std", s.sensor_noise_std);
    if (j.contains("jpeg_quality") && !j.at("jpeg_quality").is_null()) s.jpeg_quality = j.at("jpeg_quality").get<int>();
    read(j, "seed", s.seed);
    if (j.contains("moire") && !j.at("moire").is_null()) {
      const json& m = j.at("moire");
      Moire mo;
      read(m, "amplitude", mo.amplitude);
      if (m.contains("frequency")) {
        const auto f = m.at("frequency").get<std::vector<double>>();
        if (f.size() != 2) throw std::invalid_argument("capture scenario: moire.frequency must be a pair");
        mo.frequency_1 = f[0];
        mo.frequency_2 = f[1];
      }
      read(m, "orientation_deg", mo.orientation_deg);
      s.moire = mo;
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("capture scenario: ") + e.what());
  }
  s.validate();
  return s;
}

json scenario_json(const CaptureScenario& s) {
  json j = {{"label", s.label},
            {"gamma", s.gamma},
            {"brightness", {s.brightness_min, s.brightness_max}},
            {"contrast", {s.contrast_min, s.contrast_max}},
            {"yaw_deg", {s.yaw_min_deg, s.yaw_max_deg}},
            {"pitch_deg", {s.pitch_min_deg, s.pitch_max_deg}},
            {"corner_jitter", {s.corner_jitter_min, s.corner_jitter_max}},
            {"margin", s.margin},
            {"resample_factor", s.resample_factor},
            {"defocus_sigma", s.defocus_sigma},
            {"sensor_noise_std", s.sensor_noise_std},
            {"jpeg_quality", s.jpeg_quality},
            {"seed", s.seed}};
  if (s.moire) {
    j["moire"] = {{"amplitude", s.moire->amplitude},
                  {"frequency", {s.moire->frequency_1, s.moire->frequency_2}},
                  {"orientation_deg", s.moire->orientation_deg}};
  } else {
    j["moire"] = nullptr;
  }
  return j;
}

}  // namespace

CaptureScenario CaptureScenario::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("capture scenario is not valid JSON: ") + e.what());
  }
  return scenario_from(j);
}

std::string CaptureScenario::to_json() const { return scenario_json(*this).dump(2); }

// ---------------------------------------------------------------------------
// Capture

RgbImage jpeg_roundtrip(const RgbImage& image, int quality, size_t* encoded_bytes) {
  const std::string bytes = encode_jpeg(image, quality);
  if (encoded_bytes) *encoded_bytes = bytes.size();
  return decode_image(bytes);
}

namespace {

double draw(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Screen corners seen by a pinhole camera after yaw and pitch, fitted into
// the photo frame, then jittered inward.
QuadCorners screen_quad(int w, int h, int pw, int ph, double yaw, double pitch, double margin,
                        const std::array<double, 8>& jitter) {
  const double d = 1.5 * std::max(w, h);
  const double hx = (w - 1) / 2.0, hy = (h - 1) / 2.0;
  const Point local[4] = {{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}};
  std::array<Point, 4> proj;
  const double cy = std::cos(yaw), sy = std::sin(yaw), cp = std::cos(pitch), sp = std::sin(pitch);
  for (int i = 0; i < 4; ++i) {
    const double x1 = local[i].x * cy, y1 = local[i].y, z1 = -local[i].x * sy;
    const double y2 = y1 * cp - z1 * sp, z2 = y1 * sp + z1 * cp;
    const double z = d + z2;
    proj[i] = {x1 * d / z, y2 * d / z};
  }
  double minx = proj[0].x, maxx = minx, miny = proj[0].y, maxy = miny;
  for (const auto& p : proj) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double avail_w = (pw - 1) * (1 - 2 * margin), avail_h = (ph - 1) * (1 - 2 * margin);
  const double s = std::min(avail_w / (maxx - minx), avail_h / (maxy - miny));
  const double ox = (pw - 1) / 2.0 - s * (minx + maxx) / 2.0, oy = (ph - 1) / 2.0 - s * (miny + maxy) / 2.0;
  QuadCorners q;
  static constexpr int kSx[4] = {1, -1, -1, 1}, kSy[4] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i) {
    q.pts[i] = {proj[i].x * s + ox + kSx[i] * jitter[2 * i] * (pw - 1),
                proj[i].y * s + oy + kSy[i] * jitter[2 * i + 1] * (ph - 1)};
  }
  return q;
}

GrayImage channel(const RgbImage& img, int c) {
  GrayImage g(img.width, img.height);
  for (size_t i = 0; i < g.px.size(); ++i) g.px[i] = img.px[i * 3 + c] / 255.0;
  return g;
}

double bilinear(const GrayImage& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(x), img.width - 1), y0 = std::min(static_cast<int>(y), img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0)) + fy * ((1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1));
}

constexpr double kBezel = 0.08;

}  // namespace

CaptureResult simulate_capture(const RgbImage& marked, const CaptureScenario& sc) {
  sc.validate();
  if (marked.width < 2 || marked.height < 2) throw std::invalid_argument("simulate_capture: image too small");
  CaptureResult res;
  const int w = marked.width, h = marked.height;
  if (sc.is_identity()) {
    res.photo = marked;
    res.corners = QuadCorners::full_frame(w, h);
    return res;
  }
  std::mt19937_64 rng(sc.seed);
  const double brightness = draw(rng, sc.brightness_min, sc.brightness_max);
  const double contrast = draw(rng, sc.contrast_min, sc.contrast_max);
  const double yaw = draw(rng, sc.yaw_min_deg, sc.yaw_max_deg) * std::numbers::pi / 180;
  const double pitch = draw(rng, sc.pitch_min_deg, sc.pitch_max_deg) * std::numbers::pi / 180;
  std::array<double, 8> jitter{};
  for (double& j : jitter) j = draw(rng, sc.corner_jitter_min, sc.corner_jitter_max);

  const int pw = std::max(2, static_cast<int>(std::lround(w * sc.resample_factor)));
  const int ph = std::max(2, static_cast<int>(std::lround(h * sc.resample_factor)));
  res.corners = screen_quad(w, h, pw, ph, yaw, pitch, sc.margin, jitter);
  const bool warp = !(pw == w && ph == h && res.corners == QuadCorners::full_frame(w, h));

  std::array<GrayImage, 3> planes = {channel(marked, 0), channel(marked, 1), channel(marked, 2)};

  // Display response.
  for (auto& p : planes) {
    for (double& v : p.px) {
      if (sc.gamma != 2.2) v = std::pow(v, sc.gamma / 2.2);
      v = contrast * (v - 0.5) + 0.5 + brightness;
    }
  }

  // Geometry: inverse-map every photo pixel onto the screen.
  if (warp) {
    const double area_scale = std::sqrt((pw * ph) / static_cast<double>(w * h));
    const double aa = area_scale < 1 ? 0.5 * std::sqrt(1 / (area_scale * area_scale) - 1) : 0.0;
    const Homography hinv = homography_from_points(res.corners.pts, QuadCorners::full_frame(w, h).pts);
    for (auto& p : planes) {
      const GrayImage src = aa > 0 ? gaussian_blur_clamped(p, aa) : p;
      GrayImage out(pw, ph);
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          const Point s = apply_homography(hinv, {double(x), double(y)});
          const bool inside = s.x >= -0.5 && s.y >= -0.5 && s.x <= w - 0.5 && s.y <= h - 0.5;
          out.at(x, y) = inside ? bilinear(src, s.x, s.y) : kBezel;
        }
      }
      p = std::move(out);
    }
  }

  if (sc.defocus_sigma > 0) {
    for (auto& p : planes) p = gaussian_blur_clamped(p, sc.defocus_sigma);
  }

  if (sc.moire && sc.moire->amplitude > 0) {
    const Moire& m = *sc.moire;
    const double phase1 = draw(rng, 0, 2 * std::numbers::pi), phase2 = draw(rng, 0, 2 * std::numbers::pi);
    const double th = m.orientation_deg * std::numbers::pi / 180;
    const double norm = static_cast<double>(pw) * pw + static_cast<double>(ph) * ph;
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        const double u = x * std::cos(th) + y * std::sin(th);
        const double drift = 6 * std::numbers::pi * (static_cast<double>(x) * x + static_cast<double>(y) * y) / norm;
        const double v = 0.5 * m.amplitude *
                         (std::sin(2 * std::numbers::pi * m.frequency_1 * u + phase1 + drift) +
                          std::sin(2 * std::numbers::pi * m.frequency_2 * u + phase2));
        for (auto& p : planes) p.at(x, y) += v;
      }
    }
  }

  if (sc.sensor_noise_std > 0) {
    std::normal_distribution<double> noise(0.0, sc.sensor_noise_std);
    for (auto& p : planes) {
      for (double& v : p.px) v += noise(rng);
    }
  }

  res.photo = RgbImage(pw, ph);
  for (size_t i = 0; i < planes[0].px.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      res.photo.px[i * 3 + c] = static_cast<uint8_t>(std::clamp(std::round(planes[c].px[i] * 255.0), 0.0, 255.0));
    }
  }
  if (sc.jpeg_quality > 0) res.photo = jpeg_roundtrip(res.photo, sc.jpeg_quality, &res.jpeg_bytes);
  return res;
}

// ---------------------------------------------------------------------------
// Documents

RgbImage make_document(int width, int height, std::mt19937_64& rng) {
  RgbImage doc(width, height, 255);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int mx = std::max(4, width / 12), my = std::max(4, height / 12);
  int y = my;
  while (y + 12 < height - my) {
    if (uni(0, 9) == 0) {  // paragraph break
      y += uni(14, 24);
      continue;
    }
    const int glyph_h = uni(7, 10);
    int x = mx + (uni(0, 5) == 0 ? uni(10, 30) : 0);
    const int line_end = width - mx - (uni(0, 4) == 0 ? uni(width / 5, width / 2) : 0);
    const uint8_t ink = static_cast<uint8_t>(uni(15, 70));
    while (x < line_end) {
      const int word = uni(3, 9);
      for (int g = 0; g < word && x < line_end; ++g) {
        // One-pixel strokes: a stem plus a bar at the top, middle or bottom,
        // so ink covers roughly a tenth of the page like printed text.
        const int gw = uni(3, 5);
        const int top = y + (uni(0, 3) == 0 ? -uni(1, 3) : 0);
        const int stem = x + uni(0, gw - 1);
        const int bar = std::array<int, 3>{top, y + glyph_h / 2, y + glyph_h - 1}[uni(0, 2)];
        auto ink_at = [&](int xx, int yy) {
          if (xx < 0 || yy < 0 || xx >= std::min(width, line_end) || yy >= height) return;
          for (int c = 0; c < 3; ++c) doc.at(xx, yy, c) = ink;
        };
        for (int yy = top; yy < y + glyph_h; ++yy) ink_at(stem, yy);
        for (int xx = x; xx < x + gw; ++xx) ink_at(xx, bar);
        x += gw + uni(1, 2);
      }
      x += uni(5, 9);
    }
    y += glyph_h + uni(9, 14);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Evaluation matrix

EvalMatrixConfig EvalMatrixConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("eval config is not valid JSON: ") + e.what());
  }
  EvalMatrixConfig cfg;
  try {
    if (j.is_array()) {
      for (const auto& s : j) cfg.scenarios.push_back(scenario_from(s));
      return cfg;
    }
    if (j.contains("screen")) {
      const auto s = j.at("screen").get<std::vector<int>>();
      if (s.size() != 2) throw std::invalid_argument("eval config: screen must be [width, height]");
      cfg.screen_width = s[0];
      cfg.screen_height = s[1];
    }
    read(j, "alpha", cfg.alpha);
    read(j, "trials", cfg.trials);
    read(j, "seed", cfg.seed);
    read(j, "random_phase", cfg.random_phase);
    if (j.contains("extraction")) cfg.extraction = ExtractionParams::from_json(j.at("extraction").dump());
    if (j.contains("scenarios")) {
      for (const auto& s : j.at("scenarios")) cfg.scenarios.push_back(scenario_from(s));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("eval config: ") + e.what());
  }
  if (!(cfg.alpha >= 0 && cfg.alpha <= 1)) throw std::invalid_argument("eval config: alpha must be in [0, 1]");
  if (cfg.trials < 0) throw std::invalid_argument("eval config: trials must be >= 0");
  return cfg;
}

EvalMatrixConfig EvalMatrixConfig::load(const std::string& path) { return from_json(read_file(path)); }

std::vector<EvalRow> run_eval_matrix(const ModelBundle& bundle, const EvalMatrixConfig& cfg) {
  const int s = bundle.hyper().tile_size;
  if (bundle.hyper().message_bits != codec::kCodewordBits) {
    throw std::invalid_argument("run_eval_matrix: model must carry " + std::to_string(codec::kCodewordBits) + "-bit messages");
  }
  ExtractionParams params = cfg.extraction;
  params.rect_width = cfg.screen_width;
  params.rect_height = cfg.screen_height;

  std::vector<EvalRow> rows;
  for (size_t si = 0; si < cfg.scenarios.size(); ++si) {
    const CaptureScenario& base = cfg.scenarios[si];
    EvalRow row;
    row.label = base.label;
    row.jpeg_quality = base.jpeg_quality;
    long errors = 0;
    double jpeg_bytes = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      // Trial content depends on the trial index only, so every scenario sees
      // the same documents and payloads.
      std::seed_seq seq{static_cast<uint64_t>(cfg.seed), static_cast<uint64_t>(t)};
      std::mt19937_64 rng(seq);
      const codec::Payload payload(static_cast<uint32_t>(rng()));
      const codec::Codeword word = codec::bch_encode(payload);
      GrayImage tile = encoder_forward(word, bundle);
      if (cfg.random_phase) {
        const int ox = static_cast<int>(rng() % static_cast<uint64_t>(s)), oy = static_cast<int>(rng() % static_cast<uint64_t>(s));
        tile = cyclic_shift(tile, ox, oy);
      }
      const RgbImage doc = make_document(cfg.screen_width, cfg.screen_height, rng);
      const RgbImage marked = composite(doc, tile_overlay(tile, cfg.screen_width, cfg.screen_height), cfg.alpha);
      CaptureScenario sc = base;
      sc.seed = base.seed * 1000003ULL + static_cast<uint64_t>(t) + 1;
      const CaptureResult cap = simulate_capture(marked, sc);
      jpeg_bytes += static_cast<double>(cap.jpeg_bytes);
      const ExtractionReport rep = extract_watermark(cap.photo, cap.corners, params, bundle);
      const auto truth = word.bits();
      int e = 0;
      for (size_t i = 0; i < truth.size(); ++i) e += truth[i] != rep.bits[i];
      errors += e;
      if (e <= 3) ++row.le3;
      if (rep.bch && rep.bch->payload == payload) ++row.bch_ok;
      ++row.total;
    }
    if (row.total > 0) {
      row.ber = static_cast<double>(errors) / (static_cast<double>(row.total) * codec::kCodewordBits);
      row.mean_jpeg_bytes = jpeg_bytes / row.total;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string eval_rows_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "scenario,BER,le3,total,bch_ok,jpeg_quality,mean_jpeg_bytes\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.ber << ',' << r.le3 << ',' << r.total << ',' << r.bch_ok << ',' << r.jpeg_quality << ','
       << r.mean_jpeg_bytes << '\n';
  }
  return os.str();
}

std::string eval_rows_json(const std::vector<EvalRow>& rows) {
  json a = json::array();
  for (const auto& r : rows) {
    a.push_back({{"scenario", r.label},
                 {"BER", r.ber},
                 {"le3", std::to_string(r.le3) + "/" + std::to_string(r.total)},
                 {"le3_count", r.le3},
                 {"total", r.total},
                 {"bch_ok", r.bch_ok},
                 {"jpeg_quality", r.jpeg_quality},
                 {"mean_jpeg_bytes", r.mean_jpeg_bytes}});
  }
  return a.dump(2);
}

}  // namespace screenmark
