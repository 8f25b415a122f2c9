#include <cmath>
#include <numbers>
#include <stdexcept>

#include "screenmark/training.hpp"

namespace screenmark {

void DistortionConfig::validate() const {
  if (scale_min > scale_max || scale_min <= 0.0) throw std::invalid_argument("distortion: scale range must satisfy 0 < min <= max");
  if (rotation_min_deg > rotation_max_deg) throw std::invalid_argument("distortion: rotation range must satisfy min <= max");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("distortion: noise_std must be >= 0");
  if (!(blur_variance >= 0.0)) throw std::invalid_argument("distortion: blur_variance must be >= 0");
}

DistortionConfig DistortionConfig::identity() {
  DistortionConfig c;
  c.shift_range = 0;
  c.scale_min = c.scale_max = 1.0;
  c.rotation_min_deg = c.rotation_max_deg = 0.0;
  c.noise_std = 0.0;
  c.blur_variance = 0.0;
  return c;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

DistortionResult distortion_layer(const GrayImage& tile, const DistortionConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (tile.width != tile.height || tile.empty()) throw std::invalid_argument("distortion_layer: tile must be square");
  const int s = tile.width;
  DistortionResult r;
  DistortionTrace& tr = r.trace;
  tr.size = s;

  const int range = cfg.shift_range < 0 ? s : std::min(cfg.shift_range, s);
  int dx = 0, dy = 0;
  if (range > 0) {
    std::uniform_int_distribution<int> d(0, range - 1);
    dx = d(rng);
    dy = d(rng);
  }
  tr.shift = {dx, dy};
  r.true_shift = wrap_shift(dx, dy, s);

  tr.scale = uniform(rng, cfg.scale_min, cfg.scale_max);
  tr.angle_rad = uniform(rng, cfg.rotation_min_deg, cfg.rotation_max_deg) * std::numbers::pi / 180.0;
  tr.resampled = tr.scale != 1.0 || tr.angle_rad != 0.0;

  GrayImage out;
  if (!tr.resampled) {
    out = cyclic_shift(tile, dx, dy);
  } else {
    // Inverse map from output to shifted-tile coordinates about the center;
    // the shift is folded into the tap indices.
    out = GrayImage(s, s);
    const size_t n = static_cast<size_t>(s) * s;
    tr.taps.resize(n);
    tr.weights.resize(n);
    const double c = s / 2.0;
    const double ca = std::cos(tr.angle_rad) / tr.scale;
    const double sa = std::sin(tr.angle_rad) / tr.scale;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double u = c + ca * (x - c) + sa * (y - c);
        const double v = c - sa * (x - c) + ca * (y - c);
        const double fu = std::floor(u), fv = std::floor(v);
        const double ax = u - fu, ay = v - fv;
        const int x0 = wrap_index(static_cast<int>(fu) - dx, s), x1 = wrap_index(x0 + 1, s);
        const int y0 = wrap_index(static_cast<int>(fv) - dy, s), y1 = wrap_index(y0 + 1, s);
        const size_t i = static_cast<size_t>(y) * s + x;
        tr.taps[i] = {y0 * s + x0, y0 * s + x1, y1 * s + x0, y1 * s + x1};
        tr.weights[i] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += tr.weights[i][k] * tile.px[tr.taps[i][k]];
        out.px[i] = acc;
      }
    }
  }

  if (cfg.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (double& v : out.px) v += noise(rng);
  }

  tr.blur_sigma = std::sqrt(cfg.blur_variance);
  if (tr.blur_sigma > 0.0) out = gaussian_blur_cyclic(out, tr.blur_sigma);

  r.distorted = std::move(out);
  return r;
}

GrayImage distortion_backward(const GrayImage& grad_out, const DistortionTrace& tr) {
  if (grad_out.width != tr.size || grad_out.height != tr.size) throw std::invalid_argument("distortion_backward: size mismatch");
  // The cyclic Gaussian blur is self-adjoint.
  GrayImage g = tr.blur_sigma > 0.0 ? gaussian_blur_cyclic(grad_out, tr.blur_sigma) : grad_out;
  if (!tr.resampled) return cyclic_shift(g, -tr.shift.dx, -tr.shift.dy);
  GrayImage gin(tr.size, tr.size);
  for (size_t i = 0; i < g.px.size(); ++i) {
    for (int k = 0; k < 4; ++k) gin.px[tr.taps[i][k]] += tr.weights[i][k] * g.px[i];
  }
  return gin;
}

GrayImage standardize_backward(const GrayImage& x, const GrayImage& gy) {
  if (!x.same_shape(gy)) throw std::invalid_argument("standardize_backward: shape mismatch");
  GrayImage gx(x.width, x.height);
  const double sigma = stddev(x);
  if (sigma <= 1e-12 || x.empty()) return gx;
  const double mu = mean(x);
  const double n = static_cast<double>(x.px.size());
  double mg = 0.0, mgy = 0.0;
  for (size_t i = 0; i < x.px.size(); ++i) {
    const double y = (x.px[i] - mu) / sigma;
    mg += gy.px[i];
    mgy += gy.px[i] * y;
  }
  mg /= n;
  mgy /= n;
  for (size_t i = 0; i < x.px.size(); ++i) {
    const double y = (x.px[i] - mu) / sigma;
    gx.px[i] = (gy.px[i] - mg - y * mgy) / sigma;
  }
  return gx;
}

}  // namespace screenmark
