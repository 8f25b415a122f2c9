#include "screenmark/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace screenmark {

GrayImage tile_overlay(const GrayImage& tile, int width, int height) {
  if (tile.empty()) throw std::invalid_argument("tile_overlay: empty tile");
  if (width < tile.width || height < tile.height) {
    throw std::invalid_argument("tile_overlay: screen " + std::to_string(width) + "x" + std::to_string(height) +
                                " is smaller than the " + std::to_string(tile.width) + "x" +
                                std::to_string(tile.height) + " tile");
  }
  GrayImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const double* src = tile.px.data() + static_cast<size_t>(y % tile.height) * tile.width;
    double* dst = out.px.data() + static_cast<size_t>(y) * width;
    for (int x = 0; x < width; ++x) dst[x] = src[x % tile.width];
  }
  return out;
}

RgbImage composite(const RgbImage& screen, const GrayImage& overlay, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("composite: alpha must be in [0, 1]");
  if (screen.width != overlay.width || screen.height != overlay.height) {
    throw std::invalid_argument("composite: screen is " + std::to_string(screen.width) + "x" +
                                std::to_string(screen.height) + " but overlay is " + std::to_string(overlay.width) +
                                "x" + std::to_string(overlay.height));
  }
  RgbImage out(screen.width, screen.height);
  for (size_t i = 0; i < overlay.px.size(); ++i) {
    const double o = 255.0 * overlay.px[i];
    for (int c = 0; c < 3; ++c) {
      const double v = (1.0 - alpha) * screen.px[i * 3 + c] + alpha * o;
      out.px[i * 3 + c] = static_cast<uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return out;
}

double psnr(const RgbImage& a, const RgbImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image dimensions differ");
  if (a.px.empty()) throw std::invalid_argument("psnr: empty images");
  double se = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - b.px[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.px.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> window_taps() {
  std::vector<double> t(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    t[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += t[i];
  }
  for (double& v : t) v /= sum;
  return t;
}

// Gaussian-weighted local means over all fully contained windows.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& taps) {
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h), out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * img[static_cast<size_t>(y) * w + x + k];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * tmp[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

double ssim_term(double ma, double mb, double va, double vb, double cov) {
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double ssim_channel(const RgbImage& a, const RgbImage& b, int c) {
  const int w = a.width, h = a.height;
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = a.px[i * 3 + c];
    y[i] = b.px[i * 3 + c];
  }
  if (w < kWindow || h < kWindow) {
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
      ma += x[i];
      mb += y[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < n; ++i) {
      va += (x[i] - ma) * (x[i] - ma);
      vb += (y[i] - mb) * (y[i] - mb);
      cov += (x[i] - ma) * (y[i] - mb);
    }
    return ssim_term(ma, mb, va / n, vb / n, cov / n);
  }
  const auto taps = window_taps();
  std::vector<double> xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h, taps), my = filter_valid(y, w, h, taps);
  const auto sxx = filter_valid(xx, w, h, taps), syy = filter_valid(yy, w, h, taps), sxy = filter_valid(xy, w, h, taps);
  double total = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    total += ssim_term(mx[i], my[i], sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i]);
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

double ssim(const RgbImage& a, const RgbImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image dimensions differ");
  if (a.px.empty()) throw std::invalid_argument("ssim: empty images");
  if (a.px == b.px) return 1.0;
  return (ssim_channel(a, b, 0) + ssim_channel(a, b, 1) + ssim_channel(a, b, 2)) / 3.0;
}

std::string QualityMetrics::to_json() const {
  nlohmann::json j;
  if (std::isinf(psnr_db)) {
    j["psnr_db"] = "inf";
  } else {
    j["psnr_db"] = psnr_db;
  }
  j["ssim"] = ssim;
  return j.dump();
}

QualityMetrics quality_metrics(const RgbImage& reference, const RgbImage& test) {
  return {psnr(reference, test), ssim(reference, test)};
}

}  // namespace screenmark
