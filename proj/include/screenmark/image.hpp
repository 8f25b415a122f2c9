#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace screenmark {

/// Single-channel real image, row-major. Watermark tiles, shift maps and
/// grayscale photographs all use this type.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), px(static_cast<size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative image size");
  }

  double& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }
  /// Index arithmetic modulo the image size.
  double wrapped(int x, int y) const;
  bool same_shape(const GrayImage& o) const { return width == o.width && height == o.height; }
  bool empty() const { return px.empty(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// 8-bit RGB image, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;

  RgbImage() = default;
  RgbImage(int w, int h, uint8_t fill = 0) : width(w), height(h), px(static_cast<size_t>(w) * h * 3, fill) {
    if (w < 0 || h < 0) throw std::invalid_argument("negative image size");
  }

  uint8_t& at(int x, int y, int c) { return px[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int x, int y, int c) const { return px[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  bool same_shape(const RgbImage& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

inline int wrap_index(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

/// out(x, y) = in((x - dx) mod W, (y - dy) mod H).
GrayImage cyclic_shift(const GrayImage& img, int dx, int dy);

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma). sigma <= 0 yields {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with cyclic borders.
GrayImage gaussian_blur_cyclic(const GrayImage& img, double sigma);
/// Separable Gaussian blur with clamped borders.
GrayImage gaussian_blur_clamped(const GrayImage& img, double sigma);

/// Bilinear resize treating the input as one period of a periodic signal.
GrayImage resize_bilinear_cyclic(const GrayImage& img, int out_w, int out_h);

/// Zero mean, unit standard deviation. Constant images map to zeros.
GrayImage standardize(const GrayImage& img);

double mean(const GrayImage& img);
double stddev(const GrayImage& img);

/// Pearson correlation of two same-shaped images.
double correlation(const GrayImage& a, const GrayImage& b);

/// Replicates a grayscale value in [0,1] into RGB with rounding and clamping.
RgbImage to_rgb8(const GrayImage& img);

}  // namespace screenmark
