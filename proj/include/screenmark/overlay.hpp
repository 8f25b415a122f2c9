#pragma once

#include <string>

#include "screenmark/image.hpp"

namespace screenmark {

/// Repeats the tile from the top-left corner; partial tiles at the right and
/// bottom edges are cropped. Requires W, H >= S.
GrayImage tile_overlay(const GrayImage& tile, int width, int height);

/// (1 - alpha) * screen + alpha * 255 * overlay per channel, rounded half
/// away from zero and clamped to 0..255.
RgbImage composite(const RgbImage& screen, const GrayImage& overlay, double alpha);

/// 10 log10(255^2 / MSE) over all channels; +infinity for identical images.
double psnr(const RgbImage& a, const RgbImage& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = (0.01*255)^2,
/// C2 = (0.03*255)^2, averaged over channels. Images smaller than the window
/// use a single window covering the whole image.
double ssim(const RgbImage& a, const RgbImage& b);

struct QualityMetrics {
  double psnr_db = 0.0;
  double ssim = 0.0;
  /// {"psnr_db": ..., "ssim": ...}; an infinite PSNR is written as the string "inf".
  std::string to_json() const;
};

QualityMetrics quality_metrics(const RgbImage& reference, const RgbImage& test);

}  // namespace screenmark
