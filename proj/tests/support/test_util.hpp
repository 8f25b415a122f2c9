#pragma once

#include <cstdint>
#include <random>

#include "screenmark/image.hpp"
#include "screenmark/models.hpp"

namespace testutil {

inline screenmark::GrayImage random_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  screenmark::GrayImage img(w, h);
  for (double& v : img.px) v = u(rng);
  return img;
}

inline screenmark::RgbImage random_rgb(int w, int h, uint64_t seed) {
  std::mt19937_64 rng(seed);
  screenmark::RgbImage img(w, h);
  for (auto& v : img.px) v = static_cast<uint8_t>(rng() & 0xFF);
  return img;
}

/// Small architecture that keeps unit tests fast.
inline screenmark::Hyperparams tiny_hyper(int s = 16) {
  screenmark::Hyperparams hp;
  hp.tile_size = s;
  hp.center_half = 1;
  hp.unet_depth = 2;
  hp.unet_base_width = 4;
  hp.unet_max_width = 8;
  hp.decoder_blocks = 2;
  hp.decoder_base_width = 4;
  hp.decoder_max_width = 8;
  return hp;
}

/// Central difference of f at img.px[i].
template <typename F>
double numeric_derivative(F f, screenmark::GrayImage img, size_t i, double h = 1e-6) {
  const double v = img.px[i];
  img.px[i] = v + h;
  const double up = f(img);
  img.px[i] = v - h;
  const double down = f(img);
  return (up - down) / (2 * h);
}

}  // namespace testutil
