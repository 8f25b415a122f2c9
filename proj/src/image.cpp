#include "screenmark/image.hpp"

#include <algorithm>
#include <cmath>

namespace screenmark {

double GrayImage::wrapped(int x, int y) const { return at(wrap_index(x, width), wrap_index(y, height)); }

GrayImage cyclic_shift(const GrayImage& img, int dx, int dy) {
  GrayImage out(img.width, img.height);
  if (img.empty()) return out;
  for (int y = 0; y < img.height; ++y) {
    const int sy = wrap_index(y - dy, img.height);
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(wrap_index(x - dx, img.width), sy);
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

template <typename IndexFn>
GrayImage separable(const GrayImage& img, const std::vector<double>& k, IndexFn index) {
  const int r = static_cast<int>(k.size() / 2);
  GrayImage tmp(img.width, img.height), out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * img.at(index(x + i, img.width), y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * tmp.at(x, index(y + i, img.height));
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

GrayImage gaussian_blur_cyclic(const GrayImage& img, double sigma) {
  if (sigma <= 0.0 || img.empty()) return img;
  return separable(img, gaussian_kernel(sigma), [](int i, int n) { return wrap_index(i, n); });
}

GrayImage gaussian_blur_clamped(const GrayImage& img, double sigma) {
  if (sigma <= 0.0 || img.empty()) return img;
  return separable(img, gaussian_kernel(sigma), [](int i, int n) { return std::clamp(i, 0, n - 1); });
}

GrayImage resize_bilinear_cyclic(const GrayImage& img, int out_w, int out_h) {
  if (img.empty()) throw std::invalid_argument("resize of empty image");
  if (out_w == img.width && out_h == img.height) return img;
  GrayImage out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      out.at(x, y) = (1 - wy) * ((1 - wx) * img.wrapped(x0, y0) + wx * img.wrapped(x0 + 1, y0)) +
                     wy * ((1 - wx) * img.wrapped(x0, y0 + 1) + wx * img.wrapped(x0 + 1, y0 + 1));
    }
  }
  return out;
}

double mean(const GrayImage& img) {
  if (img.empty()) return 0.0;
  double s = 0.0;
  for (double v : img.px) s += v;
  return s / static_cast<double>(img.px.size());
}

double stddev(const GrayImage& img) {
  if (img.empty()) return 0.0;
  const double m = mean(img);
  double s = 0.0;
  for (double v : img.px) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(img.px.size()));
}

GrayImage standardize(const GrayImage& img) {
  GrayImage out = img;
  const double m = mean(img);
  const double s = stddev(img);
  for (double& v : out.px) v = s > 1e-12 ? (v - m) / s : 0.0;
  return out;
}

double correlation(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("correlation: shape mismatch");
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    sab += (a.px[i] - ma) * (b.px[i] - mb);
    saa += (a.px[i] - ma) * (a.px[i] - ma);
    sbb += (b.px[i] - mb) * (b.px[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

RgbImage to_rgb8(const GrayImage& img) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto v = static_cast<uint8_t>(std::clamp(std::round(img.at(x, y) * 255.0), 0.0, 255.0));
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = v;
    }
  }
  return out;
}

}  // namespace screenmark
