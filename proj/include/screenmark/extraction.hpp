#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "screenmark/codec.hpp"
#include "screenmark/image.hpp"
#include "screenmark/models.hpp"

namespace screenmark {

/// BT.601 luma scaled to [0,1].
GrayImage to_grayscale(const RgbImage& photo);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Screen corners in photo pixel coordinates, ordered TL, TR, BR, BL. A
/// corner names the center of the corresponding corner pixel of the screen.
struct QuadCorners {
  std::array<Point, 4> pts;

  /// "x1,y1;x2,y2;x3,y3;x4,y4". Throws std::invalid_argument.
  static QuadCorners parse(const std::string& text);
  static QuadCorners full_frame(int width, int height);
  std::string to_string() const;
  /// Throws std::invalid_argument for collinear or non-convex quads.
  void validate() const;

  friend bool operator==(const QuadCorners&, const QuadCorners&) = default;
};

using Homography = std::array<double, 9>;

/// H with H * (src_i, 1) ~ (dst_i, 1) for the four correspondences.
Homography homography_from_points(const std::array<Point, 4>& src, const std::array<Point, 4>& dst);
Point apply_homography(const Homography& h, Point p);

/// Maps the quad onto the full out_w x out_h rectangle with bilinear
/// sampling; samples falling outside the source are 0.
GrayImage warp_perspective(const GrayImage& photo, const QuadCorners& corners, int out_w, int out_h);
RgbImage warp_perspective(const RgbImage& photo, const QuadCorners& corners, int out_w, int out_h);

/// I_b: difference from the median of the a x a window (clipped at borders)
/// where that difference is within t, zero elsewhere.
GrayImage detect_background(const GrayImage& photo, int window, double threshold);

/// Mean of the floor(W/p) x floor(H/p) blocks of side p.
GrayImage average_with_period(const GrayImage& residual, int period);

/// Standard deviation of the cyclically Gaussian-filtered period average.
double score_period(const GrayImage& period_average, double gauss_sigma);

struct PeriodSearch {
  int period = 0;
  std::vector<std::pair<int, double>> curve;
  /// Score with the leftover noise of averaging removed, per curve entry;
  /// the period is chosen on this.
  std::vector<double> signal;
  bool low_confidence = false;
};

struct ExtractionParams {
  int median_window = 15;
  double threshold = 16.0 / 255.0;
  int period_min = 40;
  int period_max = 400;
  double gauss_sigma = 2.0;
  /// Rectified size; 0 derives it from the corner quad.
  int rect_width = 0;
  int rect_height = 0;

  void validate() const;
  /// Overrides fields of `base` with the keys present in `text`.
  static ExtractionParams from_json(const std::string& text, ExtractionParams base);
  static ExtractionParams from_json(const std::string& text);
  std::string to_json() const;
};

/// Scores every candidate period and returns the smallest local maximum
/// within 90% of the best noise-corrected score. The upper bound is clipped to half the
/// shorter image side.
PeriodSearch find_period(const GrayImage& residual, const ExtractionParams& params);

/// Period average rescaled to S x S and standardized to zero mean and unit
/// deviation, the normalization the decoders are trained on.
GrayImage extract_tile(const GrayImage& residual, int period, int tile_size);

/// Output size of the rectification; a zero dimension becomes the longer of
/// the two opposite quad sides plus one.
std::pair<int, int> rectified_size(const QuadCorners& corners, int rect_width, int rect_height);

struct StepTiming {
  std::string step;
  double ms = 0.0;
};

struct ExtractionReport {
  std::vector<std::string> steps;
  GrayImage rectified;
  GrayImage background;
  PeriodSearch period;
  GrayImage tile;        // I''_w
  GrayImage shift_map;   // D_c output
  ShiftEstimate shift;
  GrayImage aligned;     // I'_w
  std::vector<double> probs;
  std::vector<uint8_t> bits;
  std::optional<codec::DecodeResult> bch;
  std::vector<std::string> warnings;
  std::vector<StepTiming> timings;

  bool success() const { return bch.has_value(); }
  /// Timings vary between runs; everything else is deterministic.
  std::string to_json(bool include_timings = true) const;
};

/// Runs the full pipeline. Without corners the photo is taken as already
/// rectified.
ExtractionReport extract_watermark(const RgbImage& photo, const std::optional<QuadCorners>& corners,
                                   const ExtractionParams& params, const ModelBundle& bundle);

/// Writes rectified.png, i_b.png, i_w_raw.png, shift_map.png, i_w_aligned.png
/// and score_curve.json into `dir`.
void dump_intermediates(const ExtractionReport& report, const std::filesystem::path& dir);

/// PNG bytes of a named intermediate ("i_b.png", ...), or nullopt.
std::optional<std::string> intermediate_png(const ExtractionReport& report, const std::string& name);

}  // namespace screenmark
