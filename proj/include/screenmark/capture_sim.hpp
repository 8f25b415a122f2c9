#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "screenmark/extraction.hpp"
#include "screenmark/image.hpp"
#include "screenmark/models.hpp"

namespace screenmark {

struct Moire {
  double amplitude = 0.0;           // in [0,1] pixel units
  double frequency_1 = 0.11;        // cycles per pixel
  double frequency_2 = 0.13;
  double orientation_deg = 30.0;
};

/// Screen-to-camera channel: display response, shooting geometry and optics,
/// camera processing. Ranges are [min, max] and sampled per capture.
struct CaptureScenario {
  std::string label = "identity";
  double gamma = 2.2;  // display gamma; values are raised to gamma / 2.2
  double brightness_min = 0.0, brightness_max = 0.0;  // additive, [0,1] units
  double contrast_min = 1.0, contrast_max = 1.0;      // about mid-gray
  double yaw_min_deg = 0.0, yaw_max_deg = 0.0;        // rotation about the vertical axis
  double pitch_min_deg = 0.0, pitch_max_deg = 0.0;    // rotation about the horizontal axis
  double corner_jitter_min = 0.0, corner_jitter_max = 0.0;  // inward corner shift, fraction of frame
  double margin = 0.0;           // frame fraction around the screen on each side
  double resample_factor = 1.0;  // photo size / screen size
  double defocus_sigma = 0.0;    // px
  double sensor_noise_std = 0.0; // [0,1] units
  std::optional<Moire> moire;
  int jpeg_quality = 0;          // 0 disables the JPEG stage
  uint64_t seed = 1;

  void validate() const;
  bool is_identity() const;
  static CaptureScenario from_json(const std::string& text);
  std::string to_json() const;
};

struct CaptureResult {
  RgbImage photo;
  QuadCorners corners;
  size_t jpeg_bytes = 0;
};

CaptureResult simulate_capture(const RgbImage& marked, const CaptureScenario& scenario);

/// Baseline JPEG encode and decode at `quality` (1..100).
RgbImage jpeg_roundtrip(const RgbImage& image, int quality, size_t* encoded_bytes = nullptr);

/// White page with dark text-like strokes arranged in lines.
RgbImage make_document(int width, int height, std::mt19937_64& rng);

struct EvalMatrixConfig {
  int screen_width = 512;
  int screen_height = 384;
  double alpha = 8.0 / 255.0;
  int trials = 10;
  uint64_t seed = 1;
  /// Cyclic phase of the tile grid relative to the screen origin, drawn per
  /// trial; models a capture that starts mid-tile.
  bool random_phase = true;
  ExtractionParams extraction;
  std::vector<CaptureScenario> scenarios;

  static EvalMatrixConfig from_json(const std::string& text);
  static EvalMatrixConfig load(const std::string& path);
};

struct EvalRow {
  std::string label;
  double ber = 0.0;
  int le3 = 0;
  int total = 0;
  int bch_ok = 0;  // BCH decoded to the embedded payload
  int jpeg_quality = 0;
  double mean_jpeg_bytes = 0.0;
};

std::vector<EvalRow> run_eval_matrix(const ModelBundle& bundle, const EvalMatrixConfig& cfg);

std::string eval_rows_csv(const std::vector<EvalRow>& rows);
std::string eval_rows_json(const std::vector<EvalRow>& rows);

}  // namespace screenmark
