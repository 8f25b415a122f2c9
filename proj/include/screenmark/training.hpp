#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "screenmark/image.hpp"
#include "screenmark/models.hpp"

namespace screenmark {

// ---------------------------------------------------------------------------
// Distortion layer

struct DistortionConfig {
  /// Cyclic shifts are drawn uniformly from [0, shift_range) per axis;
  /// a negative value means the full tile period.
  int shift_range = -1;
  double scale_min = 0.96;
  double scale_max = 1.04;
  double rotation_min_deg = -2.0;
  double rotation_max_deg = 2.0;
  double noise_std = 0.02;      // in units of the [0,1] tile range
  double blur_variance = 1.0;   // px^2

  void validate() const;
  static DistortionConfig identity();
};

/// What the layer did, kept for the backward pass.
struct DistortionTrace {
  int size = 0;
  ShiftEstimate shift;
  bool resampled = false;
  double scale = 1.0;
  double angle_rad = 0.0;
  // Per output pixel: four source indices and bilinear weights.
  std::vector<std::array<int, 4>> taps;
  std::vector<std::array<double, 4>> weights;
  double blur_sigma = 0.0;
};

struct DistortionResult {
  GrayImage distorted;
  ShiftEstimate true_shift;
  DistortionTrace trace;
};

/// Shift, scale, rotation, additive Gaussian noise, Gaussian blur, in that
/// order. Scale and rotation are one bilinear resample about the tile center
/// on the cyclically extended tile.
DistortionResult distortion_layer(const GrayImage& tile, const DistortionConfig& cfg, std::mt19937_64& rng);
/// Gradient of the layer output with respect to its input tile.
GrayImage distortion_backward(const GrayImage& grad_out, const DistortionTrace& trace);

/// Backward pass of `standardize`: given x and dL/dy, returns dL/dx.
GrayImage standardize_backward(const GrayImage& x, const GrayImage& grad_out);

// ---------------------------------------------------------------------------
// Losses. Each `*_grad` variant also writes dL/d(input).

double loss_smoothness(const GrayImage& tile);
double loss_smoothness_grad(const GrayImage& tile, GrayImage& grad);

double loss_shift(const GrayImage& decoder_output, const GrayImage& target, const ShiftEstimate& true_shift);
double loss_shift_grad(const GrayImage& decoder_output, const GrayImage& target, const ShiftEstimate& true_shift,
                       GrayImage& grad);

/// Binary cross entropy, probabilities clamped to [eps, 1 - eps].
double loss_message(std::span<const uint8_t> message, std::span<const double> probs);
double loss_message_grad(std::span<const uint8_t> message, std::span<const double> probs, std::vector<double>& grad);

struct LossWeights {
  double smoothness = 1.5;  // lambda_p
  double shift = 1.0;       // lambda_c
  double message = 2.0;     // lambda_m
};

double total_loss(double smoothness, double shift, double message, const LossWeights& w);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  Hyperparams architecture;
  LossWeights weights;
  int batch_size = 32;
  int iterations = 20000;
  double learning_rate = 1e-3;
  uint64_t seed = 1;
  DistortionConfig distortion;
  /// Fraction of the run over which the distortion noise ramps linearly from
  /// zero to distortion.noise_std. 0 applies the full noise from the start.
  double noise_warmup = 0.0;

  void validate() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

/// Learning rate for an iteration: base rate, x0.3 after 60% and again
/// after 85% of the run.
double scheduled_learning_rate(const TrainConfig& cfg, int iteration);

/// Distortion noise in effect at an iteration under the warm-up.
double scheduled_noise_std(const TrainConfig& cfg, int iteration);

struct TrainRecord {
  int iteration = 0;
  double loss = 0, smoothness = 0, shift = 0, message = 0;
  double bit_accuracy = 0;
  double shift_hit_rate = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::string to_csv() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TrainProgress = std::function<void(const TrainRecord&)>;

struct TrainResult {
  ModelBundle bundle;
  TrainLog log;
};

TrainResult train(const TrainConfig& cfg, const TrainProgress& progress = {});

/// Runs the shift decoder on a standardized tile, reverses the located
/// shift and decodes the bits.
struct TileDecoding {
  GrayImage shift_map;
  ShiftEstimate shift;
  GrayImage aligned;
  std::vector<double> probs;
  std::vector<uint8_t> bits;
};
TileDecoding decode_tile(const GrayImage& standardized_tile, const ModelBundle& bundle);

// ---------------------------------------------------------------------------
// Evaluation through the distortion layer

struct BerResult {
  double ber = 0.0;
  int trials_le3 = 0;
  int trials = 0;
};

using TileEncoderFn = std::function<GrayImage(const std::vector<uint8_t>& message)>;
using TileDecoderFn = std::function<std::vector<uint8_t>(const GrayImage& distorted)>;

BerResult evaluate_ber(const TileEncoderFn& encode, const TileDecoderFn& decode, int message_bits,
                       const DistortionConfig& cfg, int n_trials, uint64_t seed);
BerResult evaluate_ber(const ModelBundle& bundle, const DistortionConfig& cfg, int n_trials, uint64_t seed);

}  // namespace screenmark
