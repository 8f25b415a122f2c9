#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "screenmark/codec.hpp"
#include "screenmark/image.hpp"
#include "screenmark/nn.hpp"

namespace screenmark {

/// Architecture hyperparameters shared by the three networks.
struct Hyperparams {
  int tile_size = 120;     // S
  int message_bits = codec::kCodewordBits;  // M
  int center_half = 5;     // c, half-size of the shift target's center square
  int unet_depth = 3;
  int unet_base_width = 16;
  int unet_max_width = 64;
  int decoder_blocks = 4;
  int decoder_base_width = 16;
  int decoder_max_width = 64;
  std::string decoder_head = "gap";  // "gap" or "flatten"

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Default c for a tile side: S/24 rounded, at least 1.
int default_center_half(int tile_size);

struct ShiftEstimate {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const ShiftEstimate&, const ShiftEstimate&) = default;
};

/// Reduces a shift into (-S/2, S/2] on both axes.
ShiftEstimate wrap_shift(int dx, int dy, int tile_size);

/// The localization target: +1 on the center square [S/2-c, S/2+c]^2, -1 on
/// the four corner squares of side c, 0 elsewhere.
GrayImage make_shift_target(int tile_size, int center_half);

/// Position of the target pattern in a shift-decoder output, relative to the
/// center. The output is correlated cyclically with the target template and
/// the best-matching shift is returned; ties go to the smallest |dy|, then
/// the smallest |dx|.
ShiftEstimate locate_shift(const GrayImage& decoder_output, int center_half);

/// U-Net with circular padding: a stem convolution, `depth` pooled down
/// levels and `depth` upsampled levels with skip concatenation, then a 1x1
/// output convolution.
class UNet {
 public:
  struct Cache {
    std::vector<nn::Tensor> conv_inputs;
    std::vector<nn::Tensor> pre_activations;
  };

  UNet() = default;
  UNet(const std::string& prefix, int depth, int base_width, int max_width, int in_channels, int out_channels);

  void init(std::mt19937_64& rng);
  nn::Tensor forward(const nn::Tensor& x, Cache* cache = nullptr) const;
  nn::Tensor backward(const nn::Tensor& grad_out, const Cache& cache);
  void collect(std::vector<nn::Parameter*>& out);
  int downsampling() const { return 1 << depth_; }

 private:
  int depth_ = 0;
  std::vector<int> widths_;
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> down_;
  std::vector<nn::Conv2d> up_;  // up_[i] produces level i (i = 0..depth-1)
  nn::Conv2d head_;
};

/// E: fully connected M -> S^2, reshape, U-Net, logistic output in [0,1].
class Encoder {
 public:
  struct Cache {
    nn::Tensor input;
    UNet::Cache unet;
    nn::Tensor output;
  };

  Encoder() = default;
  explicit Encoder(const Hyperparams& hp);
  void init(std::mt19937_64& rng);
  /// `messages` is (M, N, 1, 1) with bits in {0,1}; output (1, N, S, S).
  nn::Tensor forward(const nn::Tensor& messages, Cache* cache = nullptr) const;
  void backward(const nn::Tensor& grad_out, const Cache& cache);
  void collect(std::vector<nn::Parameter*>& out);

 private:
  int size_ = 0;
  nn::Linear fc_;
  UNet unet_;
};

/// D_c: U-Net mapping a tile to an S x S localization map.
class ShiftDecoder {
 public:
  ShiftDecoder() = default;
  explicit ShiftDecoder(const Hyperparams& hp);
  void init(std::mt19937_64& rng);
  nn::Tensor forward(const nn::Tensor& tiles, UNet::Cache* cache = nullptr) const;
  nn::Tensor backward(const nn::Tensor& grad_out, const UNet::Cache& cache);
  void collect(std::vector<nn::Parameter*>& out);
  int downsampling() const { return unet_.downsampling(); }

 private:
  UNet unet_;
};

/// D_w: convolutional blocks with 2x pooling, then a pooled or flattened
/// head to M logistic outputs.
class MessageDecoder {
 public:
  struct Cache {
    std::vector<nn::Tensor> conv_inputs;
    std::vector<nn::Tensor> pre_activations;
    nn::Tensor head_input;
    nn::Tensor probs;
  };

  MessageDecoder() = default;
  explicit MessageDecoder(const Hyperparams& hp);
  void init(std::mt19937_64& rng);
  /// Output (M, N, 1, 1) probabilities.
  nn::Tensor forward(const nn::Tensor& tiles, Cache* cache = nullptr) const;
  nn::Tensor backward(const nn::Tensor& grad_probs, const Cache& cache);
  nn::Tensor backward_logits(const nn::Tensor& grad_logits, const Cache& cache);
  void collect(std::vector<nn::Parameter*>& out);

 private:
  bool flatten_head_ = false;
  int final_channels_ = 0, final_size_ = 0;
  std::vector<nn::Conv2d> blocks_;
  nn::Linear head_;
};

/// Parameters and hyperparameters for E, D_c and D_w.
class ModelBundle {
 public:
  static constexpr int kVersion = 1;

  explicit ModelBundle(const Hyperparams& hp);
  static ModelBundle random(const Hyperparams& hp, uint64_t seed);

  const Hyperparams& hyper() const { return hp_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  ShiftDecoder& shift_decoder() { return shift_decoder_; }
  const ShiftDecoder& shift_decoder() const { return shift_decoder_; }
  MessageDecoder& message_decoder() { return message_decoder_; }
  const MessageDecoder& message_decoder() const { return message_decoder_; }

  std::vector<nn::Parameter*> encoder_parameters();
  std::vector<nn::Parameter*> shift_decoder_parameters();
  std::vector<nn::Parameter*> message_decoder_parameters();
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

 private:
  Hyperparams hp_;
  Encoder encoder_;
  ShiftDecoder shift_decoder_;
  MessageDecoder message_decoder_;
};

bool parameters_equal(const ModelBundle& a, const ModelBundle& b);

// Conversions between images and single-channel network tensors.
nn::Tensor to_tensor(const std::vector<GrayImage>& images);
GrayImage tensor_image(const nn::Tensor& t, int index);
nn::Tensor messages_tensor(const std::vector<std::vector<uint8_t>>& messages);

GrayImage encoder_forward(const codec::Codeword& message, const ModelBundle& bundle);
GrayImage encoder_forward_bits(const std::vector<uint8_t>& message, const ModelBundle& bundle);
GrayImage shift_decoder_forward(const GrayImage& tile, const ModelBundle& bundle);
std::vector<double> message_decoder_forward(const GrayImage& tile, const ModelBundle& bundle);

/// Probability clamp shared by decoding and the message loss.
inline constexpr double kProbEpsilon = 1e-7;

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Archive: "SMBUNDLE" magic, u32 LE manifest length, JSON manifest, then
/// little-endian float32 blobs at the manifest's offsets.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::string& bytes);

}  // namespace screenmark
