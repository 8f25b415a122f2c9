#pragma once

// Minimal CPU neural-network building blocks used by the watermark networks.
//
// Activations use a channel-major [C][N][H][W] layout so that a whole batch of
// convolutions is a single GEMM over C_in*k*k rows and N*H*W columns. Every
// layer exposes a const forward pass and a backward pass that accumulates
// parameter gradients and returns the input gradient. Layers keep no
// activation state; callers keep whatever the backward pass needs.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace screenmark::nn {

class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int batch, int height, int width, float fill = 0.0f);

  int channels() const { return c_; }
  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  size_t plane_size() const { return static_cast<size_t>(h_) * w_; }
  size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return c_ == o.c_ && n_ == o.n_ && h_ == o.h_ && w_ == o.w_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float* plane(int c, int n) { return data_.data() + (static_cast<size_t>(c) * n_ + n) * plane_size(); }
  const float* plane(int c, int n) const { return data_.data() + (static_cast<size_t>(c) * n_ + n) * plane_size(); }
  float& at(int c, int n, int y, int x) { return plane(c, n)[static_cast<size_t>(y) * w_ + x]; }
  float at(int c, int n, int y, int x) const { return plane(c, n)[static_cast<size_t>(y) * w_ + x]; }

 private:
  int c_ = 0, n_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s);
  size_t size() const { return value.size(); }
  void zero_grad();
};

/// k x k convolution, stride 1, circular padding of k/2 on both axes.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel = 3);

  void init(std::mt19937_64& rng, float gain = 1.0f);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight); out.push_back(&bias); }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Parameter weight;  // [out][in][k][k]
  Parameter bias;    // [out]

 private:
  int in_ = 0, out_ = 0, k_ = 3;
};

/// Fully connected layer on features laid out as Tensor(features, batch, 1, 1).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  void init(std::mt19937_64& rng, float gain = 1.0f);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Parameter weight;  // [out][in]
  Parameter bias;    // [out]

 private:
  int in_ = 0, out_ = 0;
};

inline constexpr float kLeakySlope = 0.1f;

Tensor leaky_relu(const Tensor& x);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& grad_out);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a channel-concatenated gradient back into the parts' gradients.
std::pair<Tensor, Tensor> split_channels(const Tensor& g, int first_channels);

/// (C, N, H, W) -> (C*H*W, N, 1, 1), feature index c*H*W + y*W + x.
Tensor flatten(const Tensor& x);
Tensor unflatten(const Tensor& g, int channels, int height, int width);
/// (C, N, H, W) -> (C, N, 1, 1).
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, int height, int width);

/// (H*W, N, 1, 1) features -> (1, N, H, W) image and back.
Tensor features_to_image(const Tensor& f, int height, int width);
Tensor image_to_features(const Tensor& img);

Tensor add(const Tensor& a, const Tensor& b);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, AdamConfig cfg = {});
  void step(double learning_rate);
  void zero_grad();
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace screenmark::nn
