#include "screenmark/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <stdexcept>

namespace screenmark {

using nn::Tensor;

void Hyperparams::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("hyperparams: " + msg); };
  if (tile_size < 8) fail("tile_size must be >= 8");
  if (message_bits < 1) fail("message_bits must be positive");
  if (center_half <= 0 || 4 * center_half >= tile_size) fail("center_half must satisfy 0 < c < S/4");
  if (unet_depth < 1 || tile_size % (1 << unet_depth) != 0) fail("tile_size must be divisible by 2^unet_depth");
  if (unet_base_width < 1 || unet_max_width < unet_base_width) fail("bad U-Net widths");
  if (decoder_blocks < 1 || decoder_base_width < 1 || decoder_max_width < decoder_base_width) fail("bad decoder widths");
  if (decoder_head != "gap" && decoder_head != "flatten") fail("decoder_head must be 'gap' or 'flatten'");
}

int default_center_half(int tile_size) { return std::max(1, static_cast<int>(std::lround(tile_size / 24.0))); }

ShiftEstimate wrap_shift(int dx, int dy, int s) {
  auto w = [s](int v) {
    v = wrap_index(v, s);
    return v > s / 2 ? v - s : v;
  };
  return {w(dx), w(dy)};
}

GrayImage make_shift_target(int s, int c) {
  if (c <= 0 || 4 * c >= s) {
    throw std::invalid_argument("make_shift_target: need 0 < c < S/4 (S=" + std::to_string(s) + ", c=" + std::to_string(c) + ")");
  }
  GrayImage t(s, s, 0.0);
  const int mid = s / 2;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      if (std::abs(x - mid) <= c && std::abs(y - mid) <= c) {
        t.at(x, y) = 1.0;
      } else if ((x < c || x >= s - c) && (y < c || y >= s - c)) {
        t.at(x, y) = -1.0;
      }
    }
  }
  return t;
}

namespace {

// out(x, y) = sum over u, v in [lo, hi] of img(x + u, y + v), cyclic.
GrayImage box_sum_cyclic(const GrayImage& img, int lo, int hi) {
  GrayImage tmp(img.width, img.height), out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int u = lo; u <= hi; ++u) s += img.wrapped(x + u, y);
      tmp.at(x, y) = s;
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int v = lo; v <= hi; ++v) s += tmp.wrapped(x, y + v);
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace

ShiftEstimate locate_shift(const GrayImage& out, int c) {
  if (out.width != out.height || out.empty()) throw std::invalid_argument("locate_shift: expected a square map");
  const int s = out.width;
  const int mid = s / 2;
  const GrayImage center = box_sum_cyclic(out, -c, c);
  const GrayImage corner = box_sum_cyclic(out, -c, c - 1);

  ShiftEstimate best{};
  double best_score = -INFINITY;
  auto better = [](const ShiftEstimate& a, const ShiftEstimate& b) {
    const int ady = std::abs(a.dy), bdy = std::abs(b.dy);
    if (ady != bdy) return ady < bdy;
    const int adx = std::abs(a.dx), bdx = std::abs(b.dx);
    if (adx != bdx) return adx < bdx;
    return a.dy != b.dy ? a.dy < b.dy : a.dx < b.dx;
  };
  for (int dy = -(s - 1) / 2; dy <= s / 2; ++dy) {
    for (int dx = -(s - 1) / 2; dx <= s / 2; ++dx) {
      const double score = center.wrapped(mid + dx, mid + dy) - corner.wrapped(dx, dy);
      const ShiftEstimate cand{dx, dy};
      if (score > best_score || (score == best_score && better(cand, best))) {
        best_score = score;
        best = cand;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// U-Net

UNet::UNet(const std::string& prefix, int depth, int base_width, int max_width, int in_channels, int out_channels)
    : depth_(depth) {
  for (int i = 0; i <= depth; ++i) widths_.push_back(std::min(base_width << i, max_width));
  stem_ = nn::Conv2d(prefix + ".stem", in_channels, widths_[0]);
  for (int i = 1; i <= depth; ++i) {
    down_.emplace_back(prefix + ".down" + std::to_string(i), widths_[static_cast<size_t>(i - 1)], widths_[static_cast<size_t>(i)]);
  }
  for (int i = 0; i < depth; ++i) {
    up_.emplace_back(prefix + ".up" + std::to_string(i),
                     widths_[static_cast<size_t>(i + 1)] + widths_[static_cast<size_t>(i)], widths_[static_cast<size_t>(i)]);
  }
  head_ = nn::Conv2d(prefix + ".head", widths_[0], out_channels, 1);
}

void UNet::init(std::mt19937_64& rng) {
  stem_.init(rng);
  for (auto& c : down_) c.init(rng);
  for (auto& c : up_) c.init(rng);
  head_.init(rng, 0.5f);
}

void UNet::collect(std::vector<nn::Parameter*>& out) {
  stem_.collect(out);
  for (auto& c : down_) c.collect(out);
  for (auto& c : up_) c.collect(out);
  head_.collect(out);
}

Tensor UNet::forward(const Tensor& x, Cache* cache) const {
  auto conv = [cache](const nn::Conv2d& layer, const Tensor& in) {
    Tensor z = layer.forward(in);
    Tensor a = nn::leaky_relu(z);
    if (cache) {
      cache->conv_inputs.push_back(in);
      cache->pre_activations.push_back(std::move(z));
    }
    return a;
  };
  if (cache) {
    cache->conv_inputs.clear();
    cache->pre_activations.clear();
  }
  std::vector<Tensor> skips;
  skips.push_back(conv(stem_, x));
  for (int i = 0; i < depth_; ++i) skips.push_back(conv(down_[static_cast<size_t>(i)], nn::avg_pool2(skips.back())));
  Tensor u = skips.back();
  for (int i = depth_ - 1; i >= 0; --i) {
    u = conv(up_[static_cast<size_t>(i)], nn::concat_channels(nn::upsample2(u), skips[static_cast<size_t>(i)]));
  }
  if (cache) cache->conv_inputs.push_back(u);
  return head_.forward(u);
}

Tensor UNet::backward(const Tensor& grad_out, const Cache& cache) {
  const size_t d = static_cast<size_t>(depth_);
  // Cache order: stem, down1..downD, up(D-1)..up0, head input.
  const auto& in = cache.conv_inputs;
  const auto& pre = cache.pre_activations;
  Tensor gu = head_.backward(in[2 * d + 1], grad_out);
  std::vector<Tensor> gskip(d + 1);
  for (size_t i = 0; i < d; ++i) {
    const size_t slot = 1 + d + (d - 1 - i);  // up_[i] ran at position d-1-i among the ups
    Tensor gz = nn::leaky_relu_backward(pre[slot], gu);
    Tensor gc = up_[i].backward(in[slot], gz);
    auto [g_up, g_skip] = nn::split_channels(gc, widths_[i + 1]);
    gskip[i] = std::move(g_skip);
    gu = nn::upsample2_backward(g_up);
  }
  gskip[d] = std::move(gu);
  for (size_t i = d; i >= 1; --i) {
    Tensor gz = nn::leaky_relu_backward(pre[i], gskip[i]);
    Tensor gp = down_[i - 1].backward(in[i], gz);
    gskip[i - 1] = nn::add(gskip[i - 1], nn::avg_pool2_backward(gp));
  }
  Tensor gz0 = nn::leaky_relu_backward(pre[0], gskip[0]);
  return stem_.backward(in[0], gz0);
}

// ---------------------------------------------------------------------------
// Networks

Encoder::Encoder(const Hyperparams& hp)
    : size_(hp.tile_size),
      fc_("E.fc", hp.message_bits, hp.tile_size * hp.tile_size),
      unet_("E.unet", hp.unet_depth, hp.unet_base_width, hp.unet_max_width, 1, 1) {}

void Encoder::init(std::mt19937_64& rng) {
  fc_.init(rng, 0.5f);
  unet_.init(rng);
}

void Encoder::collect(std::vector<nn::Parameter*>& out) {
  fc_.collect(out);
  unet_.collect(out);
}

Tensor Encoder::forward(const Tensor& messages, Cache* cache) const {
  Tensor x = messages;
  for (float& v : x.values()) v = 2.0f * v - 1.0f;
  Tensor pre = nn::features_to_image(fc_.forward(x), size_, size_);
  Tensor out = nn::sigmoid(unet_.forward(pre, cache ? &cache->unet : nullptr));
  if (cache) {
    cache->input = std::move(x);
    cache->output = out;
  }
  return out;
}

void Encoder::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor g = nn::sigmoid_backward(cache.output, grad_out);
  g = unet_.backward(g, cache.unet);
  fc_.backward(cache.input, nn::image_to_features(g));
}

ShiftDecoder::ShiftDecoder(const Hyperparams& hp)
    : unet_("Dc.unet", hp.unet_depth, hp.unet_base_width, hp.unet_max_width, 1, 1) {}

void ShiftDecoder::init(std::mt19937_64& rng) { unet_.init(rng); }
void ShiftDecoder::collect(std::vector<nn::Parameter*>& out) { unet_.collect(out); }

Tensor ShiftDecoder::forward(const Tensor& tiles, UNet::Cache* cache) const { return unet_.forward(tiles, cache); }

Tensor ShiftDecoder::backward(const Tensor& grad_out, const UNet::Cache& cache) { return unet_.backward(grad_out, cache); }

MessageDecoder::MessageDecoder(const Hyperparams& hp) : flatten_head_(hp.decoder_head == "flatten") {
  int in = 1, size = hp.tile_size;
  for (int i = 0; i < hp.decoder_blocks; ++i) {
    const int w = std::min(hp.decoder_base_width << i, hp.decoder_max_width);
    blocks_.emplace_back("Dw.block" + std::to_string(i), in, w);
    in = w;
    if (size % 2 == 0) size /= 2;
  }
  final_channels_ = in;
  final_size_ = size;
  const int features = flatten_head_ ? in * size * size : in;
  head_ = nn::Linear("Dw.head", features, hp.message_bits);
}

void MessageDecoder::init(std::mt19937_64& rng) {
  for (auto& b : blocks_) b.init(rng);
  head_.init(rng, 0.5f);
}

void MessageDecoder::collect(std::vector<nn::Parameter*>& out) {
  for (auto& b : blocks_) b.collect(out);
  head_.collect(out);
}

Tensor MessageDecoder::forward(const Tensor& tiles, Cache* cache) const {
  if (cache) {
    cache->conv_inputs.clear();
    cache->pre_activations.clear();
  }
  Tensor x = tiles;
  for (const auto& block : blocks_) {
    Tensor z = block.forward(x);
    Tensor a = nn::leaky_relu(z);
    if (cache) {
      cache->conv_inputs.push_back(std::move(x));
      cache->pre_activations.push_back(std::move(z));
    }
    x = a.height() % 2 == 0 ? nn::avg_pool2(a) : std::move(a);
  }
  Tensor features = flatten_head_ ? nn::flatten(x) : nn::global_avg_pool(x);
  Tensor probs = nn::sigmoid(head_.forward(features));
  if (cache) {
    cache->head_input = std::move(features);
    cache->probs = probs;
  }
  return probs;
}

Tensor MessageDecoder::backward(const Tensor& grad_probs, const Cache& cache) {
  return backward_logits(nn::sigmoid_backward(cache.probs, grad_probs), cache);
}

Tensor MessageDecoder::backward_logits(const Tensor& grad_logits, const Cache& cache) {
  Tensor g = head_.backward(cache.head_input, grad_logits);
  g = flatten_head_ ? nn::unflatten(g, final_channels_, final_size_, final_size_)
                    : nn::global_avg_pool_backward(g, final_size_, final_size_);
  for (size_t i = blocks_.size(); i-- > 0;) {
    const Tensor& z = cache.pre_activations[i];
    if (z.height() % 2 == 0) g = nn::avg_pool2_backward(g);
    g = blocks_[i].backward(cache.conv_inputs[i], nn::leaky_relu_backward(z, g));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Bundle

ModelBundle::ModelBundle(const Hyperparams& hp)
    : hp_((hp.validate(), hp)), encoder_(hp), shift_decoder_(hp), message_decoder_(hp) {}

ModelBundle ModelBundle::random(const Hyperparams& hp, uint64_t seed) {
  ModelBundle b(hp);
  std::mt19937_64 rng(seed);
  b.encoder_.init(rng);
  b.shift_decoder_.init(rng);
  b.message_decoder_.init(rng);
  return b;
}

std::vector<nn::Parameter*> ModelBundle::encoder_parameters() {
  std::vector<nn::Parameter*> out;
  encoder_.collect(out);
  return out;
}

std::vector<nn::Parameter*> ModelBundle::shift_decoder_parameters() {
  std::vector<nn::Parameter*> out;
  shift_decoder_.collect(out);
  return out;
}

std::vector<nn::Parameter*> ModelBundle::message_decoder_parameters() {
  std::vector<nn::Parameter*> out;
  message_decoder_.collect(out);
  return out;
}

std::vector<nn::Parameter*> ModelBundle::parameters() {
  std::vector<nn::Parameter*> out;
  encoder_.collect(out);
  shift_decoder_.collect(out);
  message_decoder_.collect(out);
  return out;
}

std::vector<const nn::Parameter*> ModelBundle::parameters() const {
  auto ps = const_cast<ModelBundle*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

bool parameters_equal(const ModelBundle& a, const ModelBundle& b) {
  if (!(a.hyper() == b.hyper())) return false;
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->shape != pb[i]->shape || pa[i]->value != pb[i]->value) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Image-level entry points

Tensor to_tensor(const std::vector<GrayImage>& images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const int w = images.front().width, h = images.front().height;
  Tensor t(1, static_cast<int>(images.size()), h, w);
  for (size_t n = 0; n < images.size(); ++n) {
    if (images[n].width != w || images[n].height != h) throw std::invalid_argument("to_tensor: mixed image sizes");
    float* p = t.plane(0, static_cast<int>(n));
    for (size_t i = 0; i < images[n].px.size(); ++i) p[i] = static_cast<float>(images[n].px[i]);
  }
  return t;
}

GrayImage tensor_image(const Tensor& t, int index) {
  GrayImage img(t.width(), t.height());
  const float* p = t.plane(0, index);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = p[i];
  return img;
}

Tensor messages_tensor(const std::vector<std::vector<uint8_t>>& messages) {
  if (messages.empty()) throw std::invalid_argument("messages_tensor: no messages");
  const int m = static_cast<int>(messages.front().size());
  const int n = static_cast<int>(messages.size());
  Tensor t(m, n, 1, 1);
  for (int j = 0; j < n; ++j) {
    if (static_cast<int>(messages[static_cast<size_t>(j)].size()) != m) throw std::invalid_argument("messages_tensor: mixed lengths");
    for (int i = 0; i < m; ++i) t.data()[static_cast<size_t>(i) * n + j] = messages[static_cast<size_t>(j)][static_cast<size_t>(i)] ? 1.0f : 0.0f;
  }
  return t;
}

namespace {

void check_tile(const GrayImage& tile, const ModelBundle& bundle) {
  const int s = bundle.hyper().tile_size;
  if (tile.width != s || tile.height != s) {
    throw std::invalid_argument("expected a " + std::to_string(s) + "x" + std::to_string(s) + " tile, got " +
                                std::to_string(tile.width) + "x" + std::to_string(tile.height));
  }
}

}  // namespace

GrayImage encoder_forward_bits(const std::vector<uint8_t>& message, const ModelBundle& bundle) {
  if (static_cast<int>(message.size()) != bundle.hyper().message_bits) {
    throw std::invalid_argument("message has " + std::to_string(message.size()) + " bits, model expects " +
                                std::to_string(bundle.hyper().message_bits));
  }
  return tensor_image(bundle.encoder().forward(messages_tensor({message})), 0);
}

GrayImage encoder_forward(const codec::Codeword& message, const ModelBundle& bundle) {
  return encoder_forward_bits(message.bits(), bundle);
}

GrayImage shift_decoder_forward(const GrayImage& tile, const ModelBundle& bundle) {
  check_tile(tile, bundle);
  return tensor_image(bundle.shift_decoder().forward(to_tensor({tile})), 0);
}

std::vector<double> message_decoder_forward(const GrayImage& tile, const ModelBundle& bundle) {
  check_tile(tile, bundle);
  const Tensor probs = bundle.message_decoder().forward(to_tensor({tile}));
  std::vector<double> out(probs.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(static_cast<double>(probs.data()[i]), kProbEpsilon, 1.0 - kProbEpsilon);
  return out;
}

}  // namespace screenmark
