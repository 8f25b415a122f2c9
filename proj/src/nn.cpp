#include "screenmark/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace screenmark::nn {

Tensor::Tensor(int channels, int batch, int height, int width, float fill)
    : c_(channels), n_(batch), h_(height), w_(width),
      data_(static_cast<size_t>(channels) * batch * height * width, fill) {
  if (channels < 0 || batch < 0 || height < 0 || width < 0) throw std::invalid_argument("negative tensor dimension");
}

Parameter::Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  size_t count = 1;
  for (int d : shape) count *= static_cast<size_t>(d);
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

namespace {

constexpr int kDirectMaxWidth = 256;

std::vector<float>& scratch(int slot) {
  thread_local std::vector<float> buffers[4];
  return buffers[slot];
}

float* scratch_data(int slot, size_t n) {
  auto& b = scratch(slot);
  if (b.size() < n) b.resize(n);
  return b.data();
}

// Copies a row of width w shifted by `off` with circular wrap:
// dst[x] = src[(x + off) mod w].
inline void copy_wrapped_row(float* dst, const float* src, int w, int off) {
  off = ((off % w) + w) % w;
  const int head = w - off;
  std::memcpy(dst, src + off, sizeof(float) * static_cast<size_t>(head));
  if (off) std::memcpy(dst + head, src, sizeof(float) * static_cast<size_t>(off));
}

inline void add_wrapped_row(float* dst, const float* src, int w, int off) {
  // dst[(x + off) mod w] += src[x]
  off = ((off % w) + w) % w;
  const int head = w - off;
  for (int x = 0; x < head; ++x) dst[x + off] += src[x];
  for (int x = head; x < w; ++x) dst[x - head] += src[x];
}

// Column block for one sample and output rows [y0, y1): row r = (ci, ky, kx),
// column j = (y - y0) * w + x.
void im2col_block(const Tensor& x, int k, int ni, int y0, int y1, float* col) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const int pad = k / 2;
  const size_t len = static_cast<size_t>(y1 - y0) * w;
  for (int ci = 0; ci < c; ++ci) {
    const float* src = x.plane(ci, ni);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) * len;
        for (int y = y0; y < y1; ++y) {
          const int sy = ((y + ky - pad) % h + h) % h;
          copy_wrapped_row(dst + static_cast<size_t>(y - y0) * w, src + static_cast<size_t>(sy) * w, w, kx - pad);
        }
      }
    }
  }
}

void col2im_block(const float* col, int k, int ni, int y0, int y1, Tensor& gx) {
  const int c = gx.channels(), h = gx.height(), w = gx.width();
  const int pad = k / 2;
  const size_t len = static_cast<size_t>(y1 - y0) * w;
  for (int ci = 0; ci < c; ++ci) {
    float* dst = gx.plane(ci, ni);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) * len;
        for (int y = y0; y < y1; ++y) {
          const int sy = ((y + ky - pad) % h + h) % h;
          add_wrapped_row(dst + static_cast<size_t>(sy) * w, src + static_cast<size_t>(y - y0) * w, w, kx - pad);
        }
      }
    }
  }
}

// Rows per column block, sized so a block stays cache resident.
int block_rows(int kk, int h, int w) {
  constexpr size_t kTargetFloats = 96 * 1024;
  const size_t per_row = static_cast<size_t>(kk) * w;
  return std::clamp(static_cast<int>(kTargetFloats / std::max<size_t>(per_row, 1)), 1, h);
}

// Circularly padded copy of one k=3 input plane: (h + 2) x (w + 2).
void pad_plane(const float* src, int h, int w, float* dst) {
  const int pw = w + 2;
  for (int y = -1; y <= h; ++y) {
    const float* row = src + static_cast<size_t>((y + h) % h) * w;
    float* d = dst + static_cast<size_t>(y + 1) * pw;
    d[0] = row[w - 1];
    std::memcpy(d + 1, row, sizeof(float) * static_cast<size_t>(w));
    d[w + 1] = row[0];
  }
}

// out[g][y][x] += sum over ci, ky, kx of wt[g][ci][ky][kx] * pad[ci][y + ky][x + kx]
// for G output channels whose weight rows start at wt[g * wstride].
template <int G>
void direct3x3_rows(const float* pad, int cin, int h, int w, const float* wt, size_t wstride, float* const* out) {
  const int pw = w + 2;
  const size_t pplane = static_cast<size_t>(h + 2) * pw;
  float acc[G][256];
  for (int y = 0; y < h; ++y) {
    for (int g = 0; g < G; ++g) std::fill_n(acc[g], w, 0.0f);
    for (int ci = 0; ci < cin; ++ci) {
      const float* r0 = pad + ci * pplane + static_cast<size_t>(y) * pw;
      const float* r1 = r0 + pw;
      const float* r2 = r1 + pw;
      for (int g = 0; g < G; ++g) {
        const float* k = wt + g * wstride + static_cast<size_t>(ci) * 9;
        const float k0 = k[0], k1 = k[1], k2 = k[2], k3 = k[3], k4 = k[4], k5 = k[5], k6 = k[6], k7 = k[7], k8 = k[8];
        float* a = acc[g];
        for (int x = 0; x < w; ++x) {
          a[x] += k0 * r0[x] + k1 * r0[x + 1] + k2 * r0[x + 2] + k3 * r1[x] + k4 * r1[x + 1] + k5 * r1[x + 2] +
                  k6 * r2[x] + k7 * r2[x + 1] + k8 * r2[x + 2];
        }
      }
    }
    for (int g = 0; g < G; ++g) {
      float* o = out[g] + static_cast<size_t>(y) * w;
      for (int x = 0; x < w; ++x) o[x] += acc[g][x];
    }
  }
}

// Circular 3x3 convolution for one sample: `in` holds cin planes at stride
// `in_stride`, `out` holds cout planes at stride `out_stride`, accumulated.
void direct3x3(const float* in, size_t in_stride, int cin, int h, int w, const float* wt, int cout, float* out,
               size_t out_stride) {
  const size_t pplane = static_cast<size_t>(h + 2) * (w + 2);
  float* pad = scratch_data(2, pplane * cin);
  for (int ci = 0; ci < cin; ++ci) pad_plane(in + ci * in_stride, h, w, pad + ci * pplane);
  const size_t wstride = static_cast<size_t>(cin) * 9;
  int co = 0;
  for (; co + 4 <= cout; co += 4) {
    float* o[4] = {out + co * out_stride, out + (co + 1) * out_stride, out + (co + 2) * out_stride,
                   out + (co + 3) * out_stride};
    direct3x3_rows<4>(pad, cin, h, w, wt + co * wstride, wstride, o);
  }
  for (; co < cout; ++co) {
    float* o[1] = {out + co * out_stride};
    direct3x3_rows<1>(pad, cin, h, w, wt + co * wstride, wstride, o);
  }
}

// dW[co][ci][ky][kx] += sum over y, x of g[co][y][x] * pad[ci][y + ky][x + kx]
// for one sample; `pad` holds the padded input planes.
void direct3x3_weight_grad(const float* pad, int cin, int h, int w, const float* g, size_t g_stride, int cout,
                           float* dw) {
  constexpr int L = 8;
  const int pw = w + 2;
  const size_t pplane = static_cast<size_t>(h + 2) * pw;
  const int wv = w - w % L;
  for (int co = 0; co < cout; ++co) {
    const float* gp = g + co * g_stride;
    for (int ci = 0; ci < cin; ++ci) {
      const float* pc = pad + ci * pplane;
      float acc[9][L] = {};
      float tail[9] = {};
      for (int y = 0; y < h; ++y) {
        const float* gr = gp + static_cast<size_t>(y) * w;
        const float* r0 = pc + static_cast<size_t>(y) * pw;
        const float* r1 = r0 + pw;
        const float* r2 = r1 + pw;
        for (int x = 0; x < wv; x += L) {
          for (int j = 0; j < L; ++j) {
            const float gv = gr[x + j];
            acc[0][j] += gv * r0[x + j];
            acc[1][j] += gv * r0[x + j + 1];
            acc[2][j] += gv * r0[x + j + 2];
            acc[3][j] += gv * r1[x + j];
            acc[4][j] += gv * r1[x + j + 1];
            acc[5][j] += gv * r1[x + j + 2];
            acc[6][j] += gv * r2[x + j];
            acc[7][j] += gv * r2[x + j + 1];
            acc[8][j] += gv * r2[x + j + 2];
          }
        }
        for (int x = wv; x < w; ++x) {
          const float gv = gr[x];
          tail[0] += gv * r0[x];
          tail[1] += gv * r0[x + 1];
          tail[2] += gv * r0[x + 2];
          tail[3] += gv * r1[x];
          tail[4] += gv * r1[x + 1];
          tail[5] += gv * r1[x + 2];
          tail[6] += gv * r2[x];
          tail[7] += gv * r2[x + 1];
          tail[8] += gv * r2[x + 2];
        }
      }
      float* d = dw + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int k = 0; k < 9; ++k) {
        float sum = tail[k];
        for (int j = 0; j < L; ++j) sum += acc[k][j];
        d[k] += sum;
      }
    }
  }
}

void he_normal(Parameter& p, int fan_in, float gain, std::mt19937_64& rng) {
  std::normal_distribution<float> nd(0.0f, gain * std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& v : p.value) v = nd(rng);
}

}  // namespace

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d kernel must be odd");
}

void Conv2d::init(std::mt19937_64& rng, float gain) {
  he_normal(weight, in_ * k_ * k_, gain, rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.channels() != in_) throw std::invalid_argument("Conv2d " + weight.name + ": channel mismatch");
  if (k_ == 3 && x.width() <= kDirectMaxWidth) {
    const size_t stride = static_cast<size_t>(x.batch()) * x.plane_size();
    Tensor y(out_, x.batch(), x.height(), x.width());
    for (int o = 0; o < out_; ++o) std::fill_n(y.data() + o * stride, stride, bias.value[static_cast<size_t>(o)]);
    for (int ni = 0; ni < x.batch(); ++ni) {
      direct3x3(x.plane(0, ni), stride, in_, x.height(), x.width(), weight.value.data(), out_, y.plane(0, ni), stride);
    }
    return y;
  }
  const int kk = in_ * k_ * k_;
  const int h = x.height(), w = x.width();
  const size_t cols = static_cast<size_t>(x.batch()) * x.plane_size();
  const int rows = block_rows(kk, h, w);
  float* col = scratch_data(0, static_cast<size_t>(kk) * rows * w);
  Tensor y(out_, x.batch(), h, w);
  for (int o = 0; o < out_; ++o) std::fill_n(y.data() + o * cols, cols, bias.value[static_cast<size_t>(o)]);
  for (int ni = 0; ni < x.batch(); ++ni) {
    for (int y0 = 0; y0 < h; y0 += rows) {
      const int y1 = std::min(h, y0 + rows);
      const int len = (y1 - y0) * w;
      im2col_block(x, k_, ni, y0, y1, col);
      float* dst = y.data() + static_cast<size_t>(ni) * x.plane_size() + static_cast<size_t>(y0) * w;
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_, len, kk, 1.0f, weight.value.data(), kk, col, len,
                  1.0f, dst, static_cast<int>(cols));
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
  if (k_ == 3 && x.width() <= kDirectMaxWidth) {
    const int h = x.height(), w = x.width();
    const size_t stride = static_cast<size_t>(x.batch()) * x.plane_size();
    for (int o = 0; o < out_; ++o) {
      const float* g = grad_out.data() + o * stride;
      double s = 0.0;
      for (size_t i = 0; i < stride; ++i) s += g[i];
      bias.grad[static_cast<size_t>(o)] += static_cast<float>(s);
    }
    // Input gradient: circular correlation with the transposed, flipped kernel.
    float* wt = scratch_data(3, weight.size());
    for (int o = 0; o < out_; ++o) {
      for (int i = 0; i < in_; ++i) {
        for (int k = 0; k < 9; ++k) wt[(static_cast<size_t>(i) * out_ + o) * 9 + (8 - k)] = weight.value[(static_cast<size_t>(o) * in_ + i) * 9 + k];
      }
    }
    Tensor gx(in_, x.batch(), h, w);
    const size_t pplane = static_cast<size_t>(h + 2) * (w + 2);
    for (int ni = 0; ni < x.batch(); ++ni) {
      float* pad = scratch_data(2, pplane * in_);
      for (int ci = 0; ci < in_; ++ci) pad_plane(x.plane(ci, ni), h, w, pad + ci * pplane);
      direct3x3_weight_grad(pad, in_, h, w, grad_out.plane(0, ni), stride, out_, weight.grad.data());
      direct3x3(grad_out.plane(0, ni), stride, out_, h, w, wt, in_, gx.plane(0, ni), stride);
    }
    return gx;
  }
  const int kk = in_ * k_ * k_;
  const int h = x.height(), w = x.width();
  const size_t cols = static_cast<size_t>(x.batch()) * x.plane_size();
  const int rows = block_rows(kk, h, w);
  float* col = scratch_data(0, static_cast<size_t>(kk) * rows * w);
  float* gcol = scratch_data(1, static_cast<size_t>(kk) * rows * w);
  for (int o = 0; o < out_; ++o) {
    const float* g = grad_out.data() + o * cols;
    double s = 0.0;
    for (size_t i = 0; i < cols; ++i) s += g[i];
    bias.grad[static_cast<size_t>(o)] += static_cast<float>(s);
  }
  Tensor gx(in_, x.batch(), h, w);
  for (int ni = 0; ni < x.batch(); ++ni) {
    for (int y0 = 0; y0 < h; y0 += rows) {
      const int y1 = std::min(h, y0 + rows);
      const int len = (y1 - y0) * w;
      const float* g = grad_out.data() + static_cast<size_t>(ni) * x.plane_size() + static_cast<size_t>(y0) * w;
      im2col_block(x, k_, ni, y0, y1, col);
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_, kk, len, 1.0f, g, static_cast<int>(cols), col, len,
                  1.0f, weight.grad.data(), kk);
      cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, len, out_, 1.0f, weight.value.data(), kk, g,
                  static_cast<int>(cols), 0.0f, gcol, len);
      col2im_block(gcol, k_, ni, y0, y1, gx);
    }
  }
  return gx;
}

Linear::Linear(const std::string& name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {}

void Linear::init(std::mt19937_64& rng, float gain) {
  he_normal(weight, in_, gain, rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.channels() != in_ || x.height() != 1 || x.width() != 1) {
    throw std::invalid_argument("Linear " + weight.name + ": expected (" + std::to_string(in_) + ", N, 1, 1) input");
  }
  const int n = x.batch();
  Tensor y(out_, n, 1, 1);
  for (int o = 0; o < out_; ++o) std::fill_n(y.data() + static_cast<size_t>(o) * n, n, bias.value[static_cast<size_t>(o)]);
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_, n, in_, 1.0f, weight.value.data(), in_, x.data(), n,
              1.0f, y.data(), n);
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_out) {
  const int n = x.batch();
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_, in_, n, 1.0f, grad_out.data(), n, x.data(), n, 1.0f,
              weight.grad.data(), in_);
  for (int o = 0; o < out_; ++o) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += grad_out.data()[static_cast<size_t>(o) * n + i];
    bias.grad[static_cast<size_t>(o)] += static_cast<float>(s);
  }
  Tensor gx(in_, n, 1, 1);
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, in_, n, out_, 1.0f, weight.value.data(), in_, grad_out.data(),
              n, 0.0f, gx.data(), n);
  return gx;
}

Tensor leaky_relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : kLeakySlope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (size_t i = 0; i < g.size(); ++i) {
    if (x.data()[i] <= 0.0f) g.data()[i] *= kLeakySlope;
  }
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.values()) v = 1.0f / (1.0f + std::exp(-v));
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (size_t i = 0; i < g.size(); ++i) {
    const float s = y.data()[i];
    g.data()[i] *= s * (1.0f - s);
  }
  return g;
}

Tensor avg_pool2(const Tensor& x) {
  if (x.height() % 2 || x.width() % 2) throw std::invalid_argument("avg_pool2 needs even spatial size");
  const int h = x.height() / 2, w = x.width() / 2;
  Tensor y(x.channels(), x.batch(), h, w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      const float* s = x.plane(c, n);
      float* d = y.plane(c, n);
      for (int yy = 0; yy < h; ++yy) {
        const float* r0 = s + static_cast<size_t>(2 * yy) * x.width();
        const float* r1 = r0 + x.width();
        for (int xx = 0; xx < w; ++xx) {
          d[yy * w + xx] = 0.25f * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
        }
      }
    }
  }
  return y;
}

Tensor avg_pool2_backward(const Tensor& g) {
  Tensor gx(g.channels(), g.batch(), g.height() * 2, g.width() * 2);
  const int w2 = g.width() * 2;
  for (int c = 0; c < g.channels(); ++c) {
    for (int n = 0; n < g.batch(); ++n) {
      const float* s = g.plane(c, n);
      float* d = gx.plane(c, n);
      for (int yy = 0; yy < g.height(); ++yy) {
        for (int xx = 0; xx < g.width(); ++xx) {
          const float v = 0.25f * s[yy * g.width() + xx];
          float* r0 = d + static_cast<size_t>(2 * yy) * w2 + 2 * xx;
          r0[0] = v;
          r0[1] = v;
          r0[w2] = v;
          r0[w2 + 1] = v;
        }
      }
    }
  }
  return gx;
}

Tensor upsample2(const Tensor& x) {
  Tensor y(x.channels(), x.batch(), x.height() * 2, x.width() * 2);
  const int w2 = x.width() * 2;
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      const float* s = x.plane(c, n);
      float* d = y.plane(c, n);
      for (int yy = 0; yy < x.height(); ++yy) {
        for (int xx = 0; xx < x.width(); ++xx) {
          const float v = s[yy * x.width() + xx];
          float* r0 = d + static_cast<size_t>(2 * yy) * w2 + 2 * xx;
          r0[0] = v;
          r0[1] = v;
          r0[w2] = v;
          r0[w2 + 1] = v;
        }
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& g) {
  Tensor gx(g.channels(), g.batch(), g.height() / 2, g.width() / 2);
  const int w = gx.width();
  for (int c = 0; c < g.channels(); ++c) {
    for (int n = 0; n < g.batch(); ++n) {
      const float* s = g.plane(c, n);
      float* d = gx.plane(c, n);
      for (int yy = 0; yy < gx.height(); ++yy) {
        const float* r0 = s + static_cast<size_t>(2 * yy) * g.width();
        const float* r1 = r0 + g.width();
        for (int xx = 0; xx < w; ++xx) d[yy * w + xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
      }
    }
  }
  return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("concat_channels: shape mismatch");
  }
  Tensor y(a.channels() + b.channels(), a.batch(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), y.values().begin());
  std::copy(b.values().begin(), b.values().end(), y.values().begin() + static_cast<long>(a.size()));
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, int first) {
  Tensor a(first, g.batch(), g.height(), g.width());
  Tensor b(g.channels() - first, g.batch(), g.height(), g.width());
  std::copy(g.values().begin(), g.values().begin() + static_cast<long>(a.size()), a.values().begin());
  std::copy(g.values().begin() + static_cast<long>(a.size()), g.values().end(), b.values().begin());
  return {std::move(a), std::move(b)};
}

Tensor flatten(const Tensor& x) {
  const size_t hw = x.plane_size();
  Tensor f(static_cast<int>(x.channels() * hw), x.batch(), 1, 1);
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      const float* s = x.plane(c, n);
      for (size_t i = 0; i < hw; ++i) f.data()[(c * hw + i) * x.batch() + n] = s[i];
    }
  }
  return f;
}

Tensor unflatten(const Tensor& g, int channels, int height, int width) {
  Tensor x(channels, g.batch(), height, width);
  const size_t hw = x.plane_size();
  for (int c = 0; c < channels; ++c) {
    for (int n = 0; n < g.batch(); ++n) {
      float* d = x.plane(c, n);
      for (size_t i = 0; i < hw; ++i) d[i] = g.data()[(c * hw + i) * g.batch() + n];
    }
  }
  return x;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.channels(), x.batch(), 1, 1);
  const size_t hw = x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      const float* s = x.plane(c, n);
      double acc = 0.0;
      for (size_t i = 0; i < hw; ++i) acc += s[i];
      y.at(c, n, 0, 0) = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& g, int height, int width) {
  Tensor gx(g.channels(), g.batch(), height, width);
  const float inv = 1.0f / static_cast<float>(height * width);
  for (int c = 0; c < g.channels(); ++c) {
    for (int n = 0; n < g.batch(); ++n) {
      float* d = gx.plane(c, n);
      std::fill_n(d, gx.plane_size(), g.at(c, n, 0, 0) * inv);
    }
  }
  return gx;
}

Tensor features_to_image(const Tensor& f, int height, int width) { return unflatten(f, 1, height, width); }

Tensor image_to_features(const Tensor& img) { return flatten(img); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  Tensor y = a;
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += b.data()[i];
  return y;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const auto step = static_cast<float>(learning_rate * std::sqrt(c2) / c1);
  const auto eps = static_cast<float>(cfg_.epsilon * std::sqrt(c2));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (size_t i = 0; i < p.size(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace screenmark::nn
