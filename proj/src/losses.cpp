#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "screenmark/training.hpp"

namespace screenmark {

namespace {

double smoothness_sum(const GrayImage& t, GrayImage* grad) {
  double sum = 0.0;
  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      const double v = t.at(x, y);
      double local = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double d = v - t.wrapped(x + dx, y + dy);
          sum += d * d;
          local += d;
        }
      }
      if (grad) grad->at(x, y) = local;
    }
  }
  return sum;
}

}  // namespace

double loss_smoothness(const GrayImage& tile) {
  if (tile.empty()) return 0.0;
  return std::sqrt(smoothness_sum(tile, nullptr) / (9.0 * static_cast<double>(tile.px.size())));
}

double loss_smoothness_grad(const GrayImage& tile, GrayImage& grad) {
  grad = GrayImage(tile.width, tile.height);
  if (tile.empty()) return 0.0;
  const double n = 9.0 * static_cast<double>(tile.px.size());
  const double loss = std::sqrt(smoothness_sum(tile, &grad) / n);
  // Each ordered pair appears twice across the symmetric 3x3 neighborhood,
  // so d(sum)/dI(q) = 4 * sum_delta (I(q) - I(q + delta)).
  const double scale = loss > 0.0 ? 4.0 / (2.0 * loss * n) : 0.0;
  for (double& g : grad.px) g *= scale;
  return loss;
}

double loss_shift(const GrayImage& out, const GrayImage& target, const ShiftEstimate& shift) {
  GrayImage unused;
  return loss_shift_grad(out, target, shift, unused);
}

double loss_shift_grad(const GrayImage& out, const GrayImage& target, const ShiftEstimate& shift, GrayImage& grad) {
  if (!out.same_shape(target)) throw std::invalid_argument("loss_shift: output and target shapes differ");
  const GrayImage shifted = cyclic_shift(target, shift.dx, shift.dy);
  grad = GrayImage(out.width, out.height);
  double sum = 0.0;
  for (size_t i = 0; i < out.px.size(); ++i) {
    const double d = out.px[i] - shifted.px[i];
    grad.px[i] = d;
    sum += d * d;
  }
  const double n = static_cast<double>(out.px.size());
  const double loss = std::sqrt(sum / n);
  const double scale = loss > 0.0 ? 1.0 / (n * loss) : 0.0;
  for (double& g : grad.px) g *= scale;
  return loss;
}

double loss_message(std::span<const uint8_t> message, std::span<const double> probs) {
  std::vector<double> unused;
  return loss_message_grad(message, probs, unused);
}

double loss_message_grad(std::span<const uint8_t> message, std::span<const double> probs, std::vector<double>& grad) {
  if (message.size() != probs.size() || message.empty()) {
    throw std::invalid_argument("loss_message: message has " + std::to_string(message.size()) + " bits but " +
                                std::to_string(probs.size()) + " probabilities");
  }
  const double m = static_cast<double>(message.size());
  grad.assign(message.size(), 0.0);
  double sum = 0.0;
  for (size_t i = 0; i < message.size(); ++i) {
    const bool clamped = probs[i] < kProbEpsilon || probs[i] > 1.0 - kProbEpsilon;
    const double p = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
    if (message[i]) {
      sum -= std::log(p);
      if (!clamped) grad[i] = -1.0 / (p * m);
    } else {
      sum -= std::log(1.0 - p);
      if (!clamped) grad[i] = 1.0 / ((1.0 - p) * m);
    }
  }
  return sum / m;
}

double total_loss(double smoothness, double shift, double message, const LossWeights& w) {
  return w.smoothness * smoothness + w.shift * shift + w.message * message;
}

}  // namespace screenmark
