#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "screenmark/training.hpp"

namespace screenmark {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  architecture.validate();
  distortion.validate();
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (weights.smoothness < 0 || weights.shift < 0 || weights.message < 0) fail("loss weights must be nonnegative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (iterations < 1) fail("iterations must be positive");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(noise_warmup >= 0 && noise_warmup <= 1)) fail("noise_warmup must be in [0, 1]");
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
  }
}

void read_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto r = j.at(key).get<std::vector<double>>();
  if (r.size() != 2) throw std::invalid_argument(std::string(key) + " must be a [min, max] pair");
  lo = r[0];
  hi = r[1];
}

}  // namespace

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j,
               {"S", "M", "c", "lambda_p", "lambda_c", "lambda_m", "batch_size", "iterations", "learning_rate", "seed",
                "distortion", "architecture", "noise_warmup"},
               "train config");
    Hyperparams& hp = cfg.architecture;
    read(j, "S", hp.tile_size);
    read(j, "M", hp.message_bits);
    hp.center_half = default_center_half(hp.tile_size);
    read(j, "c", hp.center_half);
    read(j, "lambda_p", cfg.weights.smoothness);
    read(j, "lambda_c", cfg.weights.shift);
    read(j, "lambda_m", cfg.weights.message);
    read(j, "batch_size", cfg.batch_size);
    read(j, "iterations", cfg.iterations);
    read(j, "learning_rate", cfg.learning_rate);
    read(j, "seed", cfg.seed);
    read(j, "noise_warmup", cfg.noise_warmup);
    if (j.contains("architecture")) {
      const json& a = j.at("architecture");
      check_keys(a,
                 {"unet_depth", "unet_base_width", "unet_max_width", "decoder_blocks", "decoder_base_width",
                  "decoder_max_width", "decoder_head"},
                 "architecture");
      read(a, "unet_depth", hp.unet_depth);
      read(a, "unet_base_width", hp.unet_base_width);
      read(a, "unet_max_width", hp.unet_max_width);
      read(a, "decoder_blocks", hp.decoder_blocks);
      read(a, "decoder_base_width", hp.decoder_base_width);
      read(a, "decoder_max_width", hp.decoder_max_width);
      read(a, "decoder_head", hp.decoder_head);
    }
    if (j.contains("distortion")) {
      const json& d = j.at("distortion");
      check_keys(d, {"shift_range", "scale_range", "rotation_range_deg", "noise_std", "blur_variance"}, "distortion");
      DistortionConfig& dc = cfg.distortion;
      read(d, "shift_range", dc.shift_range);
      read_range(d, "scale_range", dc.scale_min, dc.scale_max);
      read_range(d, "rotation_range_deg", dc.rotation_min_deg, dc.rotation_max_deg);
      read(d, "noise_std", dc.noise_std);
      read(d, "blur_variance", dc.blur_variance);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string TrainConfig::to_json() const {
  const Hyperparams& hp = architecture;
  const json j = {{"S", hp.tile_size},
                  {"M", hp.message_bits},
                  {"c", hp.center_half},
                  {"lambda_p", weights.smoothness},
                  {"lambda_c", weights.shift},
                  {"lambda_m", weights.message},
                  {"batch_size", batch_size},
                  {"iterations", iterations},
                  {"learning_rate", learning_rate},
                  {"seed", seed},
                  {"noise_warmup", noise_warmup},
                  {"architecture",
                   {{"unet_depth", hp.unet_depth},
                    {"unet_base_width", hp.unet_base_width},
                    {"unet_max_width", hp.unet_max_width},
                    {"decoder_blocks", hp.decoder_blocks},
                    {"decoder_base_width", hp.decoder_base_width},
                    {"decoder_max_width", hp.decoder_max_width},
                    {"decoder_head", hp.decoder_head}}},
                  {"distortion",
                   {{"shift_range", distortion.shift_range},
                    {"scale_range", {distortion.scale_min, distortion.scale_max}},
                    {"rotation_range_deg", {distortion.rotation_min_deg, distortion.rotation_max_deg}},
                    {"noise_std", distortion.noise_std},
                    {"blur_variance", distortion.blur_variance}}}};
  return j.dump(2);
}

double scheduled_learning_rate(const TrainConfig& cfg, int iteration) {
  double lr = cfg.learning_rate;
  if (iteration >= static_cast<int>(0.60 * cfg.iterations)) lr *= 0.3;
  if (iteration >= static_cast<int>(0.85 * cfg.iterations)) lr *= 0.3;
  return lr;
}

double scheduled_noise_std(const TrainConfig& cfg, int iteration) {
  const double ramp = cfg.noise_warmup * cfg.iterations;
  if (ramp <= 0.0 || iteration >= ramp) return cfg.distortion.noise_std;
  return cfg.distortion.noise_std * iteration / ramp;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "iteration,L,L_p,L_c,L_w,bit_acc,shift_hit_rate\n";
  os << std::setprecision(9);
  for (const auto& r : records) {
    os << r.iteration << ',' << r.loss << ',' << r.smoothness << ',' << r.shift << ',' << r.message << ','
       << r.bit_accuracy << ',' << r.shift_hit_rate << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<uint8_t> random_bits(int m, std::mt19937_64& rng) {
  std::vector<uint8_t> bits(static_cast<size_t>(m));
  for (auto& b : bits) b = static_cast<uint8_t>(rng() >> 63);
  return bits;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainProgress& progress) {
  cfg.validate();
  const Hyperparams& hp = cfg.architecture;
  const int s = hp.tile_size, m = hp.message_bits, n = cfg.batch_size;
  const double inv_n = 1.0 / n;

  TrainResult result{ModelBundle::random(hp, cfg.seed), {}};
  ModelBundle& bundle = result.bundle;
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  nn::Adam adam(bundle.parameters());
  const GrayImage target = make_shift_target(s, hp.center_half);

  Encoder::Cache enc_cache;
  UNet::Cache dc_cache;
  MessageDecoder::Cache dw_cache;

  DistortionConfig distortion = cfg.distortion;
  for (int it = 0; it < cfg.iterations; ++it) {
    adam.zero_grad();
    distortion.noise_std = scheduled_noise_std(cfg, it);

    std::vector<std::vector<uint8_t>> messages;
    for (int b = 0; b < n; ++b) messages.push_back(random_bits(m, rng));
    const nn::Tensor tiles = bundle.encoder().forward(messages_tensor(messages), &enc_cache);

    std::vector<GrayImage> tile_img(n), standardized(n), grad_lp(n);
    std::vector<DistortionResult> distorted(n);
    TrainRecord rec;
    rec.iteration = it;
    for (int b = 0; b < n; ++b) {
      tile_img[b] = tensor_image(tiles, b);
      rec.smoothness += loss_smoothness_grad(tile_img[b], grad_lp[b]) * inv_n;
      distorted[b] = distortion_layer(tile_img[b], distortion, rng);
      standardized[b] = standardize(distorted[b].distorted);
    }

    // Shift decoder on the distorted tiles.
    const nn::Tensor dc_in = to_tensor(standardized);
    const nn::Tensor dc_out = bundle.shift_decoder().forward(dc_in, &dc_cache);
    nn::Tensor dc_grad(1, n, s, s);
    std::vector<ShiftEstimate> est(n);
    std::vector<GrayImage> aligned(n);
    int hits = 0;
    for (int b = 0; b < n; ++b) {
      const GrayImage map = tensor_image(dc_out, b);
      GrayImage g;
      rec.shift += loss_shift_grad(map, target, distorted[b].true_shift, g) * inv_n;
      float* gp = dc_grad.plane(0, b);
      for (size_t i = 0; i < g.px.size(); ++i) gp[i] = static_cast<float>(g.px[i] * cfg.weights.shift * inv_n);
      est[b] = locate_shift(map, hp.center_half);
      if (est[b] == distorted[b].true_shift) ++hits;
      aligned[b] = cyclic_shift(standardized[b], -est[b].dx, -est[b].dy);
    }

    // Message decoder on the realigned tiles; BCE gradient taken on logits.
    const nn::Tensor probs = bundle.message_decoder().forward(to_tensor(aligned), &dw_cache);
    nn::Tensor logit_grad(m, n, 1, 1);
    int correct = 0;
    for (int b = 0; b < n; ++b) {
      std::vector<double> p(static_cast<size_t>(m));
      for (int i = 0; i < m; ++i) p[i] = probs.data()[static_cast<size_t>(i) * n + b];
      std::vector<double> unused;
      rec.message += loss_message_grad(messages[b], p, unused) * inv_n;
      for (int i = 0; i < m; ++i) {
        const uint8_t bit = messages[b][static_cast<size_t>(i)];
        if ((p[i] > 0.5) == (bit != 0)) ++correct;
        logit_grad.data()[static_cast<size_t>(i) * n + b] =
            static_cast<float>((p[i] - bit) / m * cfg.weights.message * inv_n);
      }
    }
    rec.loss = total_loss(rec.smoothness, rec.shift, rec.message, cfg.weights);
    rec.bit_accuracy = static_cast<double>(correct) / (static_cast<double>(m) * n);
    rec.shift_hit_rate = static_cast<double>(hits) / n;
    if (!std::isfinite(rec.loss)) {
      std::ostringstream os;
      os << "training diverged at iteration " << it << ": L=" << rec.loss << " (L_p=" << rec.smoothness
         << ", L_c=" << rec.shift << ", L_w=" << rec.message << ")";
      throw TrainingDiverged(os.str());
    }

    // Backward.
    const nn::Tensor g_aligned = bundle.message_decoder().backward_logits(logit_grad, dw_cache);
    const nn::Tensor g_dc = bundle.shift_decoder().backward(dc_grad, dc_cache);
    nn::Tensor g_tiles(1, n, s, s);
    for (int b = 0; b < n; ++b) {
      GrayImage g_std = cyclic_shift(tensor_image(g_aligned, b), est[b].dx, est[b].dy);
      const GrayImage g2 = tensor_image(g_dc, b);
      for (size_t i = 0; i < g_std.px.size(); ++i) g_std.px[i] += g2.px[i];
      const GrayImage g_dist = standardize_backward(distorted[b].distorted, g_std);
      const GrayImage g_tile = distortion_backward(g_dist, distorted[b].trace);
      float* gp = g_tiles.plane(0, b);
      for (size_t i = 0; i < g_tile.px.size(); ++i) {
        gp[i] = static_cast<float>(g_tile.px[i] + grad_lp[b].px[i] * cfg.weights.smoothness * inv_n);
      }
    }
    bundle.encoder().backward(g_tiles, enc_cache);

    adam.step(scheduled_learning_rate(cfg, it));
    result.log.records.push_back(rec);
    if (progress) progress(rec);
  }
  return result;
}

TileDecoding decode_tile(const GrayImage& tile, const ModelBundle& bundle) {
  TileDecoding d;
  d.shift_map = shift_decoder_forward(tile, bundle);
  d.shift = locate_shift(d.shift_map, bundle.hyper().center_half);
  d.aligned = cyclic_shift(tile, -d.shift.dx, -d.shift.dy);
  d.probs = message_decoder_forward(d.aligned, bundle);
  d.bits.reserve(d.probs.size());
  for (double p : d.probs) d.bits.push_back(p > 0.5 ? 1 : 0);
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation

BerResult evaluate_ber(const TileEncoderFn& encode, const TileDecoderFn& decode, int message_bits,
                       const DistortionConfig& cfg, int n_trials, uint64_t seed) {
  BerResult r;
  r.trials = n_trials;
  if (n_trials <= 0) return r;
  std::mt19937_64 rng(seed);
  long errors = 0;
  for (int t = 0; t < n_trials; ++t) {
    const auto msg = random_bits(message_bits, rng);
    const GrayImage tile = encode(msg);
    const DistortionResult d = distortion_layer(tile, cfg, rng);
    const auto bits = decode(d.distorted);
    if (bits.size() != msg.size()) throw std::runtime_error("evaluate_ber: decoder returned wrong number of bits");
    int e = 0;
    for (size_t i = 0; i < msg.size(); ++i) e += (bits[i] != 0) != (msg[i] != 0);
    errors += e;
    if (e <= 3) ++r.trials_le3;
  }
  r.ber = static_cast<double>(errors) / (static_cast<double>(message_bits) * n_trials);
  return r;
}

BerResult evaluate_ber(const ModelBundle& bundle, const DistortionConfig& cfg, int n_trials, uint64_t seed) {
  return evaluate_ber([&](const std::vector<uint8_t>& msg) { return encoder_forward_bits(msg, bundle); },
                      [&](const GrayImage& img) { return decode_tile(standardize(img), bundle).bits; },
                      bundle.hyper().message_bits, cfg, n_trials, seed);
}

}  // namespace screenmark
