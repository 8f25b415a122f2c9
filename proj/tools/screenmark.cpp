// screenmark: train, embed, extract, evaluate and serve.
//
// Exit codes: 0 success, 2 extraction ran but BCH decoding failed, 1 error.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "screenmark/capture_sim.hpp"
#include "screenmark/codec.hpp"
#include "screenmark/extraction.hpp"
#include "screenmark/image_io.hpp"
#include "screenmark/overlay.hpp"
#include "screenmark/service.hpp"
#include "screenmark/training.hpp"

namespace fs = std::filesystem;
using namespace screenmark;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitDecodeFailure = 2;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text << (text.ends_with('\n') ? "" : "\n");
  } else {
    write_file(out, text);
  }
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    size_t a = 0, b = 0;
    const int w = std::stoi(s.substr(0, x), &a), h = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1 || w <= 0 || h <= 0) throw std::invalid_argument("");
    return {w, h};
  } catch (const std::exception&) {
    throw std::invalid_argument("size must look like WIDTHxHEIGHT, got '" + s + "'");
  }
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path r = p;
  r.replace_extension();
  return r.string() + suffix;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out = "model.smb", log;
  std::optional<uint64_t> seed;
  std::optional<int> iterations;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = TrainConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.iterations) cfg.iterations = *a.iterations;
  cfg.validate();
  const int every = std::max(1, cfg.iterations / 50);
  TrainResult r = train(cfg, [&](const TrainRecord& rec) {
    if (a.quiet || (rec.iteration % every != 0 && rec.iteration != cfg.iterations - 1)) return;
    std::fprintf(stderr, "iter %6d  L %.4f  Lp %.4f  Lc %.4f  Lw %.4f  bit_acc %.3f  shift_hit %.2f\n", rec.iteration,
                 rec.loss, rec.smoothness, rec.shift, rec.message, rec.bit_accuracy, rec.shift_hit_rate);
  });
  save_bundle(r.bundle, a.out);
  write_file(a.log.empty() ? sibling(a.out, "_log.csv") : fs::path(a.log), r.log.to_csv());
  return kExitOk;
}

struct EmbedArgs {
  std::string model, payload, input, out = "marked.png";
  double alpha = 8.0 / 255.0;
  std::string phase;
};

GrayImage payload_tile(const ModelBundle& bundle, const std::string& hex) {
  const codec::Payload payload = codec::Payload::from_hex(hex);
  if (bundle.hyper().message_bits != codec::kCodewordBits) {
    throw std::invalid_argument("model carries " + std::to_string(bundle.hyper().message_bits) + "-bit messages, need " +
                                std::to_string(codec::kCodewordBits));
  }
  return encoder_forward(codec::bch_encode(payload), bundle);
}

int cmd_embed(const EmbedArgs& a) {
  if (!(a.alpha >= 0 && a.alpha <= 1)) throw std::invalid_argument("alpha must be in [0, 1]");
  codec::Payload::from_hex(a.payload);  // reject bad hex before touching files
  const ModelBundle bundle = load_bundle(a.model);
  const RgbImage screen = read_image(a.input);
  GrayImage tile = payload_tile(bundle, a.payload);
  if (!a.phase.empty()) {
    const auto [dx, dy] = parse_size(a.phase);
    tile = cyclic_shift(tile, dx, dy);
  }
  const RgbImage marked = composite(screen, tile_overlay(tile, screen.width, screen.height), a.alpha);
  write_png(a.out, marked);
  std::cout << quality_metrics(screen, marked).to_json() << "\n";
  return kExitOk;
}

struct ExtractArgs {
  std::string model, photo, corners, config, out, dump;
  std::optional<int> median_window, period_min, period_max, rect_w, rect_h;
  std::optional<double> threshold, sigma;
};

int cmd_extract(const ExtractArgs& a) {
  std::optional<QuadCorners> corners;
  if (!a.corners.empty()) {
    corners = QuadCorners::parse(a.corners);
    corners->validate();
  }
  ExtractionParams params;
  if (!a.config.empty()) params = ExtractionParams::from_json(read_file(a.config));
  if (a.median_window) params.median_window = *a.median_window;
  if (a.threshold) params.threshold = *a.threshold;
  if (a.period_min) params.period_min = *a.period_min;
  if (a.period_max) params.period_max = *a.period_max;
  if (a.sigma) params.gauss_sigma = *a.sigma;
  if (a.rect_w) params.rect_width = *a.rect_w;
  if (a.rect_h) params.rect_height = *a.rect_h;
  params.validate();
  const ModelBundle bundle = load_bundle(a.model);
  const RgbImage photo = read_image(a.photo);
  const ExtractionReport rep = extract_watermark(photo, corners, params, bundle);
  emit(rep.to_json(true), a.out);
  if (!a.dump.empty()) dump_intermediates(rep, a.dump);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return rep.success() ? kExitOk : kExitDecodeFailure;
}

struct EvalArgs {
  std::string model, config, out;
  std::optional<uint64_t> seed;
  std::optional<int> trials;
};

int cmd_eval(const EvalArgs& a) {
  EvalMatrixConfig cfg = EvalMatrixConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.trials) cfg.trials = *a.trials;
  const ModelBundle bundle = load_bundle(a.model);
  const auto rows = run_eval_matrix(bundle, cfg);
  const std::string csv = eval_rows_csv(rows);
  if (a.out.empty() || a.out == "-") {
    std::cout << csv;
  } else {
    write_file(a.out, csv);
    write_file(sibling(a.out, ".json"), eval_rows_json(rows));
  }
  return kExitOk;
}

struct CaptureArgs {
  std::string input, config, out = "photo.png";
  std::optional<uint64_t> seed;
};

int cmd_capture_sim(const CaptureArgs& a) {
  CaptureScenario sc = a.config.empty() ? CaptureScenario{} : CaptureScenario::from_json(read_file(a.config));
  if (a.seed) sc.seed = *a.seed;
  const RgbImage screen = read_image(a.input);
  const CaptureResult r = simulate_capture(screen, sc);
  write_png(a.out, r.photo);
  nlohmann::json j = {{"photo", a.out},
                      {"width", r.photo.width},
                      {"height", r.photo.height},
                      {"corners", r.corners.to_string()},
                      {"jpeg_bytes", r.jpeg_bytes}};
  std::cout << j.dump() << "\n";
  return kExitOk;
}

struct OverlayArgs {
  std::string model, payload, size = "1920x1080", out = "overlay.png";
};

int cmd_gen_overlay(const OverlayArgs& a) {
  const auto [w, h] = parse_size(a.size);
  codec::Payload::from_hex(a.payload);
  const ModelBundle bundle = load_bundle(a.model);
  write_png(a.out, tile_overlay(payload_tile(bundle, a.payload), w, h));
  return kExitOk;
}

struct ServeArgs {
  std::string model, host = "127.0.0.1", config, cors = "*";
  int port = 8080;
  double max_upload_mb = 20;
};

Service* g_service = nullptr;

int cmd_serve(const ServeArgs& a) {
  ServiceOptions opts;
  opts.max_upload_bytes = static_cast<size_t>(a.max_upload_mb * 1024 * 1024);
  opts.cors_origin = a.cors;
  if (!a.config.empty()) opts.extraction = ExtractionParams::from_json(read_file(a.config));
  Service service(std::make_shared<const ModelBundle>(load_bundle(a.model)), opts);
  const int port = service.bind(a.host, a.port);
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  g_service = &service;
  std::signal(SIGINT, [](int) { g_service->stop(); });
  std::signal(SIGTERM, [](int) { g_service->stop(); });
  service.listen();
  g_service = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"screenmark: invisible screen watermarks that survive photographs"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  TrainArgs train_a;
  auto* train_c = app.add_subcommand("train", "train E, D_c and D_w; writes a model archive and a CSV log");
  train_c->add_option("--config", train_a.config, "training config JSON")->required();
  train_c->add_option("--out", train_a.out, "model archive path");
  train_c->add_option("--log", train_a.log, "training log CSV (default: <out>_log.csv)");
  train_c->add_option("--seed", train_a.seed, "override the config seed");
  train_c->add_option("--iterations", train_a.iterations, "override the iteration count");
  train_c->add_flag("--quiet", train_a.quiet, "no progress output");

  EmbedArgs embed_a;
  auto* embed_c = app.add_subcommand("embed", "embed a payload into a screen image");
  embed_c->add_option("input", embed_a.input, "screen image (PNG or JPEG)")->required();
  embed_c->add_option("--model", embed_a.model, "model archive")->required();
  embed_c->add_option("--payload", embed_a.payload, "32-bit payload, 8 hex digits")->required();
  embed_c->add_option("--alpha", embed_a.alpha, "overlay opacity in [0, 1]");
  embed_c->add_option("--phase", embed_a.phase, "cyclic tile offset DXxDY");
  embed_c->add_option("--out", embed_a.out, "marked PNG");

  ExtractArgs ex_a;
  auto* ex_c = app.add_subcommand("extract", "recover the payload from a photograph");
  ex_c->add_option("photo", ex_a.photo, "photograph (PNG or JPEG)")->required();
  ex_c->add_option("--model", ex_a.model, "model archive")->required();
  ex_c->add_option("--corners", ex_a.corners, "screen corners x1,y1;x2,y2;x3,y3;x4,y4 (TL,TR,BR,BL)");
  ex_c->add_option("--config", ex_a.config, "extraction parameters JSON");
  ex_c->add_option("--out", ex_a.out, "report JSON (default: stdout)");
  ex_c->add_option("--dump-intermediates", ex_a.dump, "directory for intermediate images");
  ex_c->add_option("--median-window", ex_a.median_window, "median window a (odd)");
  ex_c->add_option("--threshold", ex_a.threshold, "background threshold t in [0, 1)");
  ex_c->add_option("--period-min", ex_a.period_min, "smallest period p0");
  ex_c->add_option("--period-max", ex_a.period_max, "largest period p1");
  ex_c->add_option("--sigma", ex_a.sigma, "Gaussian sigma of the period score");
  ex_c->add_option("--rect-width", ex_a.rect_w, "rectified width");
  ex_c->add_option("--rect-height", ex_a.rect_h, "rectified height");

  EvalArgs eval_a;
  auto* eval_c = app.add_subcommand("eval", "run a simulated capture matrix");
  eval_c->add_option("--model", eval_a.model, "model archive")->required();
  eval_c->add_option("--config", eval_a.config, "evaluation matrix JSON")->required();
  eval_c->add_option("--out", eval_a.out, "CSV path; a .json table is written beside it (default: CSV to stdout)");
  eval_c->add_option("--seed", eval_a.seed, "override the matrix seed");
  eval_c->add_option("--trials", eval_a.trials, "override trials per scenario");

  CaptureArgs cap_a;
  auto* cap_c = app.add_subcommand("capture-sim", "photograph a screen image through a simulated camera");
  cap_c->add_option("input", cap_a.input, "screen image")->required();
  cap_c->add_option("--config", cap_a.config, "capture scenario JSON (default: identity)");
  cap_c->add_option("--out", cap_a.out, "photo PNG");
  cap_c->add_option("--seed", cap_a.seed, "override the scenario seed");

  OverlayArgs ov_a;
  auto* ov_c = app.add_subcommand("gen-overlay", "render the tiled watermark overlay");
  ov_c->add_option("--model", ov_a.model, "model archive")->required();
  ov_c->add_option("--payload", ov_a.payload, "32-bit payload, 8 hex digits")->required();
  ov_c->add_option("--size", ov_a.size, "overlay size WIDTHxHEIGHT");
  ov_c->add_option("--out", ov_a.out, "overlay PNG");

  ServeArgs srv_a;
  auto* srv_c = app.add_subcommand("serve", "HTTP API for the workbench");
  srv_c->add_option("--model", srv_a.model, "model archive")->required();
  srv_c->add_option("--port", srv_a.port, "TCP port, 0 for an ephemeral one");
  srv_c->add_option("--host", srv_a.host, "bind address");
  srv_c->add_option("--config", srv_a.config, "default extraction parameters JSON");
  srv_c->add_option("--cors-origin", srv_a.cors, "Access-Control-Allow-Origin value");
  srv_c->add_option("--max-upload-mb", srv_a.max_upload_mb, "upload size limit in MiB");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*train_c) return cmd_train(train_a);
    if (*embed_c) return cmd_embed(embed_a);
    if (*ex_c) return cmd_extract(ex_a);
    if (*eval_c) return cmd_eval(eval_a);
    if (*cap_c) return cmd_capture_sim(cap_a);
    if (*ov_c) return cmd_gen_overlay(ov_a);
    if (*srv_c) return cmd_serve(srv_a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
