#include "screenmark/service.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "screenmark/image_io.hpp"

namespace screenmark {

using nlohmann::json;

std::string content_hash(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

constexpr int kThumbnailSide = 256;

struct Attempt {
  json params;
  std::string report_id;
  std::shared_ptr<const ExtractionReport> report;
};

struct Session {
  std::mutex mu;
  RgbImage photo;
  bool pre_rectified = false;
  std::optional<QuadCorners> corners;
  int rect_w = 0, rect_h = 0;
  std::string rectified_png, thumbnail_png, rectified_hash;
  std::vector<Attempt> history;
  std::map<std::string, std::shared_ptr<const ExtractionReport>> reports;
};

// Box-filtered downscale so the longer side is at most kThumbnailSide.
RgbImage thumbnail(const RgbImage& img) {
  const int longer = std::max(img.width, img.height);
  if (longer <= kThumbnailSide) return img;
  const double f = static_cast<double>(longer) / kThumbnailSide;
  const int tw = std::max(1, static_cast<int>(img.width / f)), th = std::max(1, static_cast<int>(img.height / f));
  RgbImage out(tw, th);
  for (int y = 0; y < th; ++y) {
    const int y0 = y * img.height / th, y1 = std::max(y0 + 1, (y + 1) * img.height / th);
    for (int x = 0; x < tw; ++x) {
      const int x0 = x * img.width / tw, x1 = std::max(x0 + 1, (x + 1) * img.width / tw);
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) s += img.at(xx, yy, c);
        out.at(x, y, c) = static_cast<uint8_t>(std::lround(s / ((y1 - y0) * (x1 - x0))));
      }
    }
  }
  return out;
}

QuadCorners corners_from(const json& j) {
  if (j.is_string()) return QuadCorners::parse(j.get<std::string>());
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("corners must be a string or an array of four points");
  QuadCorners q;
  for (size_t i = 0; i < 4; ++i) {
    const json& p = j[i];
    if (p.is_array() && p.size() == 2) {
      q.pts[i] = {p[0].get<double>(), p[1].get<double>()};
    } else if (p.is_object()) {
      q.pts[i] = {p.at("x").get<double>(), p.at("y").get<double>()};
    } else {
      throw std::invalid_argument("each corner must be [x, y] or {\"x\": .., \"y\": ..}");
    }
  }
  return q;
}

std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const ModelBundle> bundle;
  ServiceOptions options;
  httplib::Server server;
  std::shared_mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::thread thread;
  int bound_port = -1;

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(sessions_mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  void routes();
  void create_session(const httplib::Request& req, httplib::Response& res);
  void rectify(Session& s, const std::string& id, const httplib::Request& req, httplib::Response& res);
  void extract(Session& s, const std::string& id, const httplib::Request& req, httplib::Response& res);
  void artifact(Session& s, const std::string& name, httplib::Response& res);
  void history(Session& s, const std::string& id, httplib::Response& res);
};

void Service::Impl::routes() {
  server.set_payload_max_length(options.max_upload_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });

  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create_session(req, res); });

  // Per-session routes share lookup and serialization.
  auto with_session = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      auto s = find(id);
      if (!s) return send_error(res, 404, "unknown session '" + id + "'");
      std::lock_guard lock(s->mu);
      handler(*s, id, req, res);
    };
  };
  server.Post(R"(/sessions/([^/]+)/rectify)", with_session([this](Session& s, const std::string& id, const httplib::Request& req,
                                                                 httplib::Response& res) { rectify(s, id, req, res); }));
  server.Post(R"(/sessions/([^/]+)/extract)", with_session([this](Session& s, const std::string& id, const httplib::Request& req,
                                                                 httplib::Response& res) { extract(s, id, req, res); }));
  server.Get(R"(/sessions/([^/]+)/artifacts/(.+))",
             with_session([this](Session& s, const std::string&, const httplib::Request& req, httplib::Response& res) {
               artifact(s, req.matches[2], res);
             }));
  server.Get(R"(/sessions/([^/]+)/history)",
             with_session([this](Session& s, const std::string& id, const httplib::Request&, httplib::Response& res) {
               history(s, id, res);
             }));
}

void Service::Impl::create_session(const httplib::Request& req, httplib::Response& res) {
  if (req.body.size() > options.max_upload_bytes) return send_error(res, 413, "upload exceeds the size limit");
  if (sniff_format(req.body) == ImageFormat::unknown) return send_error(res, 415, "body is neither PNG nor JPEG");
  auto s = std::make_shared<Session>();
  try {
    s->photo = decode_image(req.body);
  } catch (const ImageIoError& e) {
    return send_error(res, 415, std::string("cannot decode image: ") + e.what());
  }
  const std::string flag = req.get_param_value("rectified");
  s->pre_rectified = flag == "1" || flag == "true";
  std::string id;
  {
    std::unique_lock lock(sessions_mu);
    do id = random_id();
    while (sessions.count(id));
    sessions[id] = s;
  }
  send_json(res, 201, {{"session_id", id}, {"width", s->photo.width}, {"height", s->photo.height}});
}

void Service::Impl::rectify(Session& s, const std::string& id, const httplib::Request& req, httplib::Response& res) {
  QuadCorners q;
  int out_w = 0, out_h = 0;
  try {
    const json body = json::parse(req.body);
    q = corners_from(body.at("corners"));
    if (body.contains("out_w") && !body.at("out_w").is_null()) out_w = body.at("out_w").get<int>();
    if (body.contains("out_h") && !body.at("out_h").is_null()) out_h = body.at("out_h").get<int>();
  } catch (const std::exception& e) {
    return send_error(res, 422, std::string("invalid rectify request: ") + e.what());
  }
  try {
    q.validate();
    if (out_w < 0 || out_h < 0) throw std::invalid_argument("out_w and out_h must be positive");
    std::tie(out_w, out_h) = rectified_size(q, out_w, out_h);
    if (out_w < 2 || out_h < 2 || static_cast<size_t>(out_w) * out_h > 100'000'000) {
      throw std::invalid_argument("rectified size out of range");
    }
  } catch (const std::invalid_argument& e) {
    return send_error(res, 422, e.what());
  }
  const bool full = q == QuadCorners::full_frame(s.photo.width, s.photo.height) && out_w == s.photo.width &&
                    out_h == s.photo.height;
  const RgbImage rect = full ? s.photo : warp_perspective(s.photo, q, out_w, out_h);
  s.corners = q;
  s.rect_w = out_w;
  s.rect_h = out_h;
  s.rectified_png = encode_png(rect);
  s.thumbnail_png = encode_png(thumbnail(rect));
  s.rectified_hash = content_hash(s.rectified_png);
  const std::string base = "/sessions/" + id + "/artifacts/";
  send_json(res, 200,
            {{"rectified", base + "rectified.png"},
             {"thumbnail", base + "thumbnail.png"},
             {"hash", s.rectified_hash},
             {"width", out_w},
             {"height", out_h},
             {"corners", q.to_string()}});
}

void Service::Impl::extract(Session& s, const std::string& id, const httplib::Request& req, httplib::Response& res) {
  if (!s.corners && !s.pre_rectified) {
    return send_error(res, 409, "no rectified image: call /rectify first or upload with ?rectified=1");
  }
  ExtractionParams params;
  try {
    params = ExtractionParams::from_json(req.body.empty() ? "{}" : req.body, options.extraction);
    if (s.corners) {
      params.rect_width = s.rect_w;
      params.rect_height = s.rect_h;
    }
    params.validate();
  } catch (const std::exception& e) {
    return send_error(res, 422, e.what());
  }
  std::shared_ptr<ExtractionReport> report;
  try {
    report = std::make_shared<ExtractionReport>(extract_watermark(s.photo, s.corners, params, *bundle));
  } catch (const std::invalid_argument& e) {
    return send_error(res, 422, e.what());  // e.g. a period range the image cannot hold
  }
  const std::string report_json = report->to_json(false);
  const std::string report_id = content_hash(report_json);
  s.reports.emplace(report_id, report);
  s.history.push_back({json::parse(params.to_json()), report_id, report});

  // Artifact URLs are content-addressed so identical requests produce
  // identical responses.
  json body = json::parse(report_json);
  const std::string base = "/sessions/" + id + "/artifacts/" + report_id + "/";
  json urls = json::object();
  for (const char* name : {"rectified.png", "i_b.png", "i_w_raw.png", "shift_map.png", "i_w_aligned.png", "score_curve.json"}) {
    urls[name] = base + name;
  }
  body["report_id"] = report_id;
  body["artifacts"] = urls;
  send_json(res, 200, body);
}

void Service::Impl::artifact(Session& s, const std::string& name, httplib::Response& res) {
  if (name == "rectified.png" && !s.rectified_png.empty()) return res.set_content(s.rectified_png, "image/png");
  if (name == "thumbnail.png" && !s.thumbnail_png.empty()) return res.set_content(s.thumbnail_png, "image/png");

  std::shared_ptr<const ExtractionReport> report;
  std::string file = name;
  if (const auto slash = name.find('/'); slash != std::string::npos) {
    auto it = s.reports.find(name.substr(0, slash));
    if (it != s.reports.end()) report = it->second;
    file = name.substr(slash + 1);
  } else if (!s.history.empty()) {
    report = s.history.back().report;
  }
  if (!report) return send_error(res, 404, "unknown artifact '" + name + "'");
  if (file == "score_curve.json") {
    json curve = json::array();
    const PeriodSearch& ps = report->period;
    for (size_t i = 0; i < ps.curve.size(); ++i)
      curve.push_back({{"p", ps.curve[i].first}, {"score", ps.curve[i].second}, {"signal", ps.signal[i]}});
    return send_json(res, 200, curve);
  }
  if (auto png = intermediate_png(*report, file)) return res.set_content(*png, "image/png");
  send_error(res, 404, "unknown artifact '" + name + "'");
}

void Service::Impl::history(Session& s, const std::string& id, httplib::Response& res) {
  json attempts = json::array();
  for (size_t i = 0; i < s.history.size(); ++i) {
    const Attempt& a = s.history[i];
    json entry = {{"index", i},
                  {"params", a.params},
                  {"report_id", a.report_id},
                  {"period", a.report->period.period},
                  {"low_confidence", a.report->period.low_confidence},
                  {"warnings", a.report->warnings}};
    if (a.report->bch) {
      entry["bch"] = {{"status", "ok"}, {"payload", a.report->bch->payload.hex()}, {"corrections", a.report->bch->corrections}};
    } else {
      entry["bch"] = {{"status", "failure"}};
    }
    attempts.push_back(entry);
  }
  json body = {{"session_id", id},
               {"width", s.photo.width},
               {"height", s.photo.height},
               {"pre_rectified", s.pre_rectified},
               {"attempts", attempts}};
  if (s.corners) {
    body["rectified"] = {{"corners", s.corners->to_string()}, {"width", s.rect_w}, {"height", s.rect_h}, {"hash", s.rectified_hash}};
  } else {
    body["rectified"] = nullptr;
  }
  send_json(res, 200, body);
}

Service::Service(std::shared_ptr<const ModelBundle> bundle, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  if (!bundle) throw std::invalid_argument("Service: model bundle is required");
  options.extraction.validate();
  impl_->bundle = std::move(bundle);
  impl_->options = std::move(options);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port < 0 || port > 65535) throw std::invalid_argument("port must be in 0..65535");
  const int p = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (p < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->bound_port = p;
  return p;
}

void Service::listen() {
  if (impl_->bound_port < 0) throw std::logic_error("Service::listen before bind");
  impl_->server.listen_after_bind();
}

int Service::start(const std::string& host, int port) {
  const int p = bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return p;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Service::port() const { return impl_->bound_port; }

}  // namespace screenmark
