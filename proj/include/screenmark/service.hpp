#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "screenmark/extraction.hpp"
#include "screenmark/models.hpp"

namespace screenmark {

struct ServiceOptions {
  size_t max_upload_bytes = 20u << 20;
  std::string cors_origin = "*";
  /// Defaults that /extract overrides field by field.
  ExtractionParams extraction;
};

/// Local HTTP API for the analyst workbench.
///
///   POST /sessions[?rectified=1]        photo bytes -> {session_id, width, height}
///   POST /sessions/{id}/rectify         {corners, out_w?, out_h?}
///   POST /sessions/{id}/extract         ExtractionParams overrides -> report
///   GET  /sessions/{id}/artifacts/{name}
///   GET  /sessions/{id}/history
///
/// Sessions live in memory. Requests on one session are serialized; the
/// model is shared read-only.
class Service {
 public:
  Service(std::shared_ptr<const ModelBundle> bundle, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to host:port; port 0 picks an ephemeral port. Returns the bound
  /// port. Throws std::runtime_error when binding fails.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// bind() plus listen() on a background thread.
  int start(const std::string& host, int port);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// 64-bit FNV-1a of `bytes` as 16 hex digits; used for artifact identity.
std::string content_hash(const std::string& bytes);

}  // namespace screenmark
