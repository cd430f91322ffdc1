#pragma once

// HTTP front end for AnnotationStore. Every /api route needs an
// "Authorization: Bearer <token>" header naming a configured annotator.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "asrimpact/annotation/store.hpp"

namespace asrimpact::annotation {

struct ServerOptions {
  // token -> annotator id
  std::map<std::string, std::string> tokens;
  // Served at "/" when set.
  std::optional<std::filesystem::path> static_dir;
};

class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServerOptions options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  // Blocks until the server accepts connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status(ErrorKind kind);

}  // namespace asrimpact::annotation
