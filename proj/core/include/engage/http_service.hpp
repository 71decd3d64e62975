#pragma once

#include <memory>
#include <string>

#include "engage/service.hpp"

namespace engage {

/// HTTP/JSON front end over a SessionManager.
class HttpService {
 public:
  explicit HttpService(SessionManager& manager);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until the server stops.
  void wait();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace engage
