#pragma once

// Minimal artifact hub: a directory served over HTTP.
//   GET {prefix}/{name}/{relpath}   public
//   PUT {prefix}/{name}/{relpath}   requires "Authorization: Bearer <token>"
// Missing token -> 401, wrong token -> 403.

#include <filesystem>
#include <memory>
#include <string>

namespace crskit {

class HubServer {
 public:
  HubServer(std::filesystem::path root, std::string token);
  ~HubServer();

  HubServer(const HubServer&) = delete;
  HubServer& operator=(const HubServer&) = delete;

  // Binds host:port (port 0 picks a free one) and serves on a background
  // thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  std::string url() const;  // "http://127.0.0.1:<port>"
  std::size_t put_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace crskit
