#include "crskit/hub_server.h"

#include <httplib.h>

#include <atomic>
#include <thread>

#include "crskit/artifact.h"
#include "crskit/error.h"

namespace crskit {
namespace fs = std::filesystem;

struct HubServer::Impl {
  fs::path root;
  std::string token;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::size_t> puts{0};

  // "/name/rel/path" -> (name, rel/path) when both parts are safe.
  bool split(const std::string& path, std::string& name, std::string& rel) const {
    if (path.size() < 2 || path[0] != '/') return false;
    auto slash = path.find('/', 1);
    if (slash == std::string::npos) return false;
    name = path.substr(1, slash - 1);
    rel = path.substr(slash + 1);
    return is_valid_artifact_name(name) && is_safe_relative_path(rel);
  }

  void routes() {
    server.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      std::string name, rel;
      if (!split(req.path, name, rel)) {
        res.status = 400;
        return;
      }
      auto file = root / name / rel;
      if (!fs::is_regular_file(file)) {
        res.status = 404;
        return;
      }
      res.set_content(read_file(file), "application/octet-stream");
    });
    server.Put(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      auto auth = req.get_header_value("Authorization");
      if (auth.empty()) {
        res.status = 401;
        return;
      }
      if (auth != "Bearer " + token) {
        res.status = 403;
        return;
      }
      std::string name, rel;
      if (!split(req.path, name, rel)) {
        res.status = 400;
        return;
      }
      try {
        write_file(root / name / rel, req.body);
      } catch (const Error& e) {
        res.status = 500;
        res.set_content(e.what(), "text/plain");
        return;
      }
      ++puts;
      res.status = 201;
    });
  }
};

HubServer::HubServer(fs::path root, std::string token) : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  impl_->token = std::move(token);
  impl_->routes();
}

HubServer::~HubServer() { stop(); }

int HubServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) fail(ErrorCode::kIoError, "hub cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HubServer::run(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) {
    fail(ErrorCode::kIoError, "hub cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HubServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string HubServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t HubServer::put_count() const { return impl_->puts.load(); }

}  // namespace crskit
