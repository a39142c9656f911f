#pragma once

// HTTP chat service.
//
//   GET    /api/pipelines
//   POST   /api/sessions                      {pipeline_id, mode: "info"|"debug"}
//   POST   /api/sessions/{sid}/messages       {text, kwargs} -> event stream
//   POST   /api/sessions/{sid}/stop
//   DELETE /api/sessions/{sid}                 refresh: same id, empty history
//   GET    /api/sessions/{sid}/history        attachment
//   GET    /api/traces/{trace_id}             debug sessions only
//
// Message streams carry `event: chunk` (data {"text"}) events followed by one
// of `event: done` (data {text, recommendations, trace_id in debug mode}),
// `event: stopped` or `event: error` (data {code, message, module}).

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "crskit/module.h"
#include "crskit/monitor.h"
#include "crskit/pipeline.h"

namespace crskit {

struct ServiceOptions {
  std::chrono::seconds session_ttl{3600};
  std::string static_dir;  // served at "/" when non-empty
  int threads = 32;
  monitor::Collector* collector = nullptr;  // nullptr: the global collector
};

class ChatService {
 public:
  explicit ChatService(ServiceOptions opts = {});
  ~ChatService();

  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  // Register before start(). Ids must be unique (kInvalidConfig).
  void add_pipeline(std::string id, std::shared_ptr<const Pipeline> pipeline,
                    Json default_kwargs = Json::object());

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  std::string url() const;
  std::size_t session_count() const;
  // Drops sessions idle for longer than the TTL as of `now`.
  std::size_t sweep_expired(std::chrono::steady_clock::time_point now);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct PipelineSpec {
  std::string id;
  std::string ref;  // local artifact directory or hub artifact name
  Json kwargs = Json::object();
};

// Config file for `crskit serve`:
//   {"hub_url": "...", "pipelines": [{"id", "ref", "kwargs"}],
//    "session_ttl_s": 3600, "static_dir": "...", "trace_export": "..."}
// Relative local refs and paths resolve against the file's directory.
struct ServeConfig {
  std::string hub_url;
  std::vector<PipelineSpec> pipelines;
  int session_ttl_s = 3600;
  std::string static_dir;
  std::string trace_export;

  static ServeConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static ServeConfig from_file(const std::filesystem::path& path);
};

// Loads every configured pipeline into `service`.
void load_pipelines(ChatService& service, const ServeConfig& cfg, bool offline);

}  // namespace crskit
