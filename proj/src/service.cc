#include "crskit/service.h"

#include <httplib.h>

#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "crskit/error.h"
#include "crskit/loader.h"

namespace crskit {
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct HistoryEntry {
  Utterance utterance;
  RecList recommendations;
  std::string trace_id;
};

struct Session {
  std::string id;
  std::string pipeline_id;
  bool debug = false;

  std::mutex mu;
  std::vector<HistoryEntry> history;
  // Bumped whenever a generation starts, is stopped or the session is
  // refreshed; a generation only commits if the counter still matches.
  std::uint64_t generation = 0;
  bool in_flight = false;
  std::shared_ptr<CancelToken> cancel;
  Clock::time_point last_active = Clock::now();
};

struct PipelineEntry {
  std::string id;
  std::shared_ptr<const Pipeline> pipeline;
  Json default_kwargs;
};

Json recs_json(const RecList& recs) {
  Json out = Json::array();
  for (const auto& r : recs) {
    out.push_back({{"item_id", r.item_id}, {"name", r.name}, {"score", r.score}});
  }
  return out;
}

Json span_json(const monitor::Span& s) {
  Json j = {{"span_id", s.span_id},       {"trace_id", s.trace_id},
            {"name", s.name},             {"start_ns", s.start_ns},
            {"end_ns", s.end_ns},         {"input_digest", s.input_digest},
            {"output_digest", s.output_digest}};
  j["parent_id"] = s.parent_id ? Json(*s.parent_id) : Json(nullptr);
  return j;
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

std::string sse(std::string_view event, const Json& data) {
  return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  static const char* hex = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 2; ++i) {
    auto v = rng();
    for (int k = 0; k < 16; ++k) id += hex[(v >> (4 * k)) & 0xf];
  }
  return id;
}

}  // namespace

struct ChatService::Impl {
  ServiceOptions opts;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;

  std::vector<PipelineEntry> pipelines;

  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::string> trace_owner;  // trace id -> session id

  monitor::Collector& collector() const {
    return opts.collector ? *opts.collector : monitor::Collector::global();
  }

  const PipelineEntry* find_pipeline(const std::string& id) const {
    for (const auto& p : pipelines) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) return nullptr;
    it->second->last_active = Clock::now();
    return it->second;
  }

  std::size_t sweep(Clock::time_point now) {
    std::lock_guard lock(mu);
    std::size_t dropped = 0;
    for (auto it = sessions.begin(); it != sessions.end();) {
      auto& s = *it->second;
      std::unique_lock slock(s.mu, std::try_to_lock);
      if (slock.owns_lock() && !s.in_flight && now - s.last_active > opts.session_ttl) {
        for (auto t = trace_owner.begin(); t != trace_owner.end();) {
          t = t->second == it->first ? trace_owner.erase(t) : std::next(t);
        }
        slock.unlock();
        it = sessions.erase(it);
        ++dropped;
      } else {
        ++it;
      }
    }
    return dropped;
  }

  void routes() {
    server.Get("/api/pipelines", [this](const httplib::Request&, httplib::Response& res) {
      Json out = Json::array();
      for (const auto& p : pipelines) {
        Json modules = Json::object();
        auto describe = [](const Module& m) {
          return Json{{"name", m.name()}, {"type", m.config().module_type}};
        };
        modules["rec"] = describe(p.pipeline->rec());
        modules["gen"] = describe(p.pipeline->gen());
        if (p.pipeline->proc()) modules["proc"] = describe(*p.pipeline->proc());
        const auto& cfg = p.pipeline->config();
        out.push_back({{"id", p.id},
                       {"name", p.pipeline->name()},
                       {"kind", std::string(to_string(cfg.kind))},
                       {"top_k", cfg.top_k},
                       {"placeholder", cfg.placeholder},
                       {"auto_link", cfg.auto_link},
                       {"modules", modules},
                       {"default_kwargs", p.default_kwargs}});
      }
      send_json(res, 200, out);
    });

    server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      sweep(Clock::now());
      Json body = Json::parse(req.body.empty() ? "{}" : req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        return send_error(res, 400, "BadRequest", "body must be a JSON object");
      }
      if (!body.contains("pipeline_id") || !body["pipeline_id"].is_string()) {
        return send_error(res, 422, "InvalidArgument", "pipeline_id is required");
      }
      auto pid = body["pipeline_id"].get<std::string>();
      auto mode = body.value("mode", Json("info"));
      if (!mode.is_string() || (mode != "info" && mode != "debug")) {
        return send_error(res, 422, "InvalidArgument", "mode must be \"info\" or \"debug\"");
      }
      if (!find_pipeline(pid)) return send_error(res, 404, "NotFound", "unknown pipeline " + pid);
      auto s = std::make_shared<Session>();
      s->id = new_id();
      s->pipeline_id = pid;
      s->debug = mode == "debug";
      {
        std::lock_guard lock(mu);
        sessions[s->id] = s;
      }
      send_json(res, 200, {{"session_id", s->id}, {"pipeline_id", pid}, {"mode", mode}});
    });

    server.Post(R"(/api/sessions/([^/]+)/messages)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  post_message(req.matches[1], req, res);
                });

    server.Post(R"(/api/sessions/([^/]+)/stop)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  auto s = find_session(req.matches[1]);
                  if (!s) return send_error(res, 404, "NotFound", "unknown session");
                  std::lock_guard lock(s->mu);
                  bool stopped = s->in_flight;
                  if (stopped) {
                    s->cancel->cancel();
                    s->in_flight = false;
                    ++s->generation;
                  }
                  send_json(res, 200, {{"stopped", stopped}});
                });

    server.Delete(R"(/api/sessions/([^/]+))",
                  [this](const httplib::Request& req, httplib::Response& res) {
                    auto s = find_session(req.matches[1]);
                    if (!s) return send_error(res, 404, "NotFound", "unknown session");
                    std::lock_guard lock(s->mu);
                    if (s->in_flight) {
                      s->cancel->cancel();
                      s->in_flight = false;
                    }
                    ++s->generation;
                    s->history.clear();
                    send_json(res, 200, session_json(*s));
                  });

    server.Get(R"(/api/sessions/([^/]+)/history)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 auto s = find_session(req.matches[1]);
                 if (!s) return send_error(res, 404, "NotFound", "unknown session");
                 std::lock_guard lock(s->mu);
                 send_json(res, 200, session_json(*s));
                 res.set_header("Content-Disposition",
                                "attachment; filename=\"chat-" + s->id + ".json\"");
               });

    server.Get(R"(/api/traces/([^/]+))", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
      std::string trace_id = req.matches[1];
      auto trace = collector().find(trace_id);
      std::shared_ptr<Session> owner;
      {
        std::lock_guard lock(mu);
        auto it = trace_owner.find(trace_id);
        if (it != trace_owner.end()) {
          auto s = sessions.find(it->second);
          if (s != sessions.end()) owner = s->second;
        }
      }
      if (!trace || !owner) return send_error(res, 404, "NotFound", "unknown trace");
      if (!owner->debug) {
        return send_error(res, 403, "Forbidden", "traces are only available in debug mode");
      }
      Json spans = Json::array();
      for (const auto& s : trace->spans) spans.push_back(span_json(s));
      Json timeline = Json::array();
      for (const auto& row : monitor::assemble_timeline(*trace)) {
        timeline.push_back({{"span_id", row.span_id},
                            {"name", row.name},
                            {"depth", row.depth},
                            {"start_ns", row.start_ns},
                            {"end_ns", row.end_ns}});
      }
      auto graph = monitor::assemble_graph(*trace);
      Json edges = Json::array();
      for (const auto& e : graph.edges) {
        edges.push_back({{"caller", e.caller}, {"callee", e.callee}, {"count", e.count}});
      }
      send_json(res, 200,
                {{"trace_id", trace_id},
                 {"spans", spans},
                 {"timeline", timeline},
                 {"graph", {{"nodes", graph.nodes}, {"edges", edges}}}});
    });

    server.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string msg = "internal error";
          try {
            std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            msg = e.what();
          } catch (...) {
          }
          send_error(res, 500, "Internal", msg);
        });

    if (!opts.static_dir.empty()) server.set_mount_point("/", opts.static_dir);
  }

  Json session_json(const Session& s) const {
    Json messages = Json::array();
    for (const auto& h : s.history) {
      Json m = {{"role", std::string(to_string(h.utterance.role))},
                {"text", render_body(h.utterance)},
                {"recommendations", recs_json(h.recommendations)}};
      if (s.debug && !h.trace_id.empty()) m["trace_id"] = h.trace_id;
      messages.push_back(std::move(m));
    }
    return {{"session_id", s.id},
            {"pipeline_id", s.pipeline_id},
            {"mode", s.debug ? "debug" : "info"},
            {"messages", messages}};
  }

  void post_message(const std::string& sid, const httplib::Request& req,
                    httplib::Response& res) {
    auto s = find_session(sid);
    if (!s) return send_error(res, 404, "NotFound", "unknown session");
    const auto* entry = find_pipeline(s->pipeline_id);
    if (!entry) return send_error(res, 404, "NotFound", "pipeline no longer registered");

    Json body = Json::parse(req.body.empty() ? "{}" : req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return send_error(res, 400, "BadRequest", "body must be a JSON object");
    }
    if (!body.contains("text") || !body["text"].is_string()) {
      return send_error(res, 422, "InvalidArgument", "text is required");
    }
    Json kwargs = entry->default_kwargs.is_object() ? entry->default_kwargs : Json::object();
    if (body.contains("kwargs") && !body["kwargs"].is_null()) {
      if (!body["kwargs"].is_object()) {
        return send_error(res, 422, "InvalidArgument", "kwargs must be an object");
      }
      kwargs.merge_patch(body["kwargs"]);
    }

    Utterance user;
    try {
      user = parse_body(Role::kUser, body["text"].get<std::string>());
      if (user.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        fail(ErrorCode::kInvalidArgument, "message text is empty");
      }
    } catch (const Error& e) {
      return send_error(res, 422, std::string(to_string(e.code())), e.what());
    }

    Dialog dialog;
    std::uint64_t gen = 0;
    std::shared_ptr<CancelToken> cancel;
    {
      std::lock_guard lock(s->mu);
      if (s->in_flight) {
        return send_error(res, 409, "Conflict", "a generation is already in flight");
      }
      s->in_flight = true;
      gen = ++s->generation;
      s->cancel = cancel = std::make_shared<CancelToken>();
      for (const auto& h : s->history) dialog.utterances.push_back(h.utterance);
      dialog.utterances.push_back(user);
    }

    auto pipeline = entry->pipeline;
    auto provider = [this, s, pipeline, dialog, kwargs, user, gen, cancel](
                        std::size_t, httplib::DataSink& sink) {
      auto write = [&](const std::string& data) {
        if (!sink.write(data.data(), data.size())) cancel->cancel();
      };
      CallContext ctx;
      ctx.cancel = cancel;
      ctx.on_chunk = [&](const GenChunk& c) {
        if (!c.text.empty()) write(sse("chunk", {{"text", c.text}}));
      };
      try {
        auto out = pipeline->respond(dialog, kwargs, ctx, collector());
        Json done = {{"text", out.text}, {"recommendations", recs_json(out.recommendations)}};
        bool committed = false;
        {
          std::lock_guard lock(s->mu);
          if (s->generation == gen && !cancel->cancelled()) {
            s->history.push_back({user, {}, {}});
            s->history.push_back(
                {parse_body(Role::kSystem, out.text), out.recommendations, out.trace_id});
            s->in_flight = false;
            committed = true;
          }
          if (s->debug) done["trace_id"] = out.trace_id;
        }
        {
          std::lock_guard lock(mu);
          trace_owner[out.trace_id] = s->id;
        }
        if (committed) {
          write(sse("done", done));
        } else {
          write(sse("stopped", Json::object()));
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kCancelled) {
          write(sse("stopped", Json::object()));
        } else {
          write(sse("error", {{"code", std::string(to_string(e.code()))},
                              {"message", e.what()},
                              {"module", e.module()}}));
        }
      } catch (const std::exception& e) {
        write(sse("error", {{"code", "Internal"}, {"message", e.what()}, {"module", ""}}));
      }
      {
        std::lock_guard lock(s->mu);
        if (s->generation == gen) s->in_flight = false;
      }
      sink.done();
      return true;
    };
    auto release = [s, gen](bool) {
      std::lock_guard lock(s->mu);
      if (s->generation == gen) s->in_flight = false;
    };
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", provider, release);
  }
};

ChatService::ChatService(ServiceOptions opts) : impl_(std::make_unique<Impl>()) {
  impl_->opts = std::move(opts);
  int threads = std::max(impl_->opts.threads, 2);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->routes();
}

ChatService::~ChatService() { stop(); }

void ChatService::add_pipeline(std::string id, std::shared_ptr<const Pipeline> pipeline,
                               Json default_kwargs) {
  if (!pipeline) fail(ErrorCode::kInvalidConfig, "pipeline " + id + " is null");
  if (impl_->find_pipeline(id)) fail(ErrorCode::kInvalidConfig, "duplicate pipeline id " + id);
  impl_->pipelines.push_back({std::move(id), std::move(pipeline), std::move(default_kwargs)});
}

int ChatService::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) fail(ErrorCode::kIoError, "service cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void ChatService::run(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) {
    fail(ErrorCode::kIoError, "service cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ChatService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string ChatService::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t ChatService::session_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

std::size_t ChatService::sweep_expired(Clock::time_point now) { return impl_->sweep(now); }

ServeConfig ServeConfig::from_json(const Json& j, const fs::path& base_dir) {
  ServeConfig c;
  auto resolve = [&](const std::string& p) {
    if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
    return (base_dir / p).string();
  };
  try {
    c.hub_url = j.value("hub_url", std::string());
    c.session_ttl_s = j.value("session_ttl_s", c.session_ttl_s);
    c.static_dir = resolve(j.value("static_dir", std::string()));
    c.trace_export = resolve(j.value("trace_export", std::string()));
    for (const auto& p : j.at("pipelines")) {
      PipelineSpec spec;
      spec.id = p.at("id").get<std::string>();
      spec.ref = p.at("ref").get<std::string>();
      spec.kwargs = p.value("kwargs", Json::object());
      // Local paths win over hub names when the directory exists.
      auto local = resolve(spec.ref);
      if (fs::is_directory(local)) spec.ref = local;
      c.pipelines.push_back(std::move(spec));
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("serve config: ") + e.what());
  }
  if (c.session_ttl_s <= 0) fail(ErrorCode::kInvalidConfig, "session_ttl_s must be positive");
  return c;
}

ServeConfig ServeConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kInvalidConfig, path.string() + " is not valid JSON");
  return from_json(j, fs::absolute(path).parent_path());
}

void load_pipelines(ChatService& service, const ServeConfig& cfg, bool offline) {
  LoadOptions opts{cfg.hub_url, offline};
  for (const auto& spec : cfg.pipelines) {
    service.add_pipeline(spec.id, load_pipeline(spec.ref, opts), spec.kwargs);
  }
}

}  // namespace crskit
