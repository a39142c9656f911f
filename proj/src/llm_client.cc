#include "crskit/llm_client.h"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "crskit/error.h"
#include "crskit/http_util.h"

namespace crskit {
namespace {

// Sleeps in short slices so a cancellation is noticed promptly.
void backoff(int ms, const CallContext& ctx) {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

bool is_success(int status) { return status >= 200 && status < 300; }

}  // namespace

void LlmEndpointConfig::validate() const {
  if (base_url.empty()) fail(ErrorCode::kInvalidConfig, "base_url is empty");
  if (timeout_ms <= 0) fail(ErrorCode::kInvalidConfig, "timeout_ms must be positive");
  if (max_retries < 0) fail(ErrorCode::kInvalidConfig, "max_retries must be non-negative");
  if (api_key_env.empty()) fail(ErrorCode::kInvalidConfig, "api_key_env is empty");
}

Json LlmEndpointConfig::to_json() const {
  return Json{{"base_url", base_url},       {"model", model},
              {"api_key_env", api_key_env}, {"timeout_ms", timeout_ms},
              {"max_retries", max_retries}, {"temperature", temperature},
              {"retry_backoff_ms", retry_backoff_ms}};
}

LlmEndpointConfig LlmEndpointConfig::from_json(const Json& j) {
  LlmEndpointConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.temperature = j.value("temperature", c.temperature);
    c.retry_backoff_ms = j.value("retry_backoff_ms", c.retry_backoff_ms);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("endpoint config: ") + e.what());
  }
  c.validate();
  return c;
}

void SseLineParser::feed(std::string_view bytes) {
  buffer_.append(bytes);
  std::size_t start = 0;
  while (true) {
    auto nl = buffer_.find('\n', start);
    if (nl == std::string::npos) break;
    line(std::string_view(buffer_).substr(start, nl - start));
    start = nl + 1;
  }
  buffer_.erase(0, start);
}

void SseLineParser::finish() {
  if (!buffer_.empty()) line(buffer_);
  buffer_.clear();
}

void SseLineParser::line(std::string_view l) {
  if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  if (!l.starts_with("data:")) return;
  l.remove_prefix(5);
  if (!l.empty() && l.front() == ' ') l.remove_prefix(1);
  on_data_(l);
}

std::string generate(const LlmEndpointConfig& cfg, std::string_view prompt,
                     const GenerateOverrides& overrides, const CallContext& ctx) {
  cfg.validate();
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    fail(ErrorCode::kMissingApiKey, "environment variable " + cfg.api_key_env + " is not set");
  }

  auto url = split_url(cfg.base_url);
  Json body = {
      {"model", overrides.model.value_or(cfg.model)},
      {"temperature", overrides.temperature.value_or(cfg.temperature)},
      {"stream", true},
      {"messages", Json::array({Json{{"role", "user"}, {"content", std::string(prompt)}}})},
  };
  const std::string payload = body.dump();

  std::string last_failure;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) backoff(cfg.retry_backoff_ms << (attempt - 1), ctx);
    if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");

    httplib::Client cli(url.origin);
    auto secs = cfg.timeout_ms / 1000;
    auto usecs = (cfg.timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    httplib::Request req;
    req.method = "POST";
    req.path = url.path + "/chat/completions";
    req.headers = {{"Authorization", std::string("Bearer ") + key},
                   {"Accept", "text/event-stream"}};
    req.set_header("Content-Type", "application/json");
    req.body = payload;

    int status = 0;
    bool emitted = false;
    bool saw_data = false;
    std::string text;
    std::string raw;
    std::string remote_error;
    SseLineParser parser([&](std::string_view data) {
      saw_data = true;
      if (data == "[DONE]") return;
      Json event = Json::parse(data, nullptr, false);
      if (event.is_discarded()) return;
      if (event.contains("error")) {
        remote_error = event["error"].dump();
        return;
      }
      const auto& choices = event.value("choices", Json::array());
      if (choices.empty()) return;
      const auto& delta = choices[0].value("delta", Json::object());
      auto piece = delta.value("content", std::string());
      if (piece.empty()) return;
      text += piece;
      emitted = true;
      ctx.emit({piece, false});
    });

    req.response_handler = [&](const httplib::Response& r) {
      status = r.status;
      return true;
    };
    req.content_receiver = [&](const char* data, size_t n, uint64_t, uint64_t) {
      if (ctx.cancelled()) return false;
      if (!is_success(status)) {
        raw.append(data, n);
        return true;
      }
      raw.append(data, n);
      parser.feed(std::string_view(data, n));
      return !ctx.cancelled() && remote_error.empty();
    };

    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    bool ok = cli.send(req, res, err);
    if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");
    if (!remote_error.empty()) fail(ErrorCode::kRemoteError, remote_error);

    if (!ok) {
      last_failure = "POST " + cfg.base_url + "/chat/completions: " + httplib::to_string(err);
      if (emitted) fail(ErrorCode::kTransportError, last_failure + " (mid-stream)");
      continue;
    }
    if (!is_success(status)) {
      last_failure = "HTTP " + std::to_string(status) + ": " + raw;
      if (status >= 500) continue;
      fail(ErrorCode::kRemoteError, last_failure);
    }

    parser.finish();
    if (!saw_data) {
      // Endpoint ignored stream=true and answered with a single JSON body.
      Json reply = Json::parse(raw, nullptr, false);
      if (reply.is_discarded()) fail(ErrorCode::kRemoteError, "unparseable reply: " + raw);
      try {
        text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const Json::exception&) {
        fail(ErrorCode::kRemoteError, "reply without choices[0].message.content: " + raw);
      }
      if (!text.empty()) ctx.emit({text, false});
    }
    ctx.emit({"", true});
    return text;
  }
  if (last_failure.starts_with("HTTP")) fail(ErrorCode::kRemoteError, last_failure);
  fail(ErrorCode::kTransportError, last_failure);
}

}  // namespace crskit
