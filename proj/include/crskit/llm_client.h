#pragma once

// Streaming chat-completion client:
//
//   POST {base_url}/chat/completions
//   {"model": ..., "temperature": ..., "stream": true,
//    "messages": [{"role": "user", "content": <prompt>}]}
//
// The reply is an event stream of `data: {json}` lines ending with
// `data: [DONE]`; each JSON carries choices[0].delta.content.

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "crskit/module.h"

namespace crskit {

struct LlmEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_ms = 30000;
  int max_retries = 2;
  double temperature = 0.7;
  int retry_backoff_ms = 500;  // doubled after every failed attempt

  void validate() const;
  Json to_json() const;
  static LlmEndpointConfig from_json(const Json& j);
};

struct GenerateOverrides {
  std::optional<std::string> model;
  std::optional<double> temperature;
};

// Incremental parser for `data:` lines of an event stream.
class SseLineParser {
 public:
  explicit SseLineParser(std::function<void(std::string_view payload)> on_data)
      : on_data_(std::move(on_data)) {}

  void feed(std::string_view bytes);
  void finish();  // flushes a trailing line without newline

 private:
  void line(std::string_view l);

  std::function<void(std::string_view)> on_data_;
  std::string buffer_;
};

// Streams the completion for `prompt`, emitting every content delta through
// ctx and returning the assembled text. Throws kMissingApiKey (before any
// connection) when the key variable is unset or empty, kTransportError,
// kRemoteError (non-2xx, body in the message) or kCancelled.
//
// Transport failures and 5xx replies are retried up to max_retries times with
// exponential backoff, but only while no content has been emitted yet.
std::string generate(const LlmEndpointConfig& cfg, std::string_view prompt,
                     const GenerateOverrides& overrides, const CallContext& ctx);

}  // namespace crskit
